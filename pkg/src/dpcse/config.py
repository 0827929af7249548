"""Run configuration: presets, flat key=value config files, overrides.

A run is fully described by a flat string-to-string mapping with dotted
keys (``stft.hop``, ``model.enc_channels``, ``train.lr0``, ``loss.beta``).
That mapping is what config files hold, what ``--set`` overrides patch,
and what checkpoints echo, so "same config" is a dictionary comparison.
Precedence: command-line overrides > config file > preset.

The ``DPCSE_CONFIG`` environment variable supplies a default config file
path when no ``--config`` flag is given.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

from .loss import TF_L1_MODES, LossConfig
from .model import MASK_MODES, ModelConfig
from .stft import StftConfig
from .training import TrainConfig

ENV_CONFIG = "DPCSE_CONFIG"


@dataclass(frozen=True)
class RunConfig:
    model: ModelConfig
    train: TrainConfig
    loss: LossConfig


# -- presets -------------------------------------------------------------------

def _full() -> RunConfig:
    stft = StftConfig(win_len=400, hop=100, fft_len=512)
    return RunConfig(
        model=ModelConfig(stft=stft, enc_channels=128, dpcf_channels=64,
                          n_dpcf=4, heads=4, ffn_expansion=4,
                          depthwise_kernel=31, dcb_stages=4),
        train=TrainConfig(epochs=150, lr0=5e-4, decay_factor=0.95,
                          decay_every=4, weight_decay=1e-2, batch_size=2,
                          segment_seconds=4.0),
        loss=LossConfig(beta=0.4, stft=stft),
    )


def _desk() -> RunConfig:
    stft = StftConfig(win_len=256, hop=128, fft_len=256)
    return RunConfig(
        model=ModelConfig(stft=stft, enc_channels=48, dpcf_channels=32,
                          n_dpcf=2, heads=2, ffn_expansion=2,
                          depthwise_kernel=7, dcb_stages=4),
        train=TrainConfig(epochs=20, lr0=2e-3, decay_factor=0.8,
                          decay_every=2, weight_decay=1e-2, batch_size=1,
                          grad_clip=5.0, segment_seconds=0.75),
        loss=LossConfig(beta=0.4, stft=stft),
    )


def _micro() -> RunConfig:
    stft = StftConfig(win_len=128, hop=64, fft_len=128)
    return RunConfig(
        model=ModelConfig(stft=stft, enc_channels=8, dpcf_channels=4,
                          n_dpcf=1, heads=2, ffn_expansion=2,
                          depthwise_kernel=7, dcb_stages=4),
        train=TrainConfig(epochs=10, lr0=1e-3, decay_factor=0.95,
                          decay_every=4, weight_decay=1e-2, batch_size=2,
                          segment_seconds=0.5),
        loss=LossConfig(beta=0.4, stft=stft),
    )


PRESETS = {"full": _full, "desk": _desk, "micro": _micro}


def preset(name: str) -> RunConfig:
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from "
                         f"{sorted(PRESETS)}")
    return PRESETS[name]()


# -- flat representation -------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if value is None:
        return "none"
    if isinstance(value, tuple):
        return "x".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def to_flat(cfg: RunConfig) -> dict[str, str]:
    """Stringify every field under its dotted key, in sorted key order."""
    stft = cfg.model.stft
    raw = {
        "stft.win_len": stft.win_len, "stft.hop": stft.hop,
        "stft.fft_len": stft.fft_len, "stft.window": stft.window,
        "model.enc_channels": cfg.model.enc_channels,
        "model.dpcf_channels": cfg.model.dpcf_channels,
        "model.n_dpcf": cfg.model.n_dpcf,
        "model.heads": cfg.model.heads,
        "model.ffn_expansion": cfg.model.ffn_expansion,
        "model.depthwise_kernel": cfg.model.depthwise_kernel,
        "model.dcb_stages": cfg.model.dcb_stages,
        "model.dcb_kernel": cfg.model.dcb_kernel,
        "model.channel_attn_kernel": cfg.model.channel_attn_kernel,
        "model.spatial_attn_kernel": cfg.model.spatial_attn_kernel,
        "model.mask_mode": cfg.model.mask_mode,
        "model.use_dcb": cfg.model.use_dcb,
        "model.use_attention": cfg.model.use_attention,
        "model.tie_decoder": cfg.model.tie_decoder,
        "model.dtype": cfg.model.dtype,
        "train.epochs": cfg.train.epochs,
        "train.lr0": cfg.train.lr0,
        "train.decay_factor": cfg.train.decay_factor,
        "train.decay_every": cfg.train.decay_every,
        "train.weight_decay": cfg.train.weight_decay,
        "train.batch_size": cfg.train.batch_size,
        "train.seed": cfg.train.seed,
        "train.grad_clip": cfg.train.grad_clip,
        "train.segment_seconds": cfg.train.segment_seconds,
        "loss.beta": cfg.loss.beta,
        "loss.tf_l1_mode": cfg.loss.tf_l1_mode,
    }
    return {k: _fmt(v) for k, v in sorted(raw.items())}


def _parse_int(key, s):
    try:
        return int(s)
    except ValueError:
        raise ValueError(f"{key}: expected an integer, got {s!r}") from None


def _parse_float(key, s):
    try:
        return float(s)
    except ValueError:
        raise ValueError(f"{key}: expected a number, got {s!r}") from None


def _parse_bool(key, s):
    low = s.lower()
    if low in ("true", "1", "yes"):
        return True
    if low in ("false", "0", "no"):
        return False
    raise ValueError(f"{key}: expected true/false, got {s!r}")


def _parse_pair(key, s):
    parts = s.lower().split("x")
    if len(parts) != 2:
        raise ValueError(f"{key}: expected KTxKF like 3x3, got {s!r}")
    return (_parse_int(key, parts[0]), _parse_int(key, parts[1]))


def _parse_optional_float(key, s):
    if s.lower() == "none":
        return None
    return _parse_float(key, s)


_PARSERS = {
    "stft.win_len": _parse_int, "stft.hop": _parse_int,
    "stft.fft_len": _parse_int, "stft.window": lambda k, s: s,
    "model.enc_channels": _parse_int, "model.dpcf_channels": _parse_int,
    "model.n_dpcf": _parse_int, "model.heads": _parse_int,
    "model.ffn_expansion": _parse_int, "model.depthwise_kernel": _parse_int,
    "model.dcb_stages": _parse_int, "model.dcb_kernel": _parse_pair,
    "model.channel_attn_kernel": _parse_int,
    "model.spatial_attn_kernel": _parse_pair,
    "model.mask_mode": lambda k, s: s, "model.use_dcb": _parse_bool,
    "model.use_attention": _parse_bool, "model.tie_decoder": _parse_bool,
    "model.dtype": lambda k, s: s,
    "train.epochs": _parse_int, "train.lr0": _parse_float,
    "train.decay_factor": _parse_float, "train.decay_every": _parse_int,
    "train.weight_decay": _parse_float, "train.batch_size": _parse_int,
    "train.seed": _parse_int, "train.grad_clip": _parse_optional_float,
    "train.segment_seconds": _parse_float,
    "loss.beta": _parse_float, "loss.tf_l1_mode": lambda k, s: s,
}


def from_flat(flat: dict[str, str]) -> RunConfig:
    """Build a validated RunConfig from a complete flat mapping."""
    unknown = sorted(set(flat) - set(_PARSERS))
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    missing = sorted(set(_PARSERS) - set(flat))
    if missing:
        raise ValueError(f"config is missing keys: {missing}")
    vals = {k: _PARSERS[k](k, flat[k]) for k in _PARSERS}
    stft = StftConfig(win_len=vals["stft.win_len"], hop=vals["stft.hop"],
                      fft_len=vals["stft.fft_len"], window=vals["stft.window"])
    model = ModelConfig(
        stft=stft,
        enc_channels=vals["model.enc_channels"],
        dpcf_channels=vals["model.dpcf_channels"],
        n_dpcf=vals["model.n_dpcf"], heads=vals["model.heads"],
        ffn_expansion=vals["model.ffn_expansion"],
        depthwise_kernel=vals["model.depthwise_kernel"],
        dcb_stages=vals["model.dcb_stages"],
        dcb_kernel=vals["model.dcb_kernel"],
        channel_attn_kernel=vals["model.channel_attn_kernel"],
        spatial_attn_kernel=vals["model.spatial_attn_kernel"],
        mask_mode=vals["model.mask_mode"],
        use_dcb=vals["model.use_dcb"],
        use_attention=vals["model.use_attention"],
        tie_decoder=vals["model.tie_decoder"],
        dtype=vals["model.dtype"],
    )
    train = TrainConfig(
        epochs=vals["train.epochs"], lr0=vals["train.lr0"],
        decay_factor=vals["train.decay_factor"],
        decay_every=vals["train.decay_every"],
        weight_decay=vals["train.weight_decay"],
        batch_size=vals["train.batch_size"], seed=vals["train.seed"],
        grad_clip=vals["train.grad_clip"],
        segment_seconds=vals["train.segment_seconds"],
    )
    loss = LossConfig(beta=vals["loss.beta"], stft=stft,
                      tf_l1_mode=vals["loss.tf_l1_mode"])
    return RunConfig(model=model, train=train, loss=loss)


# -- config files and overrides --------------------------------------------------

def parse_config_file(path) -> dict[str, str]:
    """Read ``key = value`` lines; ``#`` starts a comment, blanks are skipped."""
    path = Path(path)
    out = {}
    for ln, line in enumerate(path.read_text().splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{ln}: expected 'key = value', "
                             f"got {line.strip()!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if not key or not value:
            raise ValueError(f"{path}:{ln}: empty key or value")
        if key in out:
            raise ValueError(f"{path}:{ln}: duplicate key {key!r}")
        out[key] = value
    return out


def parse_override(text: str) -> tuple[str, str]:
    """Parse one ``--set key=value`` argument."""
    if "=" not in text:
        raise ValueError(f"override {text!r} is not of the form key=value")
    key, value = (part.strip() for part in text.split("=", 1))
    if not key or not value:
        raise ValueError(f"override {text!r} has an empty key or value")
    return key, value


def load_run_config(preset_name: str | None = None, config_path=None,
                    overrides: dict[str, str] | None = None
                    ) -> tuple[RunConfig, dict[str, str]]:
    """Resolve preset -> file -> overrides; returns (config, flat echo)."""
    flat = to_flat(preset(preset_name or "full"))
    if config_path is None:
        env = os.environ.get(ENV_CONFIG)
        if env:
            if not Path(env).exists():
                raise ValueError(f"{ENV_CONFIG} points to a missing file: {env}")
            config_path = env
    if config_path is not None:
        for key, value in parse_config_file(config_path).items():
            if key not in _PARSERS:
                raise ValueError(f"{config_path}: unknown config key {key!r}")
            flat[key] = value
    for key, value in (overrides or {}).items():
        if key not in _PARSERS:
            raise ValueError(f"unknown config key {key!r}")
        flat[key] = value
    cfg = from_flat(flat)
    return cfg, to_flat(cfg)


def model_keys_differ(a: dict[str, str], b: dict[str, str]) -> list[str]:
    """Model-shape keys (stft.* and model.*) whose values differ."""
    keys = [k for k in _PARSERS if k.startswith(("stft.", "model."))]
    return sorted(k for k in keys if a.get(k) != b.get(k))
