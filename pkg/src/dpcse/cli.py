"""Command-line interface: synth-data, train, enhance, evaluate, inspect.

Exit codes are uniform across commands: 0 success, 1 runtime failure
(missing files, checkpoint/config mismatch, divergence), 2 bad flags or
unresolvable configuration.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .checkpoint import CheckpointError, load_checkpoint
from .config import (
    PRESETS,
    from_flat,
    load_run_config,
    model_keys_differ,
    parse_override,
)
from .data import Manifest, load_pair, load_wav, save_wav, synth_corpus
from .metrics import MetricReport, UtteranceScore, si_sdr, snr, stoi
from .model import SpeechEnhancer
from .training import TrainingDivergedError, train


class CliError(RuntimeError):
    """Runtime failure (exit 1)."""


class ConfigError(ValueError):
    """Unresolvable configuration (exit 2, like bad flags)."""


def _add_config_flags(sub):
    sub.add_argument("--preset", choices=sorted(PRESETS),
                     help="configuration preset (default: full)")
    sub.add_argument("--config", help="flat key=value config file")
    sub.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                     help="override one config entry (repeatable)")


def _config_flags_used(args):
    return bool(args.preset or args.config or args.set)


def _resolve_config(args):
    try:
        overrides = dict(parse_override(s) for s in args.set)
        return load_run_config(args.preset, args.config, overrides)
    except (ValueError, FileNotFoundError) as exc:
        raise ConfigError(str(exc)) from exc


def _model_from_checkpoint(ckpt_path, run_flat=None):
    """Rebuild the trained model from a checkpoint's config echo.

    When the caller resolved a config of its own, its model-shape keys must
    agree with the checkpoint's; any difference is a hard error naming the
    fields.
    """
    arrays, meta = load_checkpoint(ckpt_path)
    ckpt_flat = meta.get("config")
    if ckpt_flat is None:
        raise CliError(f"{ckpt_path}: checkpoint carries no config echo")
    if run_flat is not None:
        diffs = model_keys_differ(ckpt_flat, run_flat)
        if diffs:
            lines = [f"  {key}: checkpoint={ckpt_flat.get(key)} "
                     f"requested={run_flat.get(key)}" for key in diffs]
            raise CliError("checkpoint/config mismatch:\n" + "\n".join(lines))
    cfg = from_flat(ckpt_flat)
    model = SpeechEnhancer(cfg.model, seed=cfg.train.seed)
    model.load_state({k[len("model."):]: v for k, v in arrays.items()
                      if k.startswith("model.")})
    return model, cfg, ckpt_flat


# -- commands -------------------------------------------------------------------

def cmd_synth_data(args) -> int:
    path = synth_corpus(args.n, seed=args.seed, out_dir=args.out,
                        split=args.split, seconds=args.seconds)
    print(path)
    return 0


def cmd_train(args) -> int:
    cfg, flat = _resolve_config(args)
    train_man = Manifest.load(args.train_manifest)
    val_man = (Manifest.load(args.val_manifest) if args.val_manifest
               else train_man)
    model = SpeechEnhancer(cfg.model, seed=cfg.train.seed)
    history = train(model, train_man, val_man, cfg.train, cfg.loss,
                    args.out, resume=args.resume,
                    extra_meta={"config": flat})
    if history["val_loss"]:
        print(f"final val loss {history['val_loss'][-1]:.6f} "
              f"after epoch {history['epochs'][-1]}")
    return 0


def cmd_enhance(args) -> int:
    run_flat = _resolve_config(args)[1] if _config_flags_used(args) else None
    model, cfg, _ = _model_from_checkpoint(args.ckpt, run_flat)
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def process(name, wave):
        speech, noise, _ = model.enhance(wave)
        save_wav(out_dir / f"{name}_enhanced.wav", speech)
        if args.save_noise:
            save_wav(out_dir / f"{name}_noise.wav", noise)

    in_path = Path(args.input)
    if in_path.suffix == ".jsonl":
        manifest = Manifest.load(in_path)
        for rec in manifest.records:
            mixture, _, _ = load_pair(manifest, rec)
            process(rec.id, mixture)
        print(f"enhanced {len(manifest)} utterances into {out_dir}")
    else:
        process(in_path.stem, load_wav(in_path))
        print(f"enhanced {in_path} into {out_dir}")
    return 0


def cmd_evaluate(args) -> int:
    if not args.oracle and not args.ckpt:
        raise CliError("evaluate needs --ckpt (or --oracle)")
    model = None
    if not args.oracle:
        run_flat = _resolve_config(args)[1] if _config_flags_used(args) else None
        model, _, _ = _model_from_checkpoint(args.ckpt, run_flat)
    manifest = Manifest.load(args.manifest)
    rows = []
    for rec in manifest.records:
        mixture, clean, _ = load_pair(manifest, rec)
        if args.oracle:
            est = clean.samples
        else:
            est = model.enhance(mixture)[0].samples
        rows.append(UtteranceScore(
            id=rec.id,
            snr_in=snr(clean.samples, mixture.samples),
            snr_out=snr(clean.samples, est),
            si_sdr_in=si_sdr(clean.samples, mixture.samples),
            si_sdr_out=si_sdr(clean.samples, est),
            stoi_in=stoi(clean.samples, mixture.samples),
            stoi_out=stoi(clean.samples, est),
        ))
    report = MetricReport(rows)
    report.write(args.report)
    print(json.dumps(report.summary(), sort_keys=True))
    return 0


def cmd_inspect(args) -> int:
    if args.ckpt:
        model, cfg, flat = _model_from_checkpoint(args.ckpt)
    else:
        cfg, flat = _resolve_config(args)
        model = SpeechEnhancer(cfg.model, seed=cfg.train.seed)
    breakdown = model.param_breakdown()
    print("configuration:")
    for key, value in flat.items():
        print(f"  {key} = {value}")
    print("parameters:")
    for child, count in breakdown["children"].items():
        section = model._SECTIONS[child]
        print(f"  {section:<12} {child:<12} {count:>10,}")
    for section, count in breakdown["sections"].items():
        print(f"  {section:<25} {count:>10,}")
    print(f"  {'total':<25} {breakdown['total']:>10,}")
    stft_cfg = cfg.model.stft
    frames = stft_cfg.frame_count(16000)
    print(f"stft geometry: {stft_cfg.n_bins} bins, {frames} frames per "
          f"1.0 s at 16 kHz")
    return 0


# -- parser ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpcse",
        description="Speech enhancement with dual-path conformers over "
                    "STFT features: corpus synthesis, training, enhancement, "
                    "evaluation, and model inspection.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth-data", help="generate a synthetic corpus")
    p.add_argument("--n", type=int, required=True, help="number of utterances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output corpus directory")
    p.add_argument("--split", choices=["train", "test"], default="train")
    p.add_argument("--seconds", type=float, default=2.0,
                   help="nominal utterance duration")
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("train", help="train a model")
    _add_config_flags(p)
    p.add_argument("--train-manifest", required=True)
    p.add_argument("--val-manifest",
                   help="defaults to the training manifest when omitted")
    p.add_argument("--out", required=True, help="run directory for "
                   "checkpoints and the training log")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("enhance", help="denoise WAV files with a checkpoint")
    _add_config_flags(p)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True,
                   help="a WAV file or a corpus manifest (.jsonl)")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--save-noise", action="store_true",
                   help="also write the noise estimate per input")
    p.set_defaults(func=cmd_enhance)

    p = sub.add_parser("evaluate", help="score a checkpoint on a corpus")
    _add_config_flags(p)
    p.add_argument("--ckpt")
    p.add_argument("--manifest", required=True)
    p.add_argument("--report", required=True, help="JSONL report path")
    p.add_argument("--oracle", action="store_true",
                   help="score the clean reference as the estimate "
                        "(sanity ceiling, no model)")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("inspect", help="print parameter counts and config")
    _add_config_flags(p)
    p.add_argument("--ckpt", help="inspect a checkpoint instead of a config")
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CliError, CheckpointError, TrainingDivergedError, ValueError,
            RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
