"""The full enhancement network: encode, refine along both axes, mask.

The mixture spectrogram (2, T, F) — real and imaginary planes as channels —
passes through three stages:

* **encoder**: 1x1 conv to ``enc_channels``, norm+SMU, a dense dilated conv
  block, then channel and spatial attention;
* **enhancement**: 1x1 down to ``dpcf_channels``, a stack of dual-path
  conformers (frequency-axis pass, then time-axis pass), 1x1 back up, and a
  gated 1x1 conv;
* **decoder**: the same block/attention shape as the encoder, ending in a
  1x1 head that emits complex mask planes.

Masks multiply the mixture spectrogram complex-wise; inverse STFT returns
the estimates to the time domain.  ``mask_mode`` picks between separate
speech and noise masks (4 planes) and a speech-only mask whose noise
estimate is the residual mixture - speech (2 planes).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .attention import DualAttention
from .autodiff import Tensor
from .blocks import Conv2d, DeepConvBlock, GatedConv2d, NormAct, PlainConvStack
from .conformer import ConformerConfig, DualPathConformer
from .nn import Module
from .stft import StftConfig, Waveform, istft_tensor, spec_to_featuremap, stft

MASK_MODES = ("two_masks", "residual_noise")


@dataclass(frozen=True)
class ModelConfig:
    stft: StftConfig = field(default_factory=StftConfig)
    enc_channels: int = 128
    dpcf_channels: int = 64
    n_dpcf: int = 4
    heads: int = 4
    ffn_expansion: int = 4
    depthwise_kernel: int = 31
    dcb_stages: int = 4
    dcb_kernel: tuple = (3, 3)
    channel_attn_kernel: int = 3
    spatial_attn_kernel: tuple = (7, 7)
    mask_mode: str = "two_masks"
    use_dcb: bool = True
    use_attention: bool = True
    tie_decoder: bool = False
    dtype: str = "float32"

    def __post_init__(self):
        if self.mask_mode not in MASK_MODES:
            raise ValueError(f"mask_mode must be one of {MASK_MODES}, "
                             f"got {self.mask_mode!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, got {self.dtype!r}")
        for name in ("enc_channels", "dpcf_channels", "n_dpcf", "heads",
                     "dcb_stages"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def n_mask_planes(self):
        return 4 if self.mask_mode == "two_masks" else 2

    @property
    def np_dtype(self):
        return np.dtype(self.dtype)

    def conformer(self) -> ConformerConfig:
        return ConformerConfig(self.dpcf_channels, self.heads,
                               self.ffn_expansion, self.depthwise_kernel)


@dataclass
class MaskPair:
    """Complex mask planes the decoder produced, for inspection/plotting."""
    speech: np.ndarray
    noise: np.ndarray | None = None


def apply_mask(spec: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Complex-multiply a (T, F) spectrogram by a same-shape complex mask."""
    spec = np.asarray(spec)
    mask = np.asarray(mask)
    if spec.shape != mask.shape:
        raise ValueError(
            f"mask shape {mask.shape} does not match spectrogram {spec.shape}")
    return spec * mask


def _masked_spec(mr, mi, spec_re, spec_im):
    """(mr + i*mi) * (Yr + i*Yi) on tape tensors with constant Y planes."""
    out_re = ad.add(ad.mul(mr, spec_re), ad.mul(ad.mul(mi, spec_im), -1.0))
    out_im = ad.add(ad.mul(mr, spec_im), ad.mul(mi, spec_re))
    return out_re, out_im


class SpeechEnhancer(Module):
    """Complex-mask speech/noise separator over STFT features."""

    def __init__(self, cfg: ModelConfig, seed: int = 0):
        super().__init__()
        self.cfg = cfg
        rng = np.random.default_rng(np.random.SeedSequence([seed]))
        dt = cfg.np_dtype
        C, D = cfg.enc_channels, cfg.dpcf_channels
        block_cls = DeepConvBlock if cfg.use_dcb else PlainConvStack

        # encoder
        self.embed = Conv2d(2, C, (1, 1), rng=rng, dtype=dt)
        self.embed_post = NormAct(C, dtype=dt)
        self.enc_block = block_cls(C, cfg.dcb_stages, cfg.dcb_kernel,
                                   rng=rng, dtype=dt)
        self.enc_attn = (DualAttention(cfg.channel_attn_kernel,
                                       cfg.spatial_attn_kernel,
                                       rng=rng, dtype=dt)
                         if cfg.use_attention else None)

        # enhancement
        self.down = Conv2d(C, D, (1, 1), rng=rng, dtype=dt)
        self.down_post = NormAct(D, dtype=dt)
        self.dpcf = [DualPathConformer(cfg.conformer(), rng=rng, dtype=dt)
                     for _ in range(cfg.n_dpcf)]
        self.up = Conv2d(D, C, (1, 1), rng=rng, dtype=dt)
        self.up_post = NormAct(C, dtype=dt)
        self.gate = GatedConv2d(C, C, rng=rng, dtype=dt)

        # decoder
        if cfg.tie_decoder:
            self.dec_block = self.enc_block
            self.dec_attn = self.enc_attn
        else:
            self.dec_block = block_cls(C, cfg.dcb_stages, cfg.dcb_kernel,
                                       rng=rng, dtype=dt)
            self.dec_attn = (DualAttention(cfg.channel_attn_kernel,
                                           cfg.spatial_attn_kernel,
                                           rng=rng, dtype=dt)
                             if cfg.use_attention else None)
        self.mask_head = Conv2d(C, cfg.n_mask_planes, (1, 1), rng=rng, dtype=dt)

    # -- stages ----------------------------------------------------------

    def encode(self, x):
        u = self.embed_post(self.embed(x))
        u = self.enc_block(u)
        if self.enc_attn is not None:
            u = self.enc_attn(u)
        return u

    def refine(self, u):
        d = self.down_post(self.down(u))
        for block in self.dpcf:
            d = block(d)
        d = self.up_post(self.up(d))
        return self.gate(d)

    def decode(self, d):
        v = self.dec_block(d)
        if self.dec_attn is not None:
            v = self.dec_attn(v)
        return self.mask_head(v)

    # -- end to end ------------------------------------------------------

    def forward(self, mix_samples: np.ndarray):
        """Run the net on raw mixture samples.

        Returns ``(speech_est, noise_est, masks)``; the estimates are tape
        tensors over time-domain samples so a loss can backpropagate all
        the way through the inverse STFT.
        """
        mix = np.asarray(mix_samples, dtype=np.float64)
        wave = Waveform(mix, sample_rate=16000)
        spec = stft(wave, self.cfg.stft)
        n_frames, n_bins = spec.shape
        dt = self.cfg.np_dtype
        spec_re = np.ascontiguousarray(spec.real.astype(dt))
        spec_im = np.ascontiguousarray(spec.imag.astype(dt))

        x = Tensor(np.ascontiguousarray(spec_to_featuremap(spec).astype(dt)))
        planes = self.decode(self.refine(self.encode(x)))

        def plane(i):
            return ad.reshape(ad.narrow(planes, 0, i, 1), (n_frames, n_bins))

        ms_re, ms_im = plane(0), plane(1)
        xr, xi = _masked_spec(ms_re, ms_im, spec_re, spec_im)
        speech = istft_tensor(xr, xi, self.cfg.stft, out_len=len(mix))

        if self.cfg.mask_mode == "two_masks":
            mn_re, mn_im = plane(2), plane(3)
            nr, ni = _masked_spec(mn_re, mn_im, spec_re, spec_im)
            noise = istft_tensor(nr, ni, self.cfg.stft, out_len=len(mix))
            masks = MaskPair(speech=ms_re.data + 1j * ms_im.data,
                             noise=mn_re.data + 1j * mn_im.data)
        else:
            noise = ad.add(ad.mul(speech, -1.0), mix.astype(dt))
            masks = MaskPair(speech=ms_re.data + 1j * ms_im.data)
        return speech, noise, masks

    def enhance(self, wave: Waveform):
        """Inference entry point: waveform in, (speech, noise, masks) out."""
        with ad.no_grad():
            speech, noise, masks = self.forward(wave.samples)
        rate = wave.sample_rate
        return (Waveform(speech.data.astype(np.float64), rate),
                Waveform(noise.data.astype(np.float64), rate),
                masks)

    # -- bookkeeping -----------------------------------------------------

    _SECTIONS = {
        "embed": "encoder", "embed_post": "encoder", "enc_block": "encoder",
        "enc_attn": "encoder",
        "down": "enhancement", "down_post": "enhancement",
        "dpcf": "enhancement", "up": "enhancement", "up_post": "enhancement",
        "gate": "enhancement",
        "dec_block": "decoder", "dec_attn": "decoder", "mask_head": "decoder",
    }

    def param_breakdown(self):
        """Trainable parameter totals per stage and per direct child."""
        sections = {"encoder": 0, "enhancement": 0, "decoder": 0}
        children = {}
        for name, p in self.named_parameters():
            head = name.split(".", 1)[0]
            children[head] = children.get(head, 0) + p.size
            sections[self._SECTIONS[head]] += p.size
        return {"total": sum(children.values()),
                "sections": sections, "children": children}
