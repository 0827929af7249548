"""Conformer blocks and the dual-path arrangement over a (C, T, F) grid.

A conformer block is the macaron sandwich: half-step feed-forward,
multi-head self-attention, a depthwise-convolution module, a second
half-step feed-forward, and a closing layer norm.  All norms are pre-norms,
every stage carries its own residual, attention is full (non-causal) with no
positional encoding, and the nonlinearity throughout is SMU.

:class:`DualPathConformer` runs one block along time (each frequency band is
a sequence, weights shared across bands) and a second block along frequency
(each frame is a sequence, shared across frames).  Sharing weights across the
batched axis makes each stage exactly equivariant to permutations of that
axis — the property the tests pin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .blocks import LayerNorm, Linear, Smu
from .nn import Module, Parameter


@dataclass(frozen=True)
class ConformerConfig:
    d_model: int = 64
    heads: int = 4
    ffn_expansion: int = 4
    depthwise_kernel: int = 31

    def __post_init__(self):
        if self.d_model % self.heads != 0:
            raise ValueError(
                f"d_model={self.d_model} not divisible by heads={self.heads}")
        if self.depthwise_kernel % 2 == 0:
            raise ValueError(
                f"depthwise kernel must be odd, got {self.depthwise_kernel}")


class Mhsa(Module):
    """Pre-norm multi-head scaled-dot-product self-attention with residual.

    Input (B, L, D).  ``forward(..., return_weights=True)`` also hands back
    the (B, heads, L, L) attention matrix as an ndarray for inspection.
    """

    def __init__(self, d_model, heads, *, rng, dtype=np.float32):
        super().__init__()
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        self.norm = LayerNorm(d_model, axis=-1, dtype=dtype)
        self.wq = Linear(d_model, d_model, rng=rng, dtype=dtype)
        self.wk = Linear(d_model, d_model, rng=rng, dtype=dtype)
        self.wv = Linear(d_model, d_model, rng=rng, dtype=dtype)
        self.wo = Linear(d_model, d_model, rng=rng, dtype=dtype)

    def _split(self, x, b, l):
        return ad.transpose(ad.reshape(x, (b, l, self.heads, self.d_head)),
                            (0, 2, 1, 3))

    def forward(self, x, return_weights=False):
        if x.data.shape[-1] != self.d_model:
            raise ValueError(
                f"mhsa expects d_model={self.d_model}, got {x.data.shape[-1]}")
        b, l, _ = x.data.shape
        xn = self.norm(x)
        q = self._split(self.wq(xn), b, l)
        k = self._split(self.wk(xn), b, l)
        v = self._split(self.wv(xn), b, l)
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))),
                        1.0 / np.sqrt(self.d_head))
        att = ad.softmax(scores, axis=-1)
        ctx = ad.matmul(att, v)
        ctx = ad.reshape(ad.transpose(ctx, (0, 2, 1, 3)), (b, l, self.d_model))
        out = ad.add(x, self.wo(ctx))
        if return_weights:
            return out, att.data
        return out


class FeedForward(Module):
    """Pre-norm two-layer MLP with SMU, added back at half strength."""

    def __init__(self, d_model, expansion, *, rng, dtype=np.float32):
        super().__init__()
        self.norm = LayerNorm(d_model, axis=-1, dtype=dtype)
        self.lin1 = Linear(d_model, expansion * d_model, rng=rng, dtype=dtype)
        self.act = Smu(dtype=dtype)
        self.lin2 = Linear(expansion * d_model, d_model, rng=rng, dtype=dtype)

    def forward(self, x):
        branch = self.lin2(self.act(self.lin1(self.norm(x))))
        return ad.add(x, ad.mul(branch, 0.5))


class ConvModule(Module):
    """Pre-norm pointwise-GLU-depthwise convolution stage with residual.

    pointwise to 2D -> GLU to D -> depthwise 1-D over the sequence ->
    LayerNorm -> SMU -> pointwise to D -> add input.
    """

    def __init__(self, d_model, depthwise_kernel, *, rng, dtype=np.float32):
        super().__init__()
        if depthwise_kernel % 2 == 0:
            raise ValueError(
                f"depthwise kernel must be odd, got {depthwise_kernel}")
        self.d_model = d_model
        self.norm = LayerNorm(d_model, axis=-1, dtype=dtype)
        self.pw1 = Linear(d_model, 2 * d_model, rng=rng, dtype=dtype)
        bound = 1.0 / np.sqrt(depthwise_kernel)
        self.dw_weight = Parameter(
            rng.uniform(-bound, bound, (depthwise_kernel, d_model)).astype(dtype))
        self.dw_bias = Parameter(np.zeros(d_model, dtype=dtype))
        self.dw_norm = LayerNorm(d_model, axis=-1, dtype=dtype)
        self.act = Smu(dtype=dtype)
        self.pw2 = Linear(d_model, d_model, rng=rng, dtype=dtype)

    def forward(self, x):
        d = self.d_model
        y = self.pw1(self.norm(x))
        lin = ad.narrow(y, 2, 0, d)
        gate = ad.narrow(y, 2, d, d)
        y = ad.mul(lin, ad.sigmoid(gate))
        y = ad.depthwise_conv1d(y, self.dw_weight, self.dw_bias)
        y = self.pw2(self.act(self.dw_norm(y)))
        return ad.add(x, y)


class ConformerBlock(Module):
    def __init__(self, cfg: ConformerConfig, *, rng, dtype=np.float32):
        super().__init__()
        self.ffn1 = FeedForward(cfg.d_model, cfg.ffn_expansion, rng=rng, dtype=dtype)
        self.mhsa = Mhsa(cfg.d_model, cfg.heads, rng=rng, dtype=dtype)
        self.conv = ConvModule(cfg.d_model, cfg.depthwise_kernel, rng=rng, dtype=dtype)
        self.ffn2 = FeedForward(cfg.d_model, cfg.ffn_expansion, rng=rng, dtype=dtype)
        self.final_norm = LayerNorm(cfg.d_model, axis=-1, dtype=dtype)

    def forward(self, x):
        x = self.ffn1(x)
        x = self.mhsa(x)
        x = self.conv(x)
        x = self.ffn2(x)
        return self.final_norm(x)


class DualPathConformer(Module):
    """Intra block over time per frequency band, inter block over frequency
    per frame; both on a (C, T, F) map with C as the model width."""

    def __init__(self, cfg: ConformerConfig, *, rng, dtype=np.float32):
        super().__init__()
        self.cfg = cfg
        self.intra = ConformerBlock(cfg, rng=rng, dtype=dtype)
        self.inter = ConformerBlock(cfg, rng=rng, dtype=dtype)

    def _check(self, p):
        if p.data.shape[0] != self.cfg.d_model:
            raise ValueError(
                f"dual-path expects {self.cfg.d_model} channels, "
                f"got {p.data.shape[0]}")

    def intra_forward(self, p):
        """Time modeling: one sequence per frequency band, weights shared
        across bands — hence exactly equivariant to permutations of F."""
        self._check(p)
        x = ad.transpose(p, (2, 1, 0))  # (F, T, C)
        return ad.transpose(self.intra(x), (2, 1, 0))

    def inter_forward(self, p):
        """Frequency modeling: one sequence per frame, weights shared across
        frames — hence exactly equivariant to permutations of T."""
        self._check(p)
        x = ad.transpose(p, (1, 2, 0))  # (T, F, C)
        return ad.transpose(self.inter(x), (2, 0, 1))

    def forward(self, p):
        return self.inter_forward(self.intra_forward(p))
