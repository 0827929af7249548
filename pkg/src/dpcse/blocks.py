"""Trainable building blocks on (C, T, F) feature maps.

* :class:`Conv2d` — same-size 2-D convolution, optionally time-dilated.
* :class:`LayerNorm` — normalization over one axis with learned affine.
* :class:`Smu` — smooth-maximum activation with a trainable sharpness.
* :class:`GatedConv2d` — 1x1 linear branch gated by a 1x1 sigmoid branch.
* :class:`LightConvBlock` — a stack of dilated conv stages where every stage
  sees the block input concatenated with the previous stage's output; its
  parameter count grows linearly with depth instead of quadratically.
* :class:`DeepConvBlock` — the same stack plus a top-down fusion pass and an
  input skip connection.
* :class:`PlainConvStack` — ablation stand-in: the same depth of dilated
  convs with no cross-stage connections and no skip.

Closed-form parameter counts for the connected blocks live at the bottom so
tests can check the enumerated trainables against arithmetic.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import Module, Parameter, uniform_init


class Conv2d(Module):
    """Same-size 2-D convolution over (C, T, F).

    Any kernel size may be constructed (so counts can be compared across
    hypothetical shapes); the forward pass requires odd kernel dims, which is
    what keeps the output grid aligned with the input.
    """

    def __init__(self, in_ch, out_ch, kernel=(1, 1), dilation=(1, 1), *,
                 rng, dtype=np.float32):
        super().__init__()
        kt, kf = kernel
        self.in_ch = in_ch
        self.out_ch = out_ch
        self.kernel = (kt, kf)
        self.dilation = tuple(dilation)
        fan_in = in_ch * kt * kf
        self.weight = Parameter(uniform_init(rng, (out_ch, in_ch, kt, kf), fan_in, dtype))
        self.bias = Parameter(np.zeros(out_ch, dtype=dtype))

    def forward(self, x):
        return ad.conv2d(x, self.weight, self.bias, self.dilation)


class Linear(Module):
    """Affine map on the last axis: y = x @ weight + bias."""

    def __init__(self, in_dim, out_dim, *, rng, dtype=np.float32):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Parameter(uniform_init(rng, (in_dim, out_dim), in_dim, dtype))
        self.bias = Parameter(np.zeros(out_dim, dtype=dtype))

    def forward(self, x):
        if x.data.shape[-1] != self.in_dim:
            raise ValueError(
                f"linear expects last dim {self.in_dim}, got {x.data.shape[-1]}")
        return ad.add(ad.matmul(x, self.weight), self.bias)


class LayerNorm(Module):
    """Zero-mean/unit-variance over ``axis``, then learned gain and bias.

    For (C, T, F) maps use axis=0 (normalize across channels per position);
    for (B, L, D) sequences use axis=-1.
    """

    def __init__(self, extent, axis, eps=1e-5, *, dtype=np.float32):
        super().__init__()
        self.axis = axis
        self.eps = eps
        self.gain = Parameter(np.ones(extent, dtype=dtype), tag="norm")
        self.bias = Parameter(np.zeros(extent, dtype=dtype), tag="norm")

    def forward(self, x):
        return ad.layer_norm(x, self.gain, self.bias, self.axis, self.eps)


SMU_ALPHA = 0.25


def smu(x, alpha=SMU_ALPHA, mu=1.0):
    """ndarray reference of the smooth-maximum unit.

    f(x) = ((1+a)x + (1-a)·x·erf(mu·(1-a)·x)) / 2 — a smooth approximation
    of max(x, a·x) that sharpens as mu grows and stays differentiable at 0.
    """
    from scipy import special
    x = np.asarray(x)
    return 0.5 * ((1 + alpha) * x + (1 - alpha) * x * special.erf(mu * (1 - alpha) * x))


class Smu(Module):
    """Smooth-maximum activation; sharpness ``mu`` is trainable per site."""

    def __init__(self, alpha=SMU_ALPHA, mu_init=1.0, *, dtype=np.float32):
        super().__init__()
        self.alpha = alpha
        self.mu = Parameter(np.asarray(mu_init, dtype=dtype), tag="activation")

    def forward(self, x):
        a = self.alpha
        gated = ad.mul(x, ad.erf(ad.mul(x, ad.mul(self.mu, 1.0 - a))))
        return ad.mul(ad.add(ad.mul(x, 1.0 + a), ad.mul(gated, 1.0 - a)), 0.5)


class NormAct(Module):
    """The LayerNorm + SMU pair that follows every convolution here."""

    def __init__(self, extent, axis=0, *, dtype=np.float32):
        super().__init__()
        self.norm = LayerNorm(extent, axis, dtype=dtype)
        self.act = Smu(dtype=dtype)

    def forward(self, x):
        return self.act(self.norm(x))


def gated_conv2d(x, lin, gate):
    """Apply ``lin(x) * sigmoid(gate(x))`` after checking branch agreement."""
    if lin.out_ch != gate.out_ch:
        raise ValueError(
            f"gated conv branch widths differ: {lin.out_ch} vs {gate.out_ch}")
    if lin.kernel != (1, 1) or gate.kernel != (1, 1):
        raise ValueError("gated conv branches must both be 1x1")
    return ad.mul(lin(x), ad.sigmoid(gate(x)))


class GatedConv2d(Module):
    def __init__(self, in_ch, out_ch, *, rng, dtype=np.float32):
        super().__init__()
        self.lin = Conv2d(in_ch, out_ch, (1, 1), rng=rng, dtype=dtype)
        self.gate = Conv2d(in_ch, out_ch, (1, 1), rng=rng, dtype=dtype)

    def forward(self, x):
        return gated_conv2d(x, self.lin, self.gate)


def _stage_dilations(stages):
    return [2 ** s for s in range(stages)]


class LightConvBlock(Module):
    """Dilated conv stages, each fed the block input plus its predecessor.

    Stage s applies a (kt, kf) conv with time dilation 2**s — stage 1 reads
    the block input alone, later stages read concat(input, previous) — then
    LayerNorm over channels and SMU.  ``forward`` returns every stage output
    (the top-down pass of :class:`DeepConvBlock` needs them) plus the top.
    """

    def __init__(self, channels, stages=4, kernel=(3, 3), *, rng, dtype=np.float32):
        super().__init__()
        self.channels = channels
        self.stages = stages
        self.convs = [
            Conv2d(channels if s == 0 else 2 * channels, channels, kernel,
                   dilation=(d, 1), rng=rng, dtype=dtype)
            for s, d in enumerate(_stage_dilations(stages))
        ]
        self.post = [NormAct(channels, dtype=dtype) for _ in range(stages)]

    def forward(self, x):
        ys = []
        y = None
        for s in range(self.stages):
            inp = x if s == 0 else ad.concat([x, y], axis=0)
            y = self.post[s](self.convs[s](inp))
            ys.append(y)
        return ys, ys[-1]


class DeepConvBlock(Module):
    """Upward :class:`LightConvBlock` pass, top-down fusion, input skip.

    The downward pass starts from the top stage output and repeatedly fuses
    it with the next stage below (concat -> 1x1 conv -> LayerNorm -> SMU);
    the fully fused map is added to the block input.
    """

    def __init__(self, channels, stages=4, kernel=(3, 3), *, rng, dtype=np.float32):
        super().__init__()
        self.up = LightConvBlock(channels, stages, kernel, rng=rng, dtype=dtype)
        self.fuse_convs = [
            Conv2d(2 * channels, channels, (1, 1), rng=rng, dtype=dtype)
            for _ in range(stages - 1)
        ]
        self.fuse_post = [NormAct(channels, dtype=dtype) for _ in range(stages - 1)]

    def forward(self, x):
        ys, z = self.up(x)
        for i, s in enumerate(range(self.up.stages - 2, -1, -1)):
            z = self.fuse_post[i](self.fuse_convs[i](ad.concat([ys[s], z], axis=0)))
        return ad.add(z, x)


class PlainConvStack(Module):
    """Sequential dilated convs of the same depth, no dense connections."""

    def __init__(self, channels, stages=4, kernel=(3, 3), *, rng, dtype=np.float32):
        super().__init__()
        self.convs = [
            Conv2d(channels, channels, kernel, dilation=(d, 1), rng=rng, dtype=dtype)
            for d in _stage_dilations(stages)
        ]
        self.post = [NormAct(channels, dtype=dtype) for _ in range(stages)]

    def forward(self, x):
        for conv, post in zip(self.convs, self.post):
            x = post(conv(x))
        return x


def _norm_act_params(channels):
    return 2 * channels + 1  # LN gain + bias, SMU sharpness


def light_block_param_count(channels, stages, kernel):
    """Closed-form trainable count of :class:`LightConvBlock`.

    Affine in the stage count: only the first stage reads ``channels``
    inputs, every later stage reads ``2*channels``.
    """
    kt, kf = kernel
    conv_w = channels * channels * kt * kf * (2 * stages - 1)
    conv_b = stages * channels
    return conv_w + conv_b + stages * _norm_act_params(channels)


def dense_block_param_count(channels, stages, kernel):
    """Closed-form trainable count of a classical densely connected block
    (stage s reads the concatenation of the input and all s-1 predecessors),
    at the same width, kernel, and per-stage norm/activation cost.

    Quadratic in the stage count.
    """
    kt, kf = kernel
    conv_w = channels * channels * kt * kf * stages * (stages + 1) // 2
    conv_b = stages * channels
    return conv_w + conv_b + stages * _norm_act_params(channels)


def deep_block_param_count(channels, stages, kernel):
    """Closed-form trainable count of :class:`DeepConvBlock`."""
    fuse = (stages - 1) * (2 * channels * channels + channels
                           + _norm_act_params(channels))
    return light_block_param_count(channels, stages, kernel) + fuse
