"""Channel and spatial gating over (C, T, F) feature maps.

Channel gate: global max- and average-pool over every (t, f) position give
two length-C vectors; one shared 1-D conv (same padding along the channel
axis) maps each, the gates are the sigmoid of their sum.

Spatial gate: max- and average-pool across channels give two T x F maps,
stacked and mapped by a single 2-D conv, again through a sigmoid.

Both gates are applied multiplicatively; :class:`DualAttention` chains them
(channel first).  With all conv parameters zero each sigmoid sits at 0.5, so
the chained module scales its input by exactly 1/4 — a fixed point the tests
pin down.
"""

from __future__ import annotations

import numpy as np

from . import autodiff as ad
from .nn import Module, Parameter, uniform_init


class ChannelAttention(Module):
    """Per-channel sigmoid gate from global pooling; one conv shared by the
    max and average branches."""

    def __init__(self, kernel=3, *, rng, dtype=np.float32):
        super().__init__()
        if kernel % 2 == 0:
            raise ValueError(f"channel attention kernel must be odd, got {kernel}")
        self.kernel = kernel
        self.weight = Parameter(uniform_init(rng, (kernel, 1), kernel, dtype))
        self.bias = Parameter(np.zeros(1, dtype=dtype))

    def _conv(self, v):
        # single-channel conv along the channel axis via (B=1, L=C, D=1)
        c = v.data.shape[0]
        y = ad.depthwise_conv1d(ad.reshape(v, (1, c, 1)), self.weight, self.bias)
        return ad.reshape(y, (c,))

    def gate(self, e):
        mx = ad.reduce_max(e, axis=(1, 2))
        av = e.mean(axis=(1, 2))
        return ad.sigmoid(ad.add(self._conv(mx), self._conv(av)))

    def forward(self, e):
        return apply_channel_gate(e, self.gate(e))


class SpatialAttention(Module):
    """Per-position sigmoid gate from cross-channel pooling."""

    def __init__(self, kernel=(7, 7), *, rng, dtype=np.float32):
        super().__init__()
        kt, kf = kernel
        if kt % 2 == 0 or kf % 2 == 0:
            raise ValueError(f"spatial attention kernel must be odd, got {kernel}")
        self.kernel = (kt, kf)
        self.weight = Parameter(uniform_init(rng, (1, 2, kt, kf), 2 * kt * kf, dtype))
        self.bias = Parameter(np.zeros(1, dtype=dtype))

    def gate(self, e):
        mx = ad.reduce_max(e, axis=0, keepdims=True)
        av = e.mean(axis=0, keepdims=True)
        pooled = ad.concat([mx, av], axis=0)
        return ad.sigmoid(ad.conv2d(pooled, self.weight, self.bias))

    def forward(self, e):
        return apply_spatial_gate(e, self.gate(e))


def apply_channel_gate(e, gate):
    c = e.data.shape[0]
    if gate.data.shape != (c,):
        raise ValueError(
            f"channel gate length {gate.data.shape} does not match C={c}")
    return ad.mul(e, ad.reshape(gate, (c, 1, 1)))


def apply_spatial_gate(e, gate):
    _, t, f = e.data.shape
    if gate.data.shape not in ((1, t, f), (t, f)):
        raise ValueError(
            f"spatial gate shape {gate.data.shape} does not match T x F = {t} x {f}")
    if gate.data.ndim == 2:
        gate = ad.reshape(gate, (1, t, f))
    return ad.mul(e, gate)


class DualAttention(Module):
    """Channel gate, then spatial gate computed on the channel-gated map."""

    def __init__(self, channel_kernel=3, spatial_kernel=(7, 7), *,
                 rng, dtype=np.float32):
        super().__init__()
        self.channel = ChannelAttention(channel_kernel, rng=rng, dtype=dtype)
        self.spatial = SpatialAttention(spatial_kernel, rng=rng, dtype=dtype)

    def forward(self, e):
        gated = self.channel(e)
        return self.spatial(gated)
