"""STFT analysis and ISTFT synthesis with exact-reconstruction windowing.

Conventions (fixed here, relied on everywhere else):

* analysis window: periodic Hann (``rect`` available); frames start at
  sample 0 with no center padding; frame count T = (len - win_len)//hop + 1;
* frames are zero-padded from ``win_len`` to ``fft_len`` and transformed to a
  one-sided spectrum of F = fft_len//2 + 1 bins;
* synthesis is weighted overlap-add: each inverse frame is re-windowed,
  accumulated, and normalized per sample by the summed squared window.  With
  hop dividing win_len this reconstructs every covered sample exactly.

Samples inside the leading/trailing ``win_len - hop`` edge (plus any
requested padding past the covered span) may be uncovered by the window and
are returned as zeros; an uncovered sample anywhere else means the chosen
window genuinely cannot represent the signal and raises.

Both a plain-ndarray API and tape-op variants (for training) are provided;
they share the same kernels, so their outputs are bit-identical.
"""

from __future__ import annotations

import functools
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, _acc, _make, as_tensor, matmul, mul

WINDOWS = ("hann_periodic", "rect")


class SignalTooShortError(ValueError):
    pass


class WindowCoverageError(ValueError):
    pass


@dataclass(frozen=True)
class StftConfig:
    win_len: int = 400
    hop: int = 100
    fft_len: int = 512
    window: str = "hann_periodic"

    def __post_init__(self):
        if not (0 < self.hop <= self.win_len <= self.fft_len):
            raise ValueError(
                f"need 0 < hop <= win_len <= fft_len, got "
                f"hop={self.hop}, win_len={self.win_len}, fft_len={self.fft_len}")
        if self.win_len % self.hop != 0:
            raise ValueError(
                f"win_len={self.win_len} must be divisible by hop={self.hop} "
                "for exact overlap-add reconstruction")
        if self.fft_len % 2 != 0:
            raise ValueError(f"fft_len must be even, got {self.fft_len}")
        if self.window not in WINDOWS:
            raise ValueError(f"unknown window {self.window!r}; choose from {WINDOWS}")

    @property
    def n_bins(self):
        return self.fft_len // 2 + 1

    def frame_count(self, n_samples):
        if n_samples < self.win_len:
            raise SignalTooShortError(
                f"signal too short: {n_samples} samples < one window ({self.win_len})")
        return (n_samples - self.win_len) // self.hop + 1

    def span(self, n_frames):
        """Number of samples covered by ``n_frames`` frames."""
        return (n_frames - 1) * self.hop + self.win_len

    @property
    def edge(self):
        """Width of the leading/trailing region that overlap-add may not cover."""
        return self.win_len - self.hop


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        self.samples = np.asarray(self.samples)
        if self.samples.ndim != 1:
            raise ValueError(f"waveform must be 1-D, got shape {self.samples.shape}")
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("waveform contains non-finite samples")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")

    def __len__(self):
        return self.samples.shape[0]

    @property
    def seconds(self):
        return len(self) / self.sample_rate


def make_window(cfg, dtype=np.float64):
    if cfg.window == "hann_periodic":
        n = np.arange(cfg.win_len, dtype=np.float64)
        w = 0.5 * (1.0 - np.cos(2.0 * np.pi * n / cfg.win_len))
    else:
        w = np.ones(cfg.win_len)
    return w.astype(dtype)


@functools.lru_cache(maxsize=16)
def _dft_matrices(win_len, fft_len, dtype_name):
    """Forward one-sided DFT as two (win_len, F) real matrices.

    X[t, k] = sum_m frame[t, m] * exp(-2πi k m / fft_len), m < win_len
    (trailing zero padding contributes nothing, so columns stop at win_len).
    """
    dtype = np.dtype(dtype_name)
    m = np.arange(win_len)
    k = np.arange(fft_len // 2 + 1)
    ang = 2.0 * np.pi * np.outer(m, k) / fft_len
    cos_m = np.cos(ang).astype(dtype)
    sin_m = (-np.sin(ang)).astype(dtype)
    cos_m.flags.writeable = False
    sin_m.flags.writeable = False
    return cos_m, sin_m


@functools.lru_cache(maxsize=16)
def _idft_matrices(win_len, fft_len, dtype_name):
    """Inverse of the one-sided DFT onto the first win_len samples.

    seg = Xr @ A + Xi @ B where A, B are (F, win_len).  This is the real part
    of the full conjugate-symmetric inverse: interior bins count twice, DC and
    Nyquist once (their imaginary parts multiply sin(0)/sin(πm) and vanish).
    """
    dtype = np.dtype(dtype_name)
    F = fft_len // 2 + 1
    m = np.arange(win_len)
    k = np.arange(F)
    ang = 2.0 * np.pi * np.outer(k, m) / fft_len
    c = np.full(F, 2.0)
    c[0] = 1.0
    c[-1] = 1.0
    a = (c[:, None] * np.cos(ang) / fft_len).astype(dtype)
    b = (-c[:, None] * np.sin(ang) / fft_len).astype(dtype)
    a.flags.writeable = False
    b.flags.writeable = False
    return a, b


def _frame_view(x, cfg, n_frames):
    return np.lib.stride_tricks.sliding_window_view(x, cfg.win_len)[::cfg.hop][:n_frames]


def _synthesis_weights(cfg, n_frames, out_len, dtype):
    """Per-sample inverse overlap-add normalization, zero where uncovered.

    Raises if a zero-envelope sample falls outside the edge/padding regions —
    that means the window leaves interior samples unrepresented.
    """
    full = cfg.span(n_frames)
    if abs(out_len - full) > cfg.win_len:
        raise ValueError(
            f"out_len={out_len} inconsistent with {n_frames} frames "
            f"(covered span {full}, tolerance one window)")
    w2 = make_window(cfg, dtype) ** 2
    env = np.zeros(out_len, dtype=dtype)
    for t in range(n_frames):
        lo = t * cfg.hop
        hi = min(lo + cfg.win_len, out_len)
        if hi > lo:
            env[lo:hi] += w2[: hi - lo]
    uncovered = env == 0.0
    if uncovered.any():
        inside = np.flatnonzero(uncovered)
        bad = inside[(inside >= cfg.edge) & (inside < min(full, out_len) - cfg.edge)]
        if bad.size:
            raise WindowCoverageError(
                f"window does not cover signal: zero overlap-add weight at "
                f"sample {bad[0]} (and {bad.size - 1} more)")
    inv = np.zeros_like(env)
    np.divide(1.0, env, out=inv, where=~uncovered)
    return inv


def stft(wave, cfg=StftConfig()):
    """Transform a :class:`Waveform` to a complex (T, F) spectrogram."""
    x = wave.samples
    n_frames = cfg.frame_count(len(x))
    w = make_window(cfg, x.dtype if x.dtype.kind == "f" else np.float64)
    frames = _frame_view(x.astype(w.dtype, copy=False), cfg, n_frames) * w
    cos_m, sin_m = _dft_matrices(cfg.win_len, cfg.fft_len, w.dtype.name)
    return frames @ cos_m + 1j * (frames @ sin_m)


def istft(spec, cfg=StftConfig(), out_len=None, sample_rate=16000):
    """Invert a complex (T, F) spectrogram to a :class:`Waveform`."""
    spec = np.asarray(spec)
    if spec.ndim != 2 or spec.shape[1] != cfg.n_bins:
        raise ValueError(
            f"spectrogram shape {spec.shape} inconsistent with F={cfg.n_bins}")
    n_frames = spec.shape[0]
    if out_len is None:
        out_len = cfg.span(n_frames)
    dtype = np.float64 if spec.real.dtype.itemsize >= 8 else np.float32
    a, b = _idft_matrices(cfg.win_len, cfg.fft_len, np.dtype(dtype).name)
    segs = spec.real.astype(dtype) @ a + spec.imag.astype(dtype) @ b
    w = make_window(cfg, dtype)
    segs = segs * w
    acc = np.zeros(out_len, dtype=dtype)
    for t in range(n_frames):
        lo = t * cfg.hop
        hi = min(lo + cfg.win_len, out_len)
        if hi > lo:
            acc[lo:hi] += segs[t, : hi - lo]
    out = acc * _synthesis_weights(cfg, n_frames, out_len, dtype)
    return Waveform(out, sample_rate)


def spec_to_featuremap(spec):
    """Pack a complex (T, F) grid as a real (2, T, F) map: ch0=real, ch1=imag."""
    spec = np.asarray(spec)
    return np.stack([spec.real, spec.imag])


def featuremap_to_spec(fm):
    fm = np.asarray(fm)
    if fm.ndim != 3 or fm.shape[0] != 2:
        raise ValueError(f"expected a (2, T, F) feature map, got shape {fm.shape}")
    return fm[0] + 1j * fm[1]


# -- differentiable variants (shared kernels, wrapped as tape ops) ---------------

def _frame_op(x, cfg, n_frames):
    data = _frame_view(x.data, cfg, n_frames).copy()
    hop, win = cfg.hop, cfg.win_len

    def vjp(g):
        gx = np.zeros_like(x.data)
        for t in range(n_frames):
            gx[t * hop: t * hop + win] += g[t]
        _acc(x, gx)
    return _make(data, (x,), vjp)


def _overlap_add_op(segs, cfg, out_len):
    n_frames, win = segs.data.shape
    hop = cfg.hop
    acc = np.zeros(out_len, dtype=segs.data.dtype)
    for t in range(n_frames):
        lo = t * hop
        hi = min(lo + win, out_len)
        if hi > lo:
            acc[lo:hi] += segs.data[t, : hi - lo]

    def vjp(g):
        gs = np.zeros_like(segs.data)
        for t in range(n_frames):
            lo = t * hop
            hi = min(lo + win, out_len)
            if hi > lo:
                gs[t, : hi - lo] = g[lo:hi]
        _acc(segs, gs)
    return _make(acc, (segs,), vjp)


def stft_tensor(x, cfg=StftConfig()):
    """Differentiable STFT of a 1-D sample Tensor; returns (real, imag) (T, F)."""
    x = as_tensor(x)
    n_frames = cfg.frame_count(x.data.shape[0])
    w = make_window(cfg, x.data.dtype)
    frames = mul(_frame_op(x, cfg, n_frames), w)
    cos_m, sin_m = _dft_matrices(cfg.win_len, cfg.fft_len, w.dtype.name)
    return matmul(frames, Tensor(cos_m)), matmul(frames, Tensor(sin_m))


def istft_tensor(spec_re, spec_im, cfg=StftConfig(), out_len=None):
    """Differentiable ISTFT from (T, F) real/imag Tensors to a sample Tensor."""
    spec_re, spec_im = as_tensor(spec_re), as_tensor(spec_im)
    n_frames, n_bins = spec_re.data.shape
    if n_bins != cfg.n_bins or spec_im.data.shape != spec_re.data.shape:
        raise ValueError(
            f"spectrogram shapes {spec_re.data.shape}/{spec_im.data.shape} "
            f"inconsistent with F={cfg.n_bins}")
    if out_len is None:
        out_len = cfg.span(n_frames)
    dtype = spec_re.data.dtype
    a, b = _idft_matrices(cfg.win_len, cfg.fft_len, dtype.name)
    segs = matmul(spec_re, Tensor(a)) + matmul(spec_im, Tensor(b))
    segs = mul(segs, make_window(cfg, dtype))
    acc = _overlap_add_op(segs, cfg, out_len)
    return mul(acc, _synthesis_weights(cfg, n_frames, out_len, dtype))
