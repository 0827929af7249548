"""Training objective: energy-weighted speech and noise terms, each a mix of
time-domain MSE and a T-F magnitude-difference L1.

``loss_total`` weights the speech term by alpha = |x|^2 / (|x|^2 + |n|^2)
(computed from the clean pair, so the weight itself carries no gradient) and
the noise term by 1 - alpha.  Each term is

    beta * mean((ref - est)^2)  +  (1 - beta) * tf_term

where the T-F part compares one-sided STFT real/imag magnitudes.  Two
readings of that comparison are supported:

* ``per_component`` (default): mean of ``||Xr| - |Yr|| + ||Xi| - |Yi||`` —
  the usual L1 on each component's magnitude;
* ``as_printed``: mean over cells of ``|(|Xr| - |Yr|) + (|Xi| - |Yi|)|`` —
  the two component differences are summed before the outer absolute value.
  Kept as a switch for comparison, but it is a degenerate objective: an
  overshoot in one component can cancel an undershoot in the other, so a
  model can drive it to zero while matching neither component.

Estimates may be Tensors (gradients flow through every term, with the
sign-at-zero subgradient taken as 0); references are plain arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor, as_tensor
from .stft import StftConfig, Waveform, stft, stft_tensor

TF_L1_MODES = ("per_component", "as_printed")


@dataclass(frozen=True)
class LossConfig:
    beta: float = 0.4
    stft: StftConfig = field(default_factory=StftConfig)
    tf_l1_mode: str = "per_component"

    def __post_init__(self):
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must be in [0, 1], got {self.beta}")
        if self.tf_l1_mode not in TF_L1_MODES:
            raise ValueError(
                f"tf_l1_mode must be one of {TF_L1_MODES}, got {self.tf_l1_mode!r}")


def _samples(x):
    if isinstance(x, Waveform):
        return x.samples
    return np.asarray(x)


def alpha(x, n):
    """Speech weight: clean-speech energy over total clean energy, in [0, 1]."""
    xs, ns = _samples(x), _samples(n)
    if xs.shape != ns.shape:
        raise ValueError(f"length mismatch: {xs.shape} vs {ns.shape}")
    ex = float(np.sum(xs.astype(np.float64) ** 2))
    en = float(np.sum(ns.astype(np.float64) ** 2))
    if ex + en == 0.0:
        raise ValueError("degenerate pair: speech and noise are both silent")
    return ex / (ex + en)


def loss_time(ref, est):
    """Mean squared error over samples; differentiable in ``est``."""
    ref = _samples(ref)
    est = as_tensor(est if isinstance(est, Tensor) else _samples(est))
    if est.data.shape != ref.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {est.data.shape}")
    diff = est - ref
    return (diff * diff).mean()


def tf_term(ref_spec, est_re, est_im, mode="per_component"):
    """T-F magnitude comparison on (T, F) grids; differentiable in the
    estimate's real/imag parts."""
    ref_spec = np.asarray(ref_spec)
    dr = ad.absolute(as_tensor(est_re)) * -1.0 + np.abs(ref_spec.real)
    di = ad.absolute(as_tensor(est_im)) * -1.0 + np.abs(ref_spec.imag)
    if mode == "as_printed":
        return ad.absolute(dr + di).mean()
    if mode == "per_component":
        return (ad.absolute(dr) + ad.absolute(di)).mean()
    raise ValueError(f"tf_l1_mode must be one of {TF_L1_MODES}, got {mode!r}")


def loss_tf(ref, est, cfg=LossConfig()):
    ref = _samples(ref)
    est = as_tensor(est if isinstance(est, Tensor) else _samples(est))
    if est.data.shape != ref.shape:
        raise ValueError(f"length mismatch: {ref.shape} vs {est.data.shape}")
    ref_spec = stft(Waveform(ref), cfg.stft)
    est_re, est_im = stft_tensor(est, cfg.stft)
    return tf_term(ref_spec, est_re, est_im, cfg.tf_l1_mode)


def loss_speech(ref, est, cfg=LossConfig()):
    """beta-weighted sum of the time and T-F terms for one source."""
    t = loss_time(ref, est)
    if cfg.beta == 1.0:
        return t
    f = loss_tf(ref, est, cfg)
    return t * cfg.beta + f * (1.0 - cfg.beta)


def loss_total(x, n, x_est, n_est, cfg=LossConfig()):
    """Energy-weighted combination of the speech and noise objectives."""
    a = alpha(x, n)
    return loss_speech(x, x_est, cfg) * a + loss_speech(n, n_est, cfg) * (1.0 - a)
