"""Objective quality metrics and the evaluation report format.

* ``snr`` — plain energy ratio against the reference.
* ``si_sdr`` — scale-invariant ratio: the estimate is projected onto the
  reference and distortion is whatever is left.
* ``stoi`` — short-time objective intelligibility: resample to 10 kHz,
  Hann-windowed frames of 256 samples (hop 128, 512-point FFT), drop frames
  more than 40 dB below the loudest clean frame, collect 15 one-third-octave
  band envelopes starting at 150 Hz, and average band-envelope correlations
  over sliding 30-frame (384 ms) segments after per-segment normalization
  and clipping at -15 dB.

Infinite dB values are legitimate (perfect or orthogonal estimates) and are
serialized in reports as the strings "perfect" / "orthogonal".
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .stft import Waveform


def _samples(x):
    return x.samples if isinstance(x, Waveform) else np.asarray(x)


def _pair(ref, est):
    r, e = _samples(ref).astype(np.float64), _samples(est).astype(np.float64)
    if r.shape != e.shape:
        raise ValueError(f"length mismatch: {r.shape} vs {e.shape}")
    return r, e


def snr(ref, est):
    """10 log10(|ref|^2 / |ref - est|^2) in dB; +inf for a perfect estimate."""
    r, e = _pair(ref, est)
    e_ref = float(np.sum(r * r))
    if e_ref == 0.0:
        raise ValueError("reference signal is silent")
    e_err = float(np.sum((r - e) ** 2))
    if e_err == 0.0:
        return math.inf
    return 10.0 * math.log10(e_ref / e_err)


def si_sdr(ref, est):
    """Scale-invariant signal-to-distortion ratio in dB.

    The reference-aligned component is s = (<est, ref>/|ref|^2) ref; returns
    10 log10(|s|^2/|est - s|^2), +inf when est is a nonzero multiple of ref,
    -inf when est is orthogonal to ref.
    """
    r, e = _pair(ref, est)
    e_ref = float(np.sum(r * r))
    if e_ref == 0.0:
        raise ValueError("reference signal is silent")
    proj = float(np.dot(e, r)) / e_ref
    s = proj * r
    e_sig = float(np.sum(s * s))
    if e_sig == 0.0:
        return -math.inf
    e_dist = float(np.sum((e - s) ** 2))
    if e_dist == 0.0:
        return math.inf
    return 10.0 * math.log10(e_sig / e_dist)


# -- STOI --------------------------------------------------------------------

_STOI_FS = 10000
_STOI_FRAME = 256
_STOI_HOP = 128
_STOI_NFFT = 512
_STOI_BANDS = 15
_STOI_F_START = 150.0
_STOI_SEG = 30
_STOI_DYN_RANGE = 40.0
_STOI_CLIP_DB = -15.0


def resample_16k_to_10k(x):
    """Polyphase windowed-sinc resampler, 16 kHz -> 10 kHz (ratio 5/8).

    64 input-rate taps per side-lobe budget, Kaiser beta 8, cut off at the
    5 kHz target Nyquist.
    """
    from scipy.signal import upfirdn

    up, down = 5, 8
    n_taps = 64 * up + 1
    center = (n_taps - 1) // 2
    t = (np.arange(n_taps) - center) / up
    fc = 5000.0 / 16000.0
    h = 2 * fc * np.sinc(2 * fc * t) * np.kaiser(n_taps, 8.0)
    h *= up / h.sum()
    y = upfirdn(h, np.asarray(x, dtype=np.float64), up, down)
    delay = center // down
    n_out = (len(x) * up) // down
    return y[delay:delay + n_out]


def _stoi_frames(x):
    n = np.arange(_STOI_FRAME)
    w = 0.5 * (1.0 - np.cos(2.0 * np.pi * n / _STOI_FRAME))
    m = (len(x) - _STOI_FRAME) // _STOI_HOP + 1
    frames = np.lib.stride_tricks.sliding_window_view(
        x, _STOI_FRAME)[::_STOI_HOP][:m] * w
    return np.abs(np.fft.rfft(frames, n=_STOI_NFFT, axis=1))


def _third_octave_matrix():
    freqs = np.arange(_STOI_NFFT // 2 + 1) * (_STOI_FS / _STOI_NFFT)
    centers = _STOI_F_START * 2.0 ** (np.arange(_STOI_BANDS) / 3.0)
    lo = centers / 2.0 ** (1.0 / 6.0)
    hi = centers * 2.0 ** (1.0 / 6.0)
    m = ((freqs[None, :] >= lo[:, None]) & (freqs[None, :] < hi[:, None]))
    return m.astype(np.float64)


def stoi(ref, est, sample_rate=16000):
    """Short-time objective intelligibility, roughly in [0, 1]."""
    if sample_rate != 16000:
        raise ValueError(f"stoi expects 16 kHz input, got {sample_rate}")
    r, e = _pair(ref, est)
    r = resample_16k_to_10k(r)
    e = resample_16k_to_10k(e)

    min_len = _STOI_FRAME + (_STOI_SEG - 1) * _STOI_HOP
    if len(r) < min_len:
        raise ValueError(
            f"signal too short for stoi: needs {min_len} samples at 10 kHz "
            f"({len(r)} after resampling)")

    spec_r = _stoi_frames(r)
    spec_e = _stoi_frames(e)

    # silence removal keyed on the clean signal, applied to both
    frame_energy = 20.0 * np.log10(np.linalg.norm(spec_r, axis=1) + 1e-12)
    keep = frame_energy > frame_energy.max() - _STOI_DYN_RANGE
    spec_r, spec_e = spec_r[keep], spec_e[keep]
    if spec_r.shape[0] < _STOI_SEG:
        raise ValueError(
            f"signal too short for stoi: {spec_r.shape[0]} active frames "
            f"< {_STOI_SEG}")

    band = _third_octave_matrix()
    x = np.sqrt(band @ (spec_r.T ** 2))  # (bands, frames)
    y = np.sqrt(band @ (spec_e.T ** 2))

    clip = 10.0 ** (-_STOI_CLIP_DB / 20.0)
    eps = 1e-12
    scores = []
    for m in range(_STOI_SEG, x.shape[1] + 1):
        xs = x[:, m - _STOI_SEG:m]
        ys = y[:, m - _STOI_SEG:m]
        scale = (np.linalg.norm(xs, axis=1, keepdims=True)
                 / (np.linalg.norm(ys, axis=1, keepdims=True) + eps))
        ys_n = np.minimum(ys * scale, xs * (1.0 + clip))
        xc = xs - xs.mean(axis=1, keepdims=True)
        yc = ys_n - ys_n.mean(axis=1, keepdims=True)
        denom = (np.linalg.norm(xc, axis=1) * np.linalg.norm(yc, axis=1)) + eps
        scores.append((xc * yc).sum(axis=1) / denom)
    return float(np.mean(scores))


# -- evaluation report ----------------------------------------------------------

_SENTINELS = {math.inf: "perfect", -math.inf: "orthogonal"}
_SENTINELS_BACK = {"perfect": math.inf, "orthogonal": -math.inf}


def encode_db(v):
    return _SENTINELS.get(v, v)


def decode_db(v):
    if isinstance(v, str):
        return _SENTINELS_BACK[v]
    return v


@dataclass
class UtteranceScore:
    id: str
    snr_in: float
    snr_out: float
    si_sdr_in: float
    si_sdr_out: float
    stoi_in: float
    stoi_out: float


METRIC_FIELDS = ("snr_in", "snr_out", "si_sdr_in", "si_sdr_out",
                 "stoi_in", "stoi_out")


@dataclass
class MetricReport:
    rows: list

    def summary(self):
        """Counts plus per-metric arithmetic means over finite values."""
        out = {"summary": True, "count": len(self.rows)}
        for f in METRIC_FIELDS:
            vals = [getattr(r, f) for r in self.rows]
            finite = [v for v in vals if math.isfinite(v)]
            out["mean_" + f] = sum(finite) / len(finite) if finite else None
            out["finite_" + f] = len(finite)
        return out

    def write(self, path):
        with open(path, "w") as fh:
            for r in self.rows:
                rec = {k: encode_db(v) if k in METRIC_FIELDS else v
                       for k, v in asdict(r).items()}
                fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.write(json.dumps(self.summary(), sort_keys=True) + "\n")

    @classmethod
    def read(cls, path):
        rows = []
        summary = None
        with open(path) as fh:
            for line in fh:
                rec = json.loads(line)
                if rec.get("summary"):
                    summary = rec
                    continue
                rows.append(UtteranceScore(
                    id=rec["id"],
                    **{f: decode_db(rec[f]) for f in METRIC_FIELDS}))
        report = cls(rows)
        if summary is not None:
            stored = {k: v for k, v in summary.items()}
            if stored != report.summary():
                raise ValueError("report summary does not match its rows")
        return report
