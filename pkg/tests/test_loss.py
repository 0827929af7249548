"""Objective identities, the worked single-cell case, and gradient checks."""

from dataclasses import replace

import numpy as np
import pytest

from dpcse import autodiff as ad
from dpcse.autodiff import Tensor
from dpcse.loss import (
    LossConfig,
    alpha,
    loss_speech,
    loss_tf,
    loss_time,
    loss_total,
    tf_term,
)
from dpcse.stft import StftConfig, Waveform, stft

TINY = StftConfig(win_len=8, hop=4, fft_len=8)
CFG = LossConfig(beta=0.4, stft=TINY)


def rng(seed=0):
    return np.random.default_rng(seed)


class TestAlpha:
    def test_equal_energies(self):
        assert alpha(np.array([1.0, 1.0]), np.array([-1.0, 1.0])) == 0.5

    def test_zero_noise(self):
        assert alpha(np.array([1.0, 2.0]), np.zeros(2)) == 1.0

    def test_worked_example(self):
        assert alpha(np.array([1.0, 0.0]), np.array([2.0, 0.0])) == pytest.approx(1 / 5)

    def test_scale_invariance(self):
        x, n = rng(1).standard_normal(50), rng(2).standard_normal(50)
        for c in (0.1, -3.0, 17.0):
            assert alpha(c * x, c * n) == pytest.approx(alpha(x, n), rel=1e-12)

    def test_degenerate_pair(self):
        with pytest.raises(ValueError, match="degenerate pair"):
            alpha(np.zeros(4), np.zeros(4))

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            alpha(np.zeros(4), np.zeros(5))

    def test_accepts_waveforms(self):
        assert alpha(Waveform(np.ones(4)), Waveform(np.ones(4))) == 0.5


class TestLossTime:
    def test_perfect_estimate(self):
        x = rng(1).standard_normal(16)
        assert loss_time(x, x.copy()).item() == 0.0

    def test_unit_offset(self):
        assert loss_time(np.zeros(2), np.ones(2)).item() == 1.0

    def test_matches_direct_sum(self):
        x, y = rng(2).standard_normal(33), rng(3).standard_normal(33)
        want = np.mean((y - x) ** 2)
        assert loss_time(x, y).item() == pytest.approx(want, rel=1e-12)

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            loss_time(np.zeros(3), np.zeros(4))


class TestTfTerm:
    def test_single_cell_worked_example(self):
        ref = np.array([[3.0 + 4.0j]])
        got = tf_term(ref, Tensor(np.array([[1.0]])), Tensor(np.array([[1.0]])))
        assert got.item() == pytest.approx(5.0)

    def test_modes_agree_when_signs_agree(self):
        ref = np.array([[3.0 + 4.0j]])
        for mode in ("as_printed", "per_component"):
            got = tf_term(ref, Tensor(np.array([[1.0]])),
                          Tensor(np.array([[1.0]])), mode)
            assert got.item() == pytest.approx(5.0)

    def test_modes_differ_when_components_cancel(self):
        ref = np.array([[3.0 + 1.0j]])
        re, im = Tensor(np.array([[1.0]])), Tensor(np.array([[3.0]]))
        assert tf_term(ref, re, im, "as_printed").item() == pytest.approx(0.0)
        assert tf_term(ref, re, im, "per_component").item() == pytest.approx(4.0)

    def test_as_printed_never_exceeds_per_component(self):
        ref = rng(1).standard_normal((5, 6)) + 1j * rng(2).standard_normal((5, 6))
        re = Tensor(rng(3).standard_normal((5, 6)))
        im = Tensor(rng(4).standard_normal((5, 6)))
        assert (tf_term(ref, re, im, "as_printed").item()
                <= tf_term(ref, re, im, "per_component").item() + 1e-12)

    def test_bad_mode(self):
        with pytest.raises(ValueError, match="tf_l1_mode"):
            tf_term(np.zeros((1, 1)), Tensor(np.zeros((1, 1))),
                    Tensor(np.zeros((1, 1))), "both")

    def test_matches_cellwise_oracle(self):
        x = rng(5).standard_normal(32)
        y = rng(6).standard_normal(32)
        ref = stft(Waveform(x), TINY)
        est = stft(Waveform(y), TINY)
        dr = np.abs(ref.real) - np.abs(est.real)
        di = np.abs(ref.imag) - np.abs(est.imag)
        oracles = {"per_component": np.mean(np.abs(dr) + np.abs(di)),
                   "as_printed": np.mean(np.abs(dr + di))}
        for mode, want in oracles.items():
            got = loss_tf(x, y, replace(CFG, tf_l1_mode=mode)).item()
            assert got == pytest.approx(want, rel=1e-12), mode
        # the default reading is the non-cancelling one
        assert loss_tf(x, y, CFG).item() == pytest.approx(
            oracles["per_component"], rel=1e-12)


class TestLossSpeechAndTotal:
    def test_perfect_estimate_is_zero(self):
        x = rng(1).standard_normal(32)
        assert loss_speech(x, x.copy(), CFG).item() == pytest.approx(0.0, abs=1e-15)

    def test_beta_one_reduces_to_time(self):
        cfg = LossConfig(beta=1.0, stft=TINY)
        x, y = rng(2).standard_normal(32), rng(3).standard_normal(32)
        assert loss_speech(x, y, cfg).item() == loss_time(x, y).item()

    def test_convex_combination(self):
        x, y = rng(4).standard_normal(32), rng(5).standard_normal(32)
        want = 0.4 * loss_time(x, y).item() + 0.6 * loss_tf(x, y, CFG).item()
        assert loss_speech(x, y, CFG).item() == pytest.approx(want, rel=1e-12)

    def test_total_perfect(self):
        x, n = rng(6).standard_normal(32), rng(7).standard_normal(32)
        got = loss_total(x, n, x.copy(), n.copy(), CFG).item()
        assert got == pytest.approx(0.0, abs=1e-15)

    def test_total_zero_noise_equals_speech_term(self):
        x = rng(8).standard_normal(32)
        nhat = rng(9).standard_normal(32)
        got = loss_total(x, np.zeros(32), x * 0.9, nhat, CFG).item()
        assert got == pytest.approx(loss_speech(x, x * 0.9, CFG).item(), rel=1e-12)

    def test_total_matches_composed_oracle(self):
        r = rng(10)
        x, n = r.standard_normal(32), r.standard_normal(32) * 0.3
        xh, nh = r.standard_normal(32), r.standard_normal(32)
        a = alpha(x, n)
        want = (a * loss_speech(x, xh, CFG).item()
                + (1 - a) * loss_speech(n, nh, CFG).item())
        assert loss_total(x, n, xh, nh, CFG).item() == pytest.approx(want, rel=1e-12)

    def test_nonnegative_on_randoms(self):
        r = rng(11)
        for _ in range(10):
            x, n = r.standard_normal(32), r.standard_normal(32)
            xh, nh = r.standard_normal(32), r.standard_normal(32)
            assert loss_total(x, n, xh, nh, CFG).item() >= 0.0


class TestLossGradients:
    def fd_check(self, make_loss, est0, tol=1e-3):
        t = Tensor(est0.copy(), requires_grad=True)
        make_loss(t).backward()
        analytic = t.grad.copy()
        idx = rng(12).choice(est0.size, size=min(12, est0.size), replace=False)
        for i in idx:
            eps = 1e-6
            xp, xm = est0.copy(), est0.copy()
            xp.flat[i] += eps
            xm.flat[i] -= eps
            with ad.no_grad():
                fp = make_loss(Tensor(xp)).item()
                fm = make_loss(Tensor(xm)).item()
            num = (fp - fm) / (2 * eps)
            scale = max(abs(num), abs(analytic.flat[i]), 1e-8)
            assert abs(num - analytic.flat[i]) / scale < tol

    def test_speech_gradient(self):
        x = rng(13).standard_normal(32)
        est = rng(14).standard_normal(32)
        self.fd_check(lambda t: loss_speech(x, t, CFG), est)

    def test_total_gradient_wrt_both_estimates(self):
        r = rng(15)
        x, n = r.standard_normal(32), r.standard_normal(32) * 0.5
        xh0, nh0 = r.standard_normal(32), r.standard_normal(32)
        self.fd_check(lambda t: loss_total(x, n, t, nh0, CFG), xh0)
        self.fd_check(lambda t: loss_total(x, n, xh0, t, CFG), nh0)

    def test_per_component_gradient(self):
        cfg = LossConfig(beta=0.4, stft=TINY, tf_l1_mode="per_component")
        x = rng(16).standard_normal(32)
        est = rng(17).standard_normal(32)
        self.fd_check(lambda t: loss_speech(x, t, cfg), est)


class TestLossConfig:
    def test_beta_range(self):
        with pytest.raises(ValueError, match="beta"):
            LossConfig(beta=1.5)

    def test_bad_mode(self):
        with pytest.raises(ValueError, match="tf_l1_mode"):
            LossConfig(tf_l1_mode="sometimes")
