"""Finite-difference verification of reverse-mode gradients.

``grad_check`` drives a module on fixed random inputs, backpropagates a
random scalar projection of its outputs, then re-evaluates that scalar under
central-difference perturbations of sampled parameter (and input) entries.
Run it on float64 instances: with step 1e-5 the truncation error sits far
below the 1e-3 acceptance tolerance, so disagreement means a wrong vjp, not
noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class GradCheckReport:
    tolerance: float
    max_err: dict = field(default_factory=dict)
    checked_entries: dict = field(default_factory=dict)

    @property
    def worst(self):
        if not self.max_err:
            return ("", 0.0)
        name = max(self.max_err, key=self.max_err.get)
        return (name, self.max_err[name])

    @property
    def passed(self):
        return all(e < self.tolerance for e in self.max_err.values())

    def failing(self):
        return sorted(
            ((n, e) for n, e in self.max_err.items() if e >= self.tolerance),
            key=lambda t: -t[1])

    def __str__(self):
        status = "pass" if self.passed else "FAIL"
        name, err = self.worst
        lines = [f"grad check {status} (tolerance {self.tolerance:g}, "
                 f"worst {err:.3e} at {name})"]
        for n in sorted(self.max_err):
            flag = "" if self.max_err[n] < self.tolerance else "  <-- FAIL"
            lines.append(f"  {n}: max rel err {self.max_err[n]:.3e} over "
                         f"{self.checked_entries[n]} entries{flag}")
        return "\n".join(lines)


def _flatten_outputs(out, acc, seen):
    if isinstance(out, Tensor):
        if id(out) not in seen:
            seen.add(id(out))
            acc.append(out)
    elif isinstance(out, (tuple, list)):
        for o in out:
            _flatten_outputs(o, acc, seen)
    return acc


def _rel_err(a, f):
    scale = max(abs(a), abs(f))
    if scale < 1e-7:
        return 0.0
    return abs(a - f) / scale


def grad_check(module, input_gen, tolerance=1e-3, step=1e-5, max_entries=64,
               sample_fraction=None, seed=0, check_inputs=True):
    """Compare analytic gradients of ``module`` against central differences.

    ``input_gen()`` must return a Tensor or tuple of Tensors (float64); they
    are perturbed too when ``check_inputs``.  Per array, up to ``max_entries``
    entries are sampled (or ``sample_fraction`` of them, at least one) with a
    seeded generator, so runs are reproducible.
    """
    rng = np.random.default_rng(seed)
    inputs = input_gen()
    if isinstance(inputs, Tensor):
        inputs = (inputs,)
    for t in inputs:
        t.requires_grad = True

    outs = _flatten_outputs(module(*inputs), [], set())
    projections = [rng.standard_normal(o.data.shape) for o in outs]
    loss = None
    for o, u in zip(outs, projections):
        term = (o * u).sum()
        loss = term if loss is None else loss + term
    loss.backward()

    def scalar():
        with ad.no_grad():
            vals = _flatten_outputs(module(*inputs), [], set())
            return float(sum((v.data * u).sum() for v, u in zip(vals, projections)))

    targets = [("input." + str(i), t) for i, t in enumerate(inputs) if check_inputs]
    targets += list(module.named_parameters())

    report = GradCheckReport(tolerance=tolerance)
    for name, tens in targets:
        arr = tens.data
        analytic = tens.grad if tens.grad is not None else np.zeros_like(arr)
        n = arr.size
        if sample_fraction is not None:
            want = max(1, int(round(n * sample_fraction)))
        else:
            want = max_entries
        if n <= want:
            idx = np.arange(n)
        else:
            idx = rng.choice(n, size=want, replace=False)
        flat = arr.ravel()
        aflat = np.asarray(analytic).ravel()
        worst = 0.0
        for i in idx:
            orig = flat[i]
            flat[i] = orig + step
            fp = scalar()
            flat[i] = orig - step
            fm = scalar()
            flat[i] = orig
            worst = max(worst, _rel_err(aflat[i], (fp - fm) / (2 * step)))
        report.max_err[name] = worst
        report.checked_entries[name] = len(idx)

    for t in inputs:
        t.requires_grad = False
        t.grad = None
    module.zero_grad()
    return report
