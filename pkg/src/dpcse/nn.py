"""Parameter containers and the module base class.

``Module`` discovers parameters by walking instance attributes in insertion
order (dicts are ordered), so ``named_parameters()`` is deterministic for a
fixed construction order — which in turn makes seeded initialization and
checkpoint layout reproducible run to run.
"""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor


class Parameter(Tensor):
    """A trainable tensor.

    ``tag`` classifies the parameter for bulk edits: ``"affine"`` for
    conv/linear weights and biases, ``"norm"`` for layer-norm gain/bias,
    ``"activation"`` for activation shape parameters.
    """

    __slots__ = ("tag",)

    def __init__(self, data, tag="affine"):
        super().__init__(np.asarray(data), requires_grad=True)
        self.tag = tag


class Module:
    """Base class; submodules and parameters register via attribute assignment."""

    def __init__(self):
        self.training = True

    def named_parameters(self, prefix="", _seen=None):
        # _seen drops duplicates when two attributes share a module (weight tying)
        if _seen is None:
            _seen = set()
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                if id(value) not in _seen:
                    _seen.add(id(value))
                    yield (prefix + name, value)
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + name + ".", _seen)
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.", _seen)
                    elif isinstance(item, Parameter):
                        if id(item) not in _seen:
                            _seen.add(id(item))
                            yield (f"{prefix}{name}.{i}", item)

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def num_params(self):
        return sum(p.size for p in self.parameters())

    def train(self):
        self._set_training(True)
        return self

    def eval(self):
        self._set_training(False)
        return self

    def _set_training(self, flag):
        self.training = flag
        for value in vars(self).values():
            if isinstance(value, Module):
                value._set_training(flag)
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        item._set_training(flag)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state(self, state):
        params = dict(self.named_parameters())
        missing = sorted(set(params) - set(state))
        if missing:
            raise ValueError(f"state is missing parameters: {missing[:5]}")
        unexpected = sorted(set(state) - set(params))
        if unexpected:
            raise ValueError(f"state has unexpected parameters: {unexpected[:5]}")
        for name, p in params.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ValueError(
                    f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


def uniform_init(rng, shape, fan_in, dtype):
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) — the usual conv/linear default."""
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def zero_affine(module):
    """Zero every conv/linear weight and bias, leaving norm gains and
    activation shape parameters at their init values.

    With all affine maps zeroed, a normalization-and-activation pipeline still
    passes signal through — which is exactly what the identity/fixed-point
    checks on the blocks exploit.
    """
    for _, p in module.named_parameters():
        if p.tag == "affine":
            p.data = np.zeros_like(p.data)
    return module


def count_by_child(module):
    """Parameter totals grouped by direct child attribute name."""
    counts = {}
    for name, p in module.named_parameters():
        head = name.split(".", 1)[0]
        counts[head] = counts.get(head, 0) + p.size
    return counts
