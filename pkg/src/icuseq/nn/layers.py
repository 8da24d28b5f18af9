"""Layer modules: parameter containers plus the standard building blocks."""

from __future__ import annotations

import math

import numpy as np

from .tensor import Parameter, Tensor, layer_norm


class Module:
    """Base class; walks its attributes to find parameters and submodules."""

    def __init__(self):
        self.training = True

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def named_parameters(self, prefix: str = ""):
        out = []
        for name, value in vars(self).items():
            full = f"{prefix}{name}"
            out.extend(_collect(full, value))
        return out

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        found = [self]
        stack = list(vars(self).values())
        while stack:
            v = stack.pop()
            if isinstance(v, Module):
                found.append(v)
                stack.extend(vars(v).values())
            elif isinstance(v, (list, tuple)):
                stack.extend(v)
            elif isinstance(v, dict):
                stack.extend(v.values())
        return found

    def train(self):
        for m in self.modules():
            m.training = True
        return self

    def eval(self):
        for m in self.modules():
            m.training = False
        return self

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        if missing:
            raise KeyError(f"state dict is missing parameters: {sorted(missing)}")
        for name, p in own.items():
            arr = np.asarray(state[name])
            if arr.shape != p.data.shape:
                raise ValueError(f"shape mismatch for {name}: {arr.shape} vs {p.data.shape}")
            p.data = arr.astype(p.data.dtype, copy=True)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None


def _collect(prefix: str, value):
    if isinstance(value, Parameter):
        return [(prefix, value)]
    if isinstance(value, Module):
        return value.named_parameters(prefix + ".")
    if isinstance(value, (list, tuple)):
        out = []
        for i, v in enumerate(value):
            out.extend(_collect(f"{prefix}.{i}", v))
        return out
    if isinstance(value, dict):
        out = []
        for k, v in value.items():
            out.extend(_collect(f"{prefix}.{k}", v))
        return out
    return []


class Linear(Module):
    """Affine map; weights uniform in +-1/sqrt(fan_in), bias zero."""

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        bound = 1.0 / math.sqrt(n_in)
        self.weight = Parameter(rng.uniform(-bound, bound, size=(n_in, n_out)).astype(dtype))
        self.bias = Parameter(np.zeros(n_out, dtype=dtype))

    def forward(self, x: Tensor) -> Tensor:
        return x @ self.weight + self.bias


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5, dtype=np.float32):
        super().__init__()
        self.gain = Parameter(np.ones(d, dtype=dtype))
        self.bias = Parameter(np.zeros(d, dtype=dtype))
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gain, self.bias, self.eps)


class Dropout(Module):
    """Inverted dropout: kept activations are scaled by 1/(1-p)."""

    def __init__(self, p: float, rng: np.random.Generator):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {p}")
        self.p = p
        self.rng = rng

    def forward(self, x: Tensor) -> Tensor:
        if not self.training or self.p == 0.0:
            return x
        keep = 1.0 - self.p
        mask = (self.rng.random(x.data.shape) < keep).astype(x.data.dtype) / keep
        return x * Tensor(mask)


class EmbeddingTable(Module):
    """Integer-id lookup table, rows drawn from N(0, 0.02)."""

    def __init__(self, n_rows: int, d: int, rng: np.random.Generator, dtype=np.float32):
        super().__init__()
        self.table = Parameter(rng.normal(0.0, 0.02, size=(n_rows, d)).astype(dtype))

    def forward(self, ids: np.ndarray) -> Tensor:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() >= self.table.data.shape[0]):
            raise IndexError("id outside embedding table")
        return self.table[ids]
