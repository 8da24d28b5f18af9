"""numpy-backed dense tensors with reverse-mode automatic differentiation.

Every differentiable operation records its inputs and a backward rule on the
output node; ``Tensor.backward()`` walks the recorded graph once in reverse
topological order and accumulates gradients into ``.grad`` buffers.

Float32 is the working precision for training; gradient checks build the same
graphs in float64 (ops preserve the dtype of their operands).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import erf as _erf

_GRAD_ENABLED = True

_INV_SQRT2 = 1.0 / math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


class no_grad:
    """Context manager that disables graph recording (evaluation mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum ``g`` over the axes that were broadcast to reach ``g.shape``."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _key_has_array(key) -> bool:
    if isinstance(key, tuple):
        return any(isinstance(k, (np.ndarray, list)) for k in key)
    return isinstance(key, (np.ndarray, list))


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        self.data = np.asarray(data, dtype=dtype)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    # ------------------------------------------------------------------
    # bookkeeping

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}, grad={'set' if self.grad is not None else 'none'})"

    def _accumulate(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        np.add(self.grad, g, out=self.grad, casting="same_kind")

    def backward(self) -> None:
        """Reverse pass from a scalar output.

        The recorded graph is walked exactly once per node, children before
        parents, so fan-out gradients accumulate by summation.
        """
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar output, got shape {self.data.shape}")
        topo: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                topo.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.ones_like(self.data)
        for node in reversed(topo):
            if node._backward is not None:
                node._backward()

    # ------------------------------------------------------------------
    # elementwise arithmetic

    @staticmethod
    def _coerce(other) -> "Tensor":
        return other if isinstance(other, Tensor) else Tensor(np.asarray(other))

    def __add__(self, other):
        other = self._coerce(other)
        out = _make(self.data + other.data, (self, other))
        if out._parents:
            def _bwd():
                self._accumulate(_unbroadcast(out.grad, self.data.shape))
                other._accumulate(_unbroadcast(out.grad, other.data.shape))
            out._backward = _bwd
        return out

    __radd__ = __add__

    def __neg__(self):
        out = _make(-self.data, (self,))
        if out._parents:
            def _bwd():
                self._accumulate(-out.grad)
            out._backward = _bwd
        return out

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) + (-self)

    def __mul__(self, other):
        other = self._coerce(other)
        out = _make(self.data * other.data, (self, other))
        if out._parents:
            def _bwd():
                self._accumulate(_unbroadcast(out.grad * other.data, self.data.shape))
                other._accumulate(_unbroadcast(out.grad * self.data, other.data.shape))
            out._backward = _bwd
        return out

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        out = _make(self.data / other.data, (self, other))
        if out._parents:
            def _bwd():
                self._accumulate(_unbroadcast(out.grad / other.data, self.data.shape))
                other._accumulate(_unbroadcast(-out.grad * self.data / (other.data * other.data),
                                               other.data.shape))
            out._backward = _bwd
        return out

    def __pow__(self, exponent):
        if not isinstance(exponent, (int, float)):
            raise TypeError("only scalar exponents are supported")
        out = _make(self.data ** exponent, (self,))
        if out._parents:
            def _bwd():
                self._accumulate(out.grad * exponent * self.data ** (exponent - 1))
            out._backward = _bwd
        return out

    # ------------------------------------------------------------------
    # linear algebra and shape ops

    def __matmul__(self, other):
        other = self._coerce(other)
        if self.data.ndim < 2 or other.data.ndim < 2:
            raise ValueError("matmul operands must be at least 2-D")
        out = _make(np.matmul(self.data, other.data), (self, other))
        if out._parents:
            def _bwd():
                ga = np.matmul(out.grad, np.swapaxes(other.data, -1, -2))
                gb = np.matmul(np.swapaxes(self.data, -1, -2), out.grad)
                self._accumulate(_unbroadcast(ga, self.data.shape))
                other._accumulate(_unbroadcast(gb, other.data.shape))
            out._backward = _bwd
        return out

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.data.shape
        out = _make(self.data.reshape(shape), (self,))
        if out._parents:
            def _bwd():
                self._accumulate(out.grad.reshape(src))
            out._backward = _bwd
        return out

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        inv = np.argsort(axes)
        out = _make(self.data.transpose(axes), (self,))
        if out._parents:
            def _bwd():
                self._accumulate(out.grad.transpose(inv))
            out._backward = _bwd
        return out

    def __getitem__(self, key):
        out = _make(self.data[key], (self,))
        if out._parents:
            def _bwd():
                buf = np.zeros_like(self.data)
                if _key_has_array(key):
                    np.add.at(buf, key, out.grad)
                else:
                    buf[key] += out.grad
                self._accumulate(buf)
            out._backward = _bwd
        return out

    def sum(self, axis=None, keepdims: bool = False):
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out._parents:
            src = self.data.shape

            def _bwd():
                g = out.grad
                if axis is not None and not keepdims:
                    axes = (axis,) if isinstance(axis, int) else tuple(axis)
                    axes = tuple(a % len(src) for a in axes)
                    expand = tuple(1 if i in axes else s for i, s in enumerate(src))
                    g = g.reshape(expand)
                self._accumulate(np.broadcast_to(g, src).astype(self.data.dtype, copy=False))
            out._backward = _bwd
        return out

    def mean(self, axis=None, keepdims: bool = False):
        if axis is None:
            count = self.data.size
        else:
            axes = (axis,) if isinstance(axis, int) else tuple(axis)
            count = 1
            for a in axes:
                count *= self.data.shape[a]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # ------------------------------------------------------------------
    # nonlinearities

    def exp(self):
        y = np.exp(self.data)
        out = _make(y, (self,))
        if out._parents:
            def _bwd():
                self._accumulate(out.grad * y)
            out._backward = _bwd
        return out

    def log(self):
        out = _make(np.log(self.data), (self,))
        if out._parents:
            def _bwd():
                self._accumulate(out.grad / self.data)
            out._backward = _bwd
        return out

    def sqrt(self):
        y = np.sqrt(self.data)
        out = _make(y, (self,))
        if out._parents:
            def _bwd():
                self._accumulate(out.grad * 0.5 / y)
            out._backward = _bwd
        return out

    def tanh(self):
        y = np.tanh(self.data)
        out = _make(y, (self,))
        if out._parents:
            def _bwd():
                self._accumulate(out.grad * (1.0 - y * y))
            out._backward = _bwd
        return out

    def sigmoid(self):
        y = 0.5 * (1.0 + np.tanh(0.5 * self.data))
        out = _make(y, (self,))
        if out._parents:
            def _bwd():
                self._accumulate(out.grad * y * (1.0 - y))
            out._backward = _bwd
        return out

    def gelu(self):
        """Exact Gaussian-error-function GELU."""
        x = self.data
        cdf = 0.5 * (1.0 + _erf(x * _INV_SQRT2))
        out = _make(x * cdf, (self,))
        if out._parents:
            def _bwd():
                pdf = np.exp(-0.5 * x * x) * _INV_SQRT_2PI
                self._accumulate(out.grad * (cdf + x * pdf))
            out._backward = _bwd
        return out


class Parameter(Tensor):
    """A tensor registered as trainable state."""

    __slots__ = ()

    def __init__(self, data, dtype=None):
        super().__init__(data, requires_grad=True, dtype=dtype)


def _make(data: np.ndarray, parents: tuple) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = parents
    return out


# ----------------------------------------------------------------------
# free functions


def concat(parts: list, axis: int = 0) -> Tensor:
    """Concatenate tensors along ``axis``; backward splits the gradient."""
    datas = [p.data for p in parts]
    out = _make(np.concatenate(datas, axis=axis), tuple(parts))
    if out._parents:
        sizes = np.cumsum([d.shape[axis] for d in datas])[:-1]

        def _bwd():
            for part, g in zip(parts, np.split(out.grad, sizes, axis=axis)):
                part._accumulate(g)
        out._backward = _bwd
    return out


def _softmax_core(x: Tensor, scores: np.ndarray, axis: int) -> Tensor:
    neg = np.isneginf(scores)
    if np.any(np.all(neg, axis=axis)):
        raise ValueError("softmax over a fully masked row is undefined")
    m = np.max(scores, axis=axis, keepdims=True)
    e = np.exp(scores - m)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _make(y, (x,))
    if out._parents:
        def _bwd():
            g = out.grad
            dot = (g * y).sum(axis=axis, keepdims=True)
            x._accumulate((g - dot) * y)
        out._backward = _bwd
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Row-stable softmax. Entries equal to -inf act as mask sentinels and
    receive exactly zero weight; a fully masked row is an error."""
    return _softmax_core(x, x.data, axis)


def masked_softmax(x: Tensor, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax over entries where ``mask`` is True; others get weight 0."""
    scores = np.where(mask, x.data, -np.inf)
    return _softmax_core(x, scores, axis)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Per-row normalization over the last axis, then affine gain/bias."""
    d = x.data
    mu = d.mean(axis=-1, keepdims=True)
    var = ((d - mu) ** 2).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (d - mu) * inv
    out = _make(xhat * gain.data + bias.data, (x, gain, bias))
    if out._parents:
        def _bwd():
            g = out.grad
            gain._accumulate(_unbroadcast(g * xhat, gain.data.shape))
            bias._accumulate(_unbroadcast(g, bias.data.shape))
            gx = g * gain.data
            dx = inv * (gx - gx.mean(axis=-1, keepdims=True)
                        - xhat * (gx * xhat).mean(axis=-1, keepdims=True))
            x._accumulate(dx)
        out._backward = _bwd
    return out


def bce_with_logits(logits: Tensor, targets: np.ndarray) -> Tensor:
    """Elementwise binary cross-entropy in the stable log-sum-exp form:
    max(z, 0) - z*y + log(1 + exp(-|z|))."""
    z = logits.data
    y = np.asarray(targets, dtype=z.dtype)
    loss = np.maximum(z, 0.0) - z * y + np.log1p(np.exp(-np.abs(z)))
    out = _make(loss, (logits,))
    if out._parents:
        def _bwd():
            sig = 0.5 * (1.0 + np.tanh(0.5 * z))
            logits._accumulate(out.grad * (sig - y))
        out._backward = _bwd
    return out
