"""Reverse-mode automatic differentiation over dense numpy arrays.

The compute graph is recorded implicitly: every non-leaf Tensor keeps
references to its parent tensors and a closure that routes the output
gradient back to them. ``Tensor.backward()`` walks that graph once, in
reverse topological order, accumulating gradients on the leaves.

Conventions used throughout the package:
  * matrices are feature-major: a sequence of T frames with D features
    is a D x T array, one column per frame;
  * tensors are float64 by default; call ``set_default_dtype`` to switch
    to float32 for training and benchmarks;
  * gradients are plain numpy arrays, never Tensors.
"""

from __future__ import annotations

import contextlib
from typing import Iterable

import numpy as np

from .errors import ShapeError

_DEFAULT_DTYPE = np.float64
_GRAD_ENABLED = True


def set_default_dtype(dtype) -> None:
    """Set the dtype used for newly created tensors (float32 or float64)."""
    global _DEFAULT_DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.dtype(np.float32), np.dtype(np.float64)):
        raise ValueError(f"unsupported dtype {dtype}")
    _DEFAULT_DTYPE = dtype.type


def default_dtype():
    return _DEFAULT_DTYPE


@contextlib.contextmanager
def using_dtype(dtype):
    """Temporarily switch the default tensor dtype."""
    previous = _DEFAULT_DTYPE
    set_default_dtype(dtype)
    try:
        yield
    finally:
        set_default_dtype(previous)


@contextlib.contextmanager
def no_grad():
    """Disable graph recording inside the block (inference / benchmarks)."""
    global _GRAD_ENABLED
    previous = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = previous


def grad_enabled() -> bool:
    return _GRAD_ENABLED


def _is_basic_index(key) -> bool:
    if isinstance(key, (int, slice)):
        return True
    if isinstance(key, tuple):
        return all(isinstance(k, (int, slice)) for k in key)
    return False


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    """A dense array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=_DEFAULT_DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple = ()
        self._backward = None

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def _result(data: np.ndarray, parents: Iterable["Tensor"], backward) -> "Tensor":
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._parents = ()
        out._backward = None
        out.requires_grad = False
        if _GRAD_ENABLED:
            tracked = tuple(p for p in parents if p.requires_grad or p._parents)
            if tracked:
                out.requires_grad = True
                out._parents = tracked
                out._backward = backward
        return out

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name})"

    def item(self) -> float:
        return float(self.data.item())

    def detach(self) -> "Tensor":
        """A leaf view of the same data, cut off from the recorded graph."""
        out = Tensor.__new__(Tensor)
        out.data = self.data
        out.grad = None
        out.requires_grad = False
        out._parents = ()
        out._backward = None
        return out

    # -- graph traversal ------------------------------------------------------

    def graph(self) -> list["Tensor"]:
        """Recorded operations reachable from this tensor, in topological order.

        Iterative DFS; recursion would overflow on long LSTM chains.
        """
        order: list[Tensor] = []
        visited: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited or node._backward is None:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                stack.append((parent, False))
        return order

    def backward(self, grad: np.ndarray | None = None) -> None:
        """Accumulate gradients of this tensor into every reachable leaf."""
        if grad is None:
            if self.size != 1:
                raise ShapeError("backward() without gradient requires a scalar")
            grad = np.ones_like(self.data)
        else:
            grad = np.asarray(grad, dtype=self.data.dtype)
            if grad.shape != self.data.shape:
                raise ShapeError(
                    f"gradient shape {grad.shape} != tensor shape {self.data.shape}"
                )
        self._accumulate(grad)
        for node in reversed(self.graph()):
            node._backward(node.grad)
            # free interior gradient storage early; leaves keep theirs
            if node is not self:
                node.grad = None

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def zero_grad(self) -> None:
        self.grad = None

    # -- arithmetic -----------------------------------------------------------

    @staticmethod
    def _coerce(value) -> "Tensor":
        if isinstance(value, Tensor):
            return value
        return Tensor(value)

    def __add__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            a._accumulate(_unbroadcast(g, a.data.shape))
            b._accumulate(_unbroadcast(g, b.data.shape))

        return Tensor._result(a.data + b.data, (a, b), backward)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def backward(g):
            a._accumulate(-g)

        return Tensor._result(-a.data, (a,), backward)

    def __sub__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            a._accumulate(_unbroadcast(g, a.data.shape))
            b._accumulate(_unbroadcast(-g, b.data.shape))

        return Tensor._result(a.data - b.data, (a, b), backward)

    def __rsub__(self, other):
        return self._coerce(other).__sub__(self)

    def __mul__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            a._accumulate(_unbroadcast(g * b.data, a.data.shape))
            b._accumulate(_unbroadcast(g * a.data, b.data.shape))

        return Tensor._result(a.data * b.data, (a, b), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        other = self._coerce(other)
        a, b = self, other

        def backward(g):
            a._accumulate(_unbroadcast(g / b.data, a.data.shape))
            b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

        return Tensor._result(a.data / b.data, (a, b), backward)

    def __rtruediv__(self, other):
        return self._coerce(other).__truediv__(self)

    def __pow__(self, exponent: float):
        if not np.isscalar(exponent):
            raise TypeError("only scalar exponents are supported")
        a = self

        def backward(g):
            a._accumulate(g * exponent * a.data ** (exponent - 1))

        return Tensor._result(a.data**exponent, (a,), backward)

    def __matmul__(self, other):
        other = self._coerce(other)
        a, b = self, other
        if a.data.ndim != 2 or b.data.ndim != 2:
            raise ShapeError("matmul expects 2-D operands")
        if a.data.shape[1] != b.data.shape[0]:
            raise ShapeError(f"matmul shapes {a.data.shape} x {b.data.shape}")

        def backward(g):
            a._accumulate(g @ b.data.T)
            b._accumulate(a.data.T @ g)

        return Tensor._result(a.data @ b.data, (a, b), backward)

    def __getitem__(self, key):
        a = self
        out_data = a.data[key]
        basic = _is_basic_index(key)

        def backward(g):
            full = np.zeros_like(a.data)
            if basic:
                full[key] += g  # basic slices never alias, += is safe
            else:
                np.add.at(full, key, g)
            a._accumulate(full)

        return Tensor._result(out_data, (a,), backward)

    # -- shape ops ------------------------------------------------------------

    def transpose(self):
        a = self

        def backward(g):
            a._accumulate(g.T)

        return Tensor._result(a.data.T, (a,), backward)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        a = self
        original = a.data.shape

        def backward(g):
            a._accumulate(g.reshape(original))

        return Tensor._result(a.data.reshape(shape), (a,), backward)

    # -- reductions -----------------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        a = self

        def backward(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            # _accumulate copies on first store, so a read-only view is fine
            a._accumulate(np.broadcast_to(g, a.data.shape))

        return Tensor._result(a.data.sum(axis=axis, keepdims=keepdims), (a,), backward)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            count = self.data.size
        else:
            count = self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    # -- elementwise nonlinearities --------------------------------------------

    def exp(self):
        a = self
        out_data = np.exp(a.data)

        def backward(g):
            a._accumulate(g * out_data)

        return Tensor._result(out_data, (a,), backward)

    def log(self):
        a = self

        def backward(g):
            a._accumulate(g / a.data)

        return Tensor._result(np.log(a.data), (a,), backward)

    def sqrt(self):
        a = self
        out_data = np.sqrt(a.data)

        def backward(g):
            a._accumulate(g / (2.0 * out_data))

        return Tensor._result(out_data, (a,), backward)

    def tanh(self):
        a = self
        out_data = np.tanh(a.data)

        def backward(g):
            a._accumulate(g * (1.0 - out_data * out_data))

        return Tensor._result(out_data, (a,), backward)

    def sigmoid(self):
        a = self
        out_data = _sigmoid(a.data)

        def backward(g):
            a._accumulate(g * out_data * (1.0 - out_data))

        return Tensor._result(out_data, (a,), backward)

    def relu(self):
        a = self
        out_data = np.maximum(a.data, 0.0)

        def backward(g):
            a._accumulate(g * (a.data > 0.0))

        return Tensor._result(out_data, (a,), backward)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # evaluate via tanh to stay finite for large |x|
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


class Parameter(Tensor):
    """A trainable leaf tensor; its gradient is always materialized."""

    __slots__ = ("trainable",)

    def __init__(self, data, trainable: bool = True):
        super().__init__(data, requires_grad=True)
        self.trainable = trainable
        self.grad = np.zeros_like(self.data)

    def zero_grad(self) -> None:
        self.grad = np.zeros_like(self.data)

    def _accumulate(self, grad: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad = self.grad + grad


# -- free functions over tensors ------------------------------------------------


def softmax(x: Tensor, axis: int = 0) -> Tensor:
    """Numerically stable softmax along ``axis``."""
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out_data = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        inner = (g * out_data).sum(axis=axis, keepdims=True)
        x._accumulate(out_data * (g - inner))

    return Tensor._result(out_data, (x,), backward)


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, heads: int) -> Tensor:
    """Multi-head scaled dot-product attention over projected inputs.

    ``q`` is D x m, ``k``/``v`` are D x n; rows are split into ``heads``
    contiguous groups. One fused node: the head loop runs as batched numpy
    matmuls and the backward applies the standard softmax/attention
    derivatives.
    """
    d, m = q.data.shape
    n = k.data.shape[1]
    if d % heads != 0:
        raise ShapeError(f"{heads} heads do not divide dimension {d}")
    dk = d // heads
    scale = 1.0 / np.sqrt(dk)
    q3 = q.data.reshape(heads, dk, m)
    k3 = k.data.reshape(heads, dk, n)
    v3 = v.data.reshape(heads, dk, n)
    scores = np.matmul(q3.transpose(0, 2, 1), k3) * scale  # heads x m x n
    scores -= scores.max(axis=2, keepdims=True)
    attn = np.exp(scores)
    attn /= attn.sum(axis=2, keepdims=True)
    out = np.matmul(v3, attn.transpose(0, 2, 1)).reshape(d, m)

    def backward(g):
        g3 = g.reshape(heads, dk, m)
        d_attn = np.matmul(g3.transpose(0, 2, 1), v3)  # heads x m x n
        inner = (d_attn * attn).sum(axis=2, keepdims=True)
        d_scores = attn * (d_attn - inner) * scale
        q._accumulate(np.matmul(k3, d_scores.transpose(0, 2, 1)).reshape(d, m))
        k._accumulate(np.matmul(q3, d_scores).reshape(d, n))
        v._accumulate(np.matmul(g3, attn).reshape(d, n))

    return Tensor._result(out, (q, k, v), backward)


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float) -> Tensor:
    """Column-wise normalization over the feature axis with a learned affine.

    Fused forward/backward; gain and bias are D x 1.
    """
    mean = x.data.mean(axis=0, keepdims=True)
    centered = x.data - mean
    var = (centered * centered).mean(axis=0, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    normalized = centered * inv_std
    out = gain.data * normalized + bias.data

    def backward(g):
        gain._accumulate((g * normalized).sum(axis=1, keepdims=True))
        bias._accumulate(g.sum(axis=1, keepdims=True))
        d_norm = g * gain.data
        d_mean = d_norm.mean(axis=0, keepdims=True)
        d_proj = (d_norm * normalized).mean(axis=0, keepdims=True)
        x._accumulate(inv_std * (d_norm - d_mean - normalized * d_proj))

    return Tensor._result(out, (x, gain, bias), backward)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    tensors = [Tensor._coerce(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, start, stop in zip(tensors, offsets[:-1], offsets[1:]):
            index = [slice(None)] * g.ndim
            index[axis] = slice(start, stop)
            t._accumulate(g[tuple(index)])

    return Tensor._result(data, tensors, backward)


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    """Clamp values to [lo, hi]; gradient passes through the interior only."""
    out_data = np.clip(x.data, lo, hi)
    inside = (x.data >= lo) & (x.data <= hi)

    def backward(g):
        x._accumulate(g * inside)

    return Tensor._result(out_data, (x,), backward)


def zeros(shape) -> Tensor:
    return Tensor(np.zeros(shape, dtype=_DEFAULT_DTYPE))


def assert_finite(x: Tensor, what: str = "tensor") -> Tensor:
    from .errors import NumericsError

    if not np.all(np.isfinite(x.data)):
        raise NumericsError(f"{what} contains non-finite values")
    return x
