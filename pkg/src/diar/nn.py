"""Neural network layers built on the autodiff substrate.

All layers follow the feature-major convention: an input sequence is a
D x T tensor, one column per position. Weights are initialized from
uniform(-sqrt(1/fan_in), +sqrt(1/fan_in)); biases start at zero except
the LSTM forget gate, which starts at 1.
"""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Parameter, Tensor, grad_enabled, layer_norm, scaled_dot_attention
from .errors import ConfigError, ShapeError

LAYER_NORM_EPS = 1e-8


class Module:
    """Minimal layer container: tracks parameters and train/eval mode."""

    def __init__(self):
        self.training = True

    def named_parameters(self, prefix: str = ""):
        for name, value in vars(self).items():
            if isinstance(value, Parameter):
                yield prefix + name, value
            elif isinstance(value, Module):
                yield from value.named_parameters(prefix + name + ".")
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Parameter):
                        yield f"{prefix}{name}.{i}", item
                    elif isinstance(item, Module):
                        yield from item.named_parameters(f"{prefix}{name}.{i}.")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for value in vars(self).values():
            if isinstance(value, Module):
                yield from value.modules()
            elif isinstance(value, (list, tuple)):
                for item in value:
                    if isinstance(item, Module):
                        yield from item.modules()

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def num_params(self) -> int:
        return sum(p.size for p in self.parameters() if p.trainable)

    def train(self, mode: bool = True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        from .errors import CheckpointError

        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        unexpected = sorted(set(state) - set(own))
        mismatched = sorted(
            name for name in set(own) & set(state)
            if own[name].data.shape != state[name].shape
        )
        if missing or unexpected or mismatched:
            raise CheckpointError(
                "state incompatible with model; "
                f"missing={missing} unexpected={unexpected} shape_mismatch={mismatched}"
            )
        for name, p in own.items():
            p.data = state[name].astype(p.data.dtype).copy()
            p.zero_grad()


def uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    """Affine map applied column-wise: out = W x + b."""

    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator):
        super().__init__()
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.weight = Parameter(uniform_init(rng, (out_dim, in_dim), in_dim))
        self.bias = Parameter(np.zeros((out_dim, 1)))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[0] != self.in_dim:
            raise ShapeError(f"Linear expected {self.in_dim} rows, got {x.shape[0]}")
        return self.weight @ x + self.bias


class LayerNorm(Module):
    """Per-column normalization over the feature axis, then a learned affine."""

    def __init__(self, dim: int, eps: float = LAYER_NORM_EPS):
        super().__init__()
        if dim == 0:
            raise ShapeError("LayerNorm over zero features")
        self.dim = dim
        self.eps = eps
        self.gain = Parameter(np.ones((dim, 1)))
        self.bias = Parameter(np.zeros((dim, 1)))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[0] != self.dim:
            raise ShapeError(f"LayerNorm expected {self.dim} rows, got {x.shape[0]}")
        return layer_norm(x, self.gain, self.bias, self.eps)


class Dropout(Module):
    """Inverted dropout with a module-owned generator (reseedable)."""

    def __init__(self, rate: float, seed: int = 0):
        super().__init__()
        if not 0.0 <= rate < 1.0:
            raise ConfigError(f"dropout rate {rate} outside [0, 1)")
        self.rate = rate
        self._rng = np.random.default_rng(seed)

    def reseed(self, seed: int) -> None:
        self._rng = np.random.default_rng(seed)

    def __call__(self, x: Tensor) -> Tensor:
        if not self.training or self.rate == 0.0 or not grad_enabled():
            return x
        keep = 1.0 - self.rate
        mask = (self._rng.random(x.shape) < keep) / keep
        return x * Tensor(mask)


def swish(x: Tensor) -> Tensor:
    return x * x.sigmoid()


class FeedForward(Module):
    """Two-layer position-wise network with a configurable activation."""

    def __init__(self, dim, hidden_dim, rng, activation="relu", dropout=0.0):
        super().__init__()
        self.expand = Linear(dim, hidden_dim, rng)
        self.project = Linear(hidden_dim, dim, rng)
        self.dropout = Dropout(dropout, seed=int(rng.integers(2**31)))
        if activation == "relu":
            self._act = Tensor.relu
        elif activation == "swish":
            self._act = swish
        else:
            raise ConfigError(f"unknown activation {activation!r}")

    def __call__(self, x: Tensor) -> Tensor:
        return self.project(self.dropout(self._act(self.expand(x))))


class MultiHeadAttention(Module):
    """Scaled dot-product attention with learned Q/K/V/output projections.

    Queries, keys and values are D x m / D x n matrices. There is no
    positional information: the output is invariant under any joint
    permutation of key/value columns.
    """

    def __init__(self, dim: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if heads < 1 or dim % heads != 0:
            raise ConfigError(f"heads={heads} must divide model dim {dim}")
        self.dim = dim
        self.heads = heads
        self.head_dim = dim // heads
        self.query_proj = Linear(dim, dim, rng)
        self.key_proj = Linear(dim, dim, rng)
        self.value_proj = Linear(dim, dim, rng)
        self.out_proj = Linear(dim, dim, rng)

    def __call__(self, query: Tensor, key: Tensor, value: Tensor) -> Tensor:
        if query.shape[0] != self.dim or key.shape[0] != self.dim or value.shape[0] != self.dim:
            raise ShapeError("attention operands must have model-dim rows")
        if key.shape[1] != value.shape[1]:
            raise ShapeError("key and value must have the same number of columns")
        q = self.query_proj(query)
        k = self.key_proj(key)
        v = self.value_proj(value)
        return self.out_proj(scaled_dot_attention(q, k, v, self.heads))


class LSTMCell(Module):
    """Single LSTM step; gate order is (input, forget, cell, output)."""

    def __init__(self, input_dim: int, hidden_dim: int, rng: np.random.Generator):
        super().__init__()
        self.input_dim = input_dim
        self.hidden_dim = hidden_dim
        self.weight_x = Parameter(uniform_init(rng, (4 * hidden_dim, input_dim), input_dim))
        self.weight_h = Parameter(uniform_init(rng, (4 * hidden_dim, hidden_dim), hidden_dim))
        bias = np.zeros((4 * hidden_dim, 1))
        bias[hidden_dim : 2 * hidden_dim] = 1.0  # forget gate open at init
        self.bias = Parameter(bias)

    def __call__(self, x: Tensor, h: Tensor, c: Tensor) -> tuple[Tensor, Tensor]:
        if x.shape != (self.input_dim, 1) or h.shape != (self.hidden_dim, 1):
            raise ShapeError(
                f"LSTMCell expected x ({self.input_dim},1) and h ({self.hidden_dim},1), "
                f"got {x.shape} and {h.shape}"
            )
        gates = self.weight_x @ x + self.weight_h @ h + self.bias
        d = self.hidden_dim
        i = gates[0:d, :].sigmoid()
        f = gates[d : 2 * d, :].sigmoid()
        g = gates[2 * d : 3 * d, :].tanh()
        o = gates[3 * d : 4 * d, :].sigmoid()
        c_next = f * c + i * g
        h_next = o * c_next.tanh()
        return h_next, c_next

    def initial_state(self) -> tuple[Tensor, Tensor]:
        from .autodiff import zeros

        return zeros((self.hidden_dim, 1)), zeros((self.hidden_dim, 1))
