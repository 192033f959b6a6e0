"""Conformer-style encoder producing framewise embeddings and an optional
conversational summary vector (CSV).

The CSV is a learnable token prepended as column 0 of the projected input.
It participates in attention and feed-forward sublayers but bypasses every
convolution module: the token column is removed from the convolution input
and rejoined through the residual branch only, so its value (and gradient)
is independent of convolution parameters. No positional encoding anywhere.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Parameter, Tensor, concat, zeros
from .errors import ConfigError, ShapeError
from .nn import (
    Dropout,
    FeedForward,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    swish,
    uniform_init,
)


@dataclass
class EncoderConfig:
    num_blocks: int = 4
    model_dim: int = 256
    heads: int = 4
    ff_dim: int = 1024
    conv_kernel: int = 15
    use_csv_token: bool = False
    dropout: float = 0.1
    input_dim: int = 23

    def __post_init__(self):
        if self.model_dim % self.heads != 0:
            raise ConfigError(
                f"model_dim {self.model_dim} not divisible by heads {self.heads}"
            )
        if self.conv_kernel < 1 or self.conv_kernel % 2 == 0:
            raise ConfigError(f"conv_kernel must be odd, got {self.conv_kernel}")
        if self.num_blocks < 1:
            raise ConfigError("num_blocks must be >= 1")


@dataclass
class EmbeddingMatrix:
    """Framewise embeddings (D x T) plus the CSV column when enabled."""

    embeddings: Tensor
    csv: Tensor | None = None


class DepthwiseConv1d(Module):
    """Per-channel 1-D convolution along the column axis, same padding."""

    def __init__(self, dim: int, kernel: int, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        self.kernel = kernel
        self.weight = Parameter(uniform_init(rng, (dim, kernel), kernel))
        self.bias = Parameter(np.zeros((dim, 1)))

    def __call__(self, x: Tensor) -> Tensor:
        num = x.shape[1]
        half = self.kernel // 2
        if half > 0:
            pad = zeros((self.dim, half))
            padded = concat([pad, x, pad], axis=1)
        else:
            padded = x
        out = None
        for j in range(self.kernel):
            term = self.weight[:, j : j + 1] * padded[:, j : j + num]
            out = term if out is None else out + term
        return out + self.bias


class ConvModule(Module):
    """Conformer convolution branch: pointwise GLU, depthwise conv, pointwise."""

    def __init__(self, dim: int, kernel: int, rng: np.random.Generator, dropout: float):
        super().__init__()
        self.norm = LayerNorm(dim)
        self.pointwise_in = Linear(dim, 2 * dim, rng)
        self.depthwise = DepthwiseConv1d(dim, kernel, rng)
        self.conv_norm = LayerNorm(dim)
        self.pointwise_out = Linear(dim, dim, rng)
        self.dropout = Dropout(dropout, seed=int(rng.integers(2**31)))
        self.dim = dim

    def __call__(self, x: Tensor) -> Tensor:
        h = self.pointwise_in(self.norm(x))
        gated = h[: self.dim, :] * h[self.dim :, :].sigmoid()
        h = self.depthwise(gated)
        h = swish(self.conv_norm(h))
        return self.dropout(self.pointwise_out(h))


class ConformerBlock(Module):
    """Macaron block: half FF, self-attention, convolution, half FF, final norm.

    Pre-norm residual branches; ``csv_mask=True`` routes column 0 around the
    convolution branch.
    """

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        d = cfg.model_dim
        self.ff_first = FeedForward(d, cfg.ff_dim, rng, activation="swish", dropout=cfg.dropout)
        self.ff_first_norm = LayerNorm(d)
        self.attention = MultiHeadAttention(d, cfg.heads, rng)
        self.attention_norm = LayerNorm(d)
        self.attention_dropout = Dropout(cfg.dropout, seed=int(rng.integers(2**31)))
        self.conv = ConvModule(d, cfg.conv_kernel, rng, cfg.dropout)
        self.ff_second = FeedForward(d, cfg.ff_dim, rng, activation="swish", dropout=cfg.dropout)
        self.ff_second_norm = LayerNorm(d)
        self.final_norm = LayerNorm(d)
        self.dim = d

    def __call__(self, h: Tensor, csv_mask: bool = False) -> Tensor:
        h = h + 0.5 * self.ff_first(self.ff_first_norm(h))
        a = self.attention_norm(h)
        h = h + self.attention_dropout(self.attention(a, a, a))
        if csv_mask:
            if h.shape[1] < 2:
                branch = zeros(h.shape)  # lone token column: conv branch is empty
            else:
                body = self.conv(h[:, 1:])
                branch = concat([zeros((self.dim, 1)), body], axis=1)
            h = h + branch
        else:
            h = h + self.conv(h)
        h = h + 0.5 * self.ff_second(self.ff_second_norm(h))
        return self.final_norm(h)


class ConformerEncoder(Module):
    """Input projection, optional CSV token, and a stack of Conformer blocks."""

    def __init__(self, cfg: EncoderConfig, rng: np.random.Generator):
        super().__init__()
        self.cfg = cfg
        self.input_proj = Linear(cfg.input_dim, cfg.model_dim, rng)
        if cfg.use_csv_token:
            self.csv_token = Parameter(
                uniform_init(rng, (cfg.model_dim, 1), cfg.model_dim)
            )
        self.blocks = [ConformerBlock(cfg, rng) for _ in range(cfg.num_blocks)]

    def __call__(self, features: Tensor) -> EmbeddingMatrix:
        if features.shape[0] != self.cfg.input_dim:
            raise ShapeError(
                f"encoder expected {self.cfg.input_dim}-dim features, got {features.shape[0]}"
            )
        h = self.input_proj(features)
        if self.cfg.use_csv_token:
            h = concat([self.csv_token, h], axis=1)
            for block in self.blocks:
                h = block(h, csv_mask=True)
            return EmbeddingMatrix(embeddings=h[:, 1:], csv=h[:, :1])
        for block in self.blocks:
            h = block(h, csv_mask=False)
        return EmbeddingMatrix(embeddings=h, csv=None)
