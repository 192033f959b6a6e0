"""Transformer attractor module: combiner plus parallel transformer decoder.

A learnable global embedding matrix (one column per attractor slot,
max_speakers + 1 slots) is made conversation-dependent by combining it
with the summary vector, then refined by decoder blocks that self-attend
over the slots and cross-attend into the framewise embeddings. All slots
are produced in a single parallel pass; there is no positional encoding,
so attractors are invariant to frame order and equivariant to slot order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Parameter, Tensor, clip
from .eda import PROB_FLOOR, AttractorSet
from .errors import ConfigError, InputError
from .nn import Dropout, FeedForward, LayerNorm, Linear, Module, MultiHeadAttention, uniform_init

COMBINER_VARIANTS = ("none", "add", "mult", "amp")


@dataclass(frozen=True)
class CombinerKind:
    variant: str = "amp"
    alpha: float = 1.0

    def __post_init__(self):
        if self.variant not in COMBINER_VARIANTS:
            raise ConfigError(
                f"unknown combiner {self.variant!r}; expected one of {COMBINER_VARIANTS}"
            )
        if self.variant == "amp" and self.alpha <= 0:
            raise ConfigError(f"amp combiner needs alpha > 0, got {self.alpha}")

    @property
    def needs_csv(self) -> bool:
        return self.variant != "none"


@dataclass
class TaConfig:
    num_decoder_layers: int = 3
    heads: int = 4
    ff_dim: int = 1024
    combiner: CombinerKind = field(default_factory=CombinerKind)
    max_speakers: int = 4
    dropout: float = 0.1

    def __post_init__(self):
        if self.num_decoder_layers < 1:
            raise ConfigError("num_decoder_layers must be >= 1")
        if self.max_speakers < 1:
            raise ConfigError("max_speakers must be >= 1")


def combine(csv: Tensor | None, global_embeddings: Tensor, kind: CombinerKind) -> Tensor:
    """Inject the summary vector into each global embedding column.

    add: csv + G, mult: csv * G, amp: alpha * sigmoid(csv) * G, none: G.
    """
    if kind.variant == "none":
        return global_embeddings
    if csv is None:
        raise ConfigError(f"combiner {kind.variant!r} requires a summary vector")
    if kind.variant == "add":
        return csv + global_embeddings
    if kind.variant == "mult":
        return csv * global_embeddings
    return kind.alpha * csv.sigmoid() * global_embeddings


class TaDecoderBlock(Module):
    """Post-norm decoder block: slot self-attention, frame cross-attention, FF."""

    def __init__(self, dim: int, heads: int, ff_dim: int, rng, dropout: float):
        super().__init__()
        self.self_attention = MultiHeadAttention(dim, heads, rng)
        self.self_norm = LayerNorm(dim)
        self.cross_attention = MultiHeadAttention(dim, heads, rng)
        self.cross_norm = LayerNorm(dim)
        self.ff = FeedForward(dim, ff_dim, rng, activation="relu", dropout=dropout)
        self.ff_norm = LayerNorm(dim)
        self.dropout = Dropout(dropout, seed=int(rng.integers(2**31)))

    def __call__(self, slots: Tensor, embeddings: Tensor) -> Tensor:
        mixed = self.self_norm(self.dropout(self.self_attention(slots, slots, slots)) + slots)
        attended = self.cross_norm(
            self.dropout(self.cross_attention(mixed, embeddings, embeddings)) + mixed
        )
        return self.ff_norm(self.ff(attended) + attended)


class TransformerAttractors(Module):
    def __init__(self, dim: int, cfg: TaConfig, rng: np.random.Generator):
        super().__init__()
        self.dim = dim
        self.cfg = cfg
        slots = cfg.max_speakers + 1
        self.global_embeddings = Parameter(uniform_init(rng, (dim, slots), dim))
        self.blocks = [
            TaDecoderBlock(dim, cfg.heads, cfg.ff_dim, rng, cfg.dropout)
            for _ in range(cfg.num_decoder_layers)
        ]
        self.existence_head = Linear(dim, 1, rng)

    @property
    def num_slots(self) -> int:
        return self.cfg.max_speakers + 1

    def decode(self, decoder_inputs: Tensor, embeddings: Tensor) -> AttractorSet:
        """Refine slot vectors against the frame embeddings; one parallel pass."""
        if embeddings.shape[1] < 1:
            raise InputError("ta decode requires at least one frame")
        if decoder_inputs.shape != (self.dim, self.num_slots):
            raise ConfigError(
                f"decoder inputs must be {(self.dim, self.num_slots)}, got {decoder_inputs.shape}"
            )
        h = decoder_inputs
        for block in self.blocks:
            h = block(h, embeddings)
        existence = clip(
            self.existence_head(h).sigmoid(), PROB_FLOOR, 1.0 - PROB_FLOOR
        ).transpose()
        return AttractorSet(attractors=h, existence=existence)

    def forward(self, embeddings: Tensor, csv: Tensor | None) -> AttractorSet:
        inputs = combine(csv, self.global_embeddings, self.cfg.combiner)
        return self.decode(inputs, embeddings)


def infer_count(attractor_set: AttractorSet, q_threshold: float = 0.5) -> tuple[int, AttractorSet]:
    """Maximal-prefix speaker counting: stop at the first probability <= threshold."""
    probs = attractor_set.existence_values()
    estimated = 0
    for value in probs:
        if value <= q_threshold:
            break
        estimated += 1
    truncated = AttractorSet(
        attractors=attractor_set.attractors[:, :estimated],
        existence=attractor_set.existence[:estimated, :],
    )
    return estimated, truncated
