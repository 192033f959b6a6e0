"""LSTM encoder-decoder attractor module (with optional CSV-conditioned decoding).

The encoder LSTM consumes the framewise embeddings (shuffled along time
during training) and its final state initializes the decoder LSTM, which
emits one attractor per step. The decoder input is a zero vector, or the
conversational summary vector when provided. Each attractor's existence
probability is a sigmoid of a linear map of the hidden state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, clip, concat, zeros
from .errors import InputError
from .nn import LSTMCell, Linear, Module

PROB_FLOOR = 1e-7


@dataclass
class AttractorSet:
    """D x K attractor matrix with K existence probabilities."""

    attractors: Tensor
    existence: Tensor  # K x 1

    @property
    def count(self) -> int:
        return self.attractors.shape[1]

    def existence_values(self) -> np.ndarray:
        return self.existence.data.reshape(-1)


@dataclass
class EdaState:
    hidden: Tensor
    cell: Tensor


class EdaAttractors(Module):
    def __init__(self, dim: int, rng: np.random.Generator, hard_cap: int = 20):
        super().__init__()
        self.dim = dim
        self.hard_cap = hard_cap
        self.frame_encoder = LSTMCell(dim, dim, rng)
        self.step_decoder = LSTMCell(dim, dim, rng)
        self.existence_head = Linear(dim, 1, rng)

    # -- encoding ------------------------------------------------------------

    def encode(
        self,
        embeddings: Tensor,
        shuffle: bool = True,
        seed: int = 0,
        permutation: np.ndarray | None = None,
    ) -> EdaState:
        """Run the encoder LSTM over frames; shuffled order when requested."""
        num = embeddings.shape[1]
        if num < 1:
            raise InputError("eda encode requires at least one frame")
        if permutation is None:
            if shuffle:
                permutation = np.random.default_rng(seed).permutation(num)
            else:
                permutation = np.arange(num)
        h, c = self.frame_encoder.initial_state()
        for t in permutation:
            h, c = self.frame_encoder(embeddings[:, int(t) : int(t) + 1], h, c)
        return EdaState(hidden=h, cell=c)

    # -- decoding ------------------------------------------------------------

    def _step(self, state, csv):
        step_input = csv if csv is not None else zeros((self.dim, 1))
        h, c = self.step_decoder(step_input, state.hidden, state.cell)
        existence = clip(self.existence_head(h).sigmoid(), PROB_FLOOR, 1.0 - PROB_FLOOR)
        return EdaState(h, c), h, existence

    def decode(self, state: EdaState, max_attractors: int, csv: Tensor | None = None) -> AttractorSet:
        """Emit exactly ``max_attractors`` attractors and existence probabilities."""
        if max_attractors < 1:
            raise InputError("max_attractors must be >= 1")
        columns, probs = [], []
        for _ in range(max_attractors):
            state, attractor, existence = self._step(state, csv)
            columns.append(attractor)
            probs.append(existence)
        return AttractorSet(concat(columns, axis=1), concat(probs, axis=0))

    def infer_count(
        self,
        state: EdaState,
        csv: Tensor | None = None,
        q_threshold: float = 0.5,
        hard_cap: int | None = None,
    ) -> AttractorSet:
        """Decode until the first existence probability drops to the threshold.

        The attractor whose probability fails the test is discarded; the
        estimated speaker count is the number of attractors kept. The loop
        is bounded by ``hard_cap``.
        """
        cap = self.hard_cap if hard_cap is None else hard_cap
        if cap < 1:
            raise InputError("hard_cap must be >= 1")
        columns, probs = [], []
        for _ in range(cap):
            state, attractor, existence = self._step(state, csv)
            if existence.data.item() <= q_threshold:
                break
            columns.append(attractor)
            probs.append(existence)
        if not columns:
            return AttractorSet(zeros((self.dim, 0)), zeros((0, 1)))
        return AttractorSet(concat(columns, axis=1), concat(probs, axis=0))
