"""Training objectives: permutation-invariant diarization loss, attractor
existence loss, and their weighted total.

Probabilities are clamped to [1e-7, 1 - 1e-7] before any cross entropy so
the losses stay finite at saturated predictions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, clip
from .errors import ConfigError, ShapeError

PROB_FLOOR = 1e-7
EXHAUSTIVE_PERMUTATION_LIMIT = 4


@dataclass
class LossBreakdown:
    diar: float
    exist: float
    total: float
    best_permutation: tuple[int, ...]


def posteriors(attractors: Tensor, embeddings: Tensor) -> Tensor:
    """Speech-activity probabilities: sigmoid of attractor-embedding dot products.

    Returns a T x K matrix, one column per attractor, clamped away from 0/1.
    """
    if attractors.shape[0] != embeddings.shape[0]:
        raise ShapeError(
            f"attractors ({attractors.shape}) and embeddings ({embeddings.shape}) "
            "must share the feature dimension"
        )
    logits = attractors.transpose() @ embeddings  # K x T
    return clip(logits.sigmoid(), PROB_FLOOR, 1.0 - PROB_FLOOR).transpose()


def binary_cross_entropy(p: Tensor, target: np.ndarray) -> Tensor:
    """Elementwise BCE; ``p`` must already be clamped inside (0, 1)."""
    target = np.asarray(target, dtype=p.data.dtype)
    return -(Tensor(target) * p.log() + Tensor(1.0 - target) * (1.0 - p).log())


def pit_loss(
    p: Tensor,
    labels: np.ndarray,
    frame_mask: np.ndarray | None = None,
    method: str = "exhaustive",
) -> tuple[Tensor, tuple[int, ...]]:
    """Minimum mean BCE over speaker assignments between predictions and labels.

    ``p`` is T x S (probabilities), ``labels`` is T x S binary. The returned
    permutation ``perm`` maps prediction column s to label column perm[s];
    gradient flows only through the minimizing assignment. ``frame_mask``
    (T-vector of 0/1) excludes padded frames from the mean.

    The per-pair BCE cost matrix makes the optimal-assignment route exact:
    the objective decomposes as a sum of (prediction, label) pair costs.
    """
    num_frames, num_speakers = p.shape
    if labels.shape != (num_frames, num_speakers):
        raise ShapeError(f"labels shape {labels.shape} != predictions shape {p.shape}")
    if num_speakers == 0:
        raise ShapeError("pit_loss requires at least one speaker column")
    if method == "exhaustive" and num_speakers > EXHAUSTIVE_PERMUTATION_LIMIT:
        raise ConfigError(
            f"{num_speakers} speakers exceeds the exhaustive permutation limit "
            f"({EXHAUSTIVE_PERMUTATION_LIMIT}); use method='hungarian'"
        )

    if frame_mask is not None:
        mask_col = Tensor(np.asarray(frame_mask, dtype=p.data.dtype).reshape(-1, 1))
        valid_frames = float(np.sum(frame_mask))
        if valid_frames == 0:
            raise ShapeError("frame_mask excludes every frame")
    else:
        mask_col = None
        valid_frames = float(num_frames)

    # cost[i][j]: summed BCE of prediction column i against label column j
    cost: list[list[Tensor]] = []
    for i in range(num_speakers):
        row = []
        for j in range(num_speakers):
            terms = binary_cross_entropy(p[:, i : i + 1], labels[:, j : j + 1])
            if mask_col is not None:
                terms = terms * mask_col
            row.append(terms.sum())
        cost.append(row)
    cost_values = np.array([[float(c.data) for c in row] for row in cost])

    if method == "hungarian":
        from scipy.optimize import linear_sum_assignment

        rows, cols = linear_sum_assignment(cost_values)
        best = tuple(int(c) for _, c in sorted(zip(rows, cols)))
    elif method == "exhaustive":
        best, best_value = None, np.inf
        for perm in itertools.permutations(range(num_speakers)):
            value = sum(cost_values[i][perm[i]] for i in range(num_speakers))
            if value < best_value:
                best, best_value = perm, value
    else:
        raise ConfigError(f"unknown pit method {method!r}")

    total = cost[0][best[0]]
    for i in range(1, num_speakers):
        total = total + cost[i][best[i]]
    return total * (1.0 / (valid_frames * num_speakers)), best


def exist_loss(q: Tensor, num_speakers: int) -> Tensor:
    """Mean BCE between existence probabilities and [1]*num_speakers + [0].

    ``q`` must hold exactly num_speakers + 1 clamped probabilities.
    """
    expected = num_speakers + 1
    if q.size != expected:
        raise ShapeError(f"existence vector has {q.size} entries, expected {expected}")
    target = np.ones((expected, 1))
    target[-1, 0] = 0.0
    return binary_cross_entropy(q.reshape(expected, 1), target).mean()


def total_loss(diar: Tensor, exist: Tensor, lambda_exist: float) -> Tensor:
    """Weighted sum of the two objectives.

    The existence-gradient cut at the attractor-module input is the model's
    responsibility (it feeds a detached embedding copy into the existence
    path); this function is plain arithmetic.
    """
    if lambda_exist < 0:
        raise ConfigError(f"lambda must be nonnegative, got {lambda_exist}")
    return diar + lambda_exist * exist
