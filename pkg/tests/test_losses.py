"""Objective functions: posteriors, PIT diarization loss, existence loss."""

import itertools
import math

import numpy as np
import pytest

from diar.autodiff import Parameter, Tensor
from diar.errors import ConfigError, ShapeError
from diar.losses import (
    PROB_FLOOR,
    binary_cross_entropy,
    exist_loss,
    pit_loss,
    posteriors,
    total_loss,
)

from oracles import pit_loss_bruteforce


class TestPosteriors:
    def test_zero_attractors_give_half(self, rng):
        att = Tensor(np.zeros((4, 2)))
        emb = Tensor(rng.normal(size=(4, 6)))
        p = posteriors(att, emb)
        assert p.shape == (6, 2)
        np.testing.assert_allclose(p.data, 0.5)

    def test_matching_unit_vector_gives_sigmoid_of_norm(self):
        # attractor equal to an embedding column of squared norm 3
        column = np.array([[1.0], [1.0], [1.0]])
        att = Tensor(column)
        emb = Tensor(column)
        p = posteriors(att, emb)
        assert p.data[0, 0] == pytest.approx(0.9525741268224334, abs=1e-12)

    def test_negated_attractor_mirrors_probability(self, rng):
        att = rng.normal(size=(5, 1))
        emb = Tensor(rng.normal(size=(5, 7)))
        plus = posteriors(Tensor(att), emb).data
        minus = posteriors(Tensor(-att), emb).data
        np.testing.assert_allclose(plus + minus, 1.0, atol=1e-12)

    def test_dimension_mismatch(self, rng):
        with pytest.raises(ShapeError):
            posteriors(Tensor(rng.normal(size=(4, 2))), Tensor(rng.normal(size=(5, 6))))

    def test_clamped_into_open_interval(self):
        att = Tensor(np.full((2, 1), 100.0))
        emb = Tensor(np.full((2, 3), 100.0))
        p = posteriors(att, emb)
        assert p.data.max() == 1.0 - PROB_FLOOR


class TestPitLoss:
    def test_perfect_prediction_near_zero(self):
        y = np.array([[1, 0], [0, 1], [1, 1]])
        p = Tensor(np.clip(y.astype(float), PROB_FLOOR, 1 - PROB_FLOOR))
        loss, perm = pit_loss(p, y)
        assert float(loss.data) <= 2e-7
        assert perm == (0, 1)

    def test_label_permutation_leaves_value_unchanged(self, rng):
        p = Tensor(rng.random((6, 3)))
        y = (rng.random((6, 3)) < 0.4).astype(int)
        base = float(pit_loss(p, y)[0].data)
        for perm in itertools.permutations(range(3)):
            permuted = float(pit_loss(p, y[:, perm])[0].data)
            assert permuted == base  # exact equality

    def test_hand_expanded_two_frame_case(self):
        # frozen from the brute-force expansion of both permutations
        p = Tensor(np.array([[0.9, 0.2], [0.8, 0.3]]))
        y = np.array([[1, 0], [1, 0]])
        loss, perm = pit_loss(p, y)
        assert float(loss.data) == pytest.approx(0.2270806405562445, abs=1e-12)
        assert perm == (0, 1)

    def test_matches_bruteforce_oracle_100_instances(self):
        for seed in range(100):
            local = np.random.default_rng(seed)
            frames = int(local.integers(1, 11))
            speakers = int(local.integers(1, 5))
            p = local.random((frames, speakers)) * 0.98 + 0.01
            y = (local.random((frames, speakers)) < 0.5).astype(int)
            expected = pit_loss_bruteforce(p, y)
            got = float(pit_loss(Tensor(p), y)[0].data)
            assert got == pytest.approx(expected, abs=1e-12)

    def test_hungarian_equals_exhaustive(self, rng):
        for _ in range(20):
            p = Tensor(rng.random((8, 4)) * 0.98 + 0.01)
            y = (rng.random((8, 4)) < 0.5).astype(int)
            exhaustive = float(pit_loss(p, y, method="exhaustive")[0].data)
            hungarian = float(pit_loss(p, y, method="hungarian")[0].data)
            assert hungarian == pytest.approx(exhaustive, abs=1e-12)

    def test_speaker_limit_directs_to_hungarian(self, rng):
        p = Tensor(rng.random((4, 5)))
        y = (rng.random((4, 5)) < 0.5).astype(int)
        with pytest.raises(ConfigError) as err:
            pit_loss(p, y)
        assert "hungarian" in str(err.value)
        pit_loss(p, y, method="hungarian")  # works

    def test_frame_mask_excludes_padding(self, rng):
        p_valid = rng.random((4, 2)) * 0.98 + 0.01
        y_valid = (rng.random((4, 2)) < 0.5).astype(int)
        p_padded = np.concatenate([p_valid, np.full((3, 2), 0.5)])
        y_padded = np.concatenate([y_valid, np.zeros((3, 2), dtype=int)])
        mask = np.array([1, 1, 1, 1, 0, 0, 0])
        masked = float(pit_loss(Tensor(p_padded), y_padded, frame_mask=mask)[0].data)
        plain = float(pit_loss(Tensor(p_valid), y_valid)[0].data)
        assert masked == pytest.approx(plain, abs=1e-12)

    def test_gradient_flows_only_through_best_permutation(self):
        # column 0 clearly matches label 0; the losing permutation gets no gradient
        p = Parameter(np.array([[0.9, 0.1], [0.9, 0.1]]))
        y = np.array([[1, 0], [1, 0]])
        loss, perm = pit_loss(p, y)
        loss.backward()
        assert perm == (0, 1)
        # gradient w.r.t. p under the identity assignment only:
        # d/dp of mean BCE = (p - y) / (p (1-p) T S) clipped inside
        expected = (p.data - y) / (p.data * (1 - p.data) * 4)
        np.testing.assert_allclose(p.grad, expected, atol=1e-12)


class TestExistLoss:
    def test_perfect_prediction_near_zero(self):
        q = Tensor(np.array([[1 - PROB_FLOOR], [1 - PROB_FLOOR], [PROB_FLOOR]]))
        assert float(exist_loss(q, 2).data) <= 2e-7

    def test_uniform_half_gives_log_two(self):
        q = Tensor(np.full((4, 1), 0.5))
        assert float(exist_loss(q, 3).data) == pytest.approx(math.log(2.0), abs=1e-12)

    def test_direct_expansion(self):
        # mean of (-ln 0.9, -ln 0.7, -ln 0.8), frozen
        q = Tensor(np.array([[0.9], [0.7], [0.2]]))
        assert float(exist_loss(q, 2).data) == pytest.approx(0.2283930036369227, abs=1e-12)

    def test_nonnegative_everywhere(self, rng):
        for _ in range(50):
            k = int(rng.integers(1, 6))
            q = Tensor(rng.random((k + 1, 1)) * 0.98 + 0.01)
            assert float(exist_loss(q, k).data) > 0.0

    def test_wrong_length_rejected(self):
        with pytest.raises(ShapeError):
            exist_loss(Tensor(np.full((3, 1), 0.5)), 3)


class TestTotalLoss:
    def test_arithmetic(self):
        total = total_loss(Tensor(np.array(0.5)), Tensor(np.array(0.25)), 1.0)
        assert float(total.data) == pytest.approx(0.75)

    def test_lambda_zero_drops_existence_term(self):
        diar = Parameter(np.array(0.5))
        exist = Parameter(np.array(0.25))
        total = total_loss(diar, exist, 0.0)
        total.backward()
        assert float(total.data) == pytest.approx(0.5)
        assert exist.grad == pytest.approx(0.0)

    def test_negative_lambda_rejected(self):
        with pytest.raises(ConfigError):
            total_loss(Tensor(np.array(0.5)), Tensor(np.array(0.25)), -1.0)


def test_bce_matches_formula(rng):
    p = rng.random((5, 2)) * 0.98 + 0.01
    y = (rng.random((5, 2)) < 0.5).astype(float)
    got = binary_cross_entropy(Tensor(p), y).data
    expected = -(y * np.log(p) + (1 - y) * np.log(1 - p))
    np.testing.assert_allclose(got, expected, atol=1e-14)
