import math

import numpy as np
import pytest

from modules.errors import ValidationError
from modules.numerics import Rng, log_sum_exp, normal_draws, pairwise_sq_dists


def test_pairwise_sq_dists_hand_cases():
    a = np.array([[0.0], [1.0]])
    np.testing.assert_array_equal(pairwise_sq_dists(a, a), [[0.0, 1.0], [1.0, 0.0]])
    assert pairwise_sq_dists([[0.0, 0.0]], [[3.0, 4.0]])[0, 0] == pytest.approx(25.0, abs=1e-12)


def test_pairwise_sq_dists_matches_naive_loop(np_rng):
    a = np_rng.normal(size=(5, 3))
    b = np_rng.normal(size=(7, 3))
    d = pairwise_sq_dists(a, b)
    for i in range(5):
        for j in range(7):
            naive = sum((a[i, k] - b[j, k]) ** 2 for k in range(3))
            assert abs(d[i, j] - naive) < 1e-12
    assert np.all(d >= 0)


def test_pairwise_sq_dists_self_is_symmetric_with_zero_diagonal(np_rng):
    a = np_rng.normal(size=(20, 4)) * 10
    d = pairwise_sq_dists(a, a)
    assert np.all(np.diag(d) == 0.0)
    np.testing.assert_array_equal(d, d.T)


def test_pairwise_sq_dists_dimension_mismatch_names_shapes():
    with pytest.raises(ValidationError, match=r"\(2, 3\).*\(4, 2\)"):
        pairwise_sq_dists(np.zeros((2, 3)), np.zeros((4, 2)))


def test_log_sum_exp_examples():
    assert log_sum_exp([0.0, 0.0]) == pytest.approx(math.log(2.0), abs=1e-15)
    assert log_sum_exp([-1000.0, -1000.0]) == pytest.approx(-1000.0 + math.log(2.0), abs=1e-12)
    assert abs(log_sum_exp([-1e9, 0.0])) < 1e-12


def test_log_sum_exp_shift_invariance(np_rng):
    v = np_rng.normal(size=50) * 30
    for c in (-500.0, 3.25, 700.0):
        assert log_sum_exp(v + c) == pytest.approx(log_sum_exp(v) + c, abs=1e-12 * max(1.0, abs(c)))


def test_log_sum_exp_empty_rejected():
    with pytest.raises(ValidationError):
        log_sum_exp([])


def test_normal_draws_moments():
    x = normal_draws(Rng(7), 10_000, 1, 0.0, 1.0)
    assert -0.05 <= x.mean() <= 0.05
    assert 0.97 <= x.std() <= 1.03
    y = normal_draws(Rng(8), 10_000, 2, 3.0, 1.0)
    assert np.all((y.mean(axis=0) >= 2.95) & (y.mean(axis=0) <= 3.05))


def test_normal_draws_deterministic_per_seed():
    np.testing.assert_array_equal(normal_draws(Rng(99), 5, 3), normal_draws(Rng(99), 5, 3))
    assert not np.array_equal(normal_draws(Rng(99), 5, 3), normal_draws(Rng(100), 5, 3))


def test_rng_streams_are_independent():
    a = Rng(5).derive(1).normal((4,))
    b = Rng(5).derive(2).normal((4,))
    assert not np.array_equal(a, b)
    np.testing.assert_array_equal(a, Rng(5, 1).normal((4,)))


@pytest.mark.parametrize("std", [0.0, -1.0])
def test_normal_draws_rejects_nonpositive_std(std):
    with pytest.raises(ValidationError):
        normal_draws(Rng(0), 3, 1, 0.0, std)
