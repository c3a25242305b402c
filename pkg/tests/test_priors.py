import math

import numpy as np
import pytest

from modules.errors import ValidationError
from modules.numerics import Rng
from modules.priors import PriorKind, PriorSpec, sample_prior


def test_gaussian_default_scale_is_five():
    z = sample_prior(PriorSpec(PriorKind.GAUSSIAN, dim=2), 10_000, Rng(1))
    assert z.shape == (10_000, 2)
    assert np.all(np.abs(z.mean(axis=0)) < 0.25)
    for s in z.std(axis=0):
        assert 4.85 <= s <= 5.15


def test_laplacian_variance_is_two_b_squared():
    z = sample_prior(PriorSpec("laplacian", dim=1, scale=1.0), 10_000, Rng(2))
    assert 1.8 <= z.var() <= 2.2
    assert np.all(np.isfinite(z))


def test_uniform_stays_in_range():
    z = sample_prior(PriorSpec("uniform", dim=3, location=1.0, scale=2.0), 5000, Rng(3))
    assert z.min() >= -1.0 and z.max() < 3.0
    assert z.mean() == pytest.approx(1.0, abs=0.1)


def test_swiss_roll_lies_on_the_spiral():
    spec = PriorSpec("swiss_roll", dim=2, scale=0.5, turns=1.5, noise_std=0.0)
    z = sample_prior(spec, 2000, Rng(4))
    r = np.hypot(z[:, 0], z[:, 1])
    t = r / spec.scale
    assert t.max() <= spec.turns * 2.0 * math.pi + 1e-9
    np.testing.assert_allclose(z[:, 0], spec.scale * t * np.cos(t), atol=1e-9)
    np.testing.assert_allclose(z[:, 1], spec.scale * t * np.sin(t), atol=1e-9)


def test_swiss_roll_requires_two_dims():
    with pytest.raises(ValidationError, match="dim=2"):
        PriorSpec("swiss_roll", dim=3)


@pytest.mark.parametrize("kind", list(PriorKind))
def test_sampling_is_deterministic_per_seed(kind):
    spec = PriorSpec(kind, dim=2)
    a = sample_prior(spec, 100, Rng(7, 2))
    b = sample_prior(spec, 100, Rng(7, 2))
    c = sample_prior(spec, 100, Rng(8, 2))
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)


def test_invalid_specs_are_rejected():
    with pytest.raises(ValidationError):
        PriorSpec("gaussian", dim=0)
    with pytest.raises(ValidationError):
        PriorSpec("gaussian", scale=-1.0)
    with pytest.raises(ValidationError, match="有効"):
        PriorSpec("cauchy")
    with pytest.raises(ValidationError):
        sample_prior(PriorSpec(), 0, Rng(0))


def test_spec_dict_round_trip():
    spec = PriorSpec("laplacian", dim=3, location=0.5, scale=2.0)
    d = spec.to_dict()
    assert d["kind"] == "laplacian"
    assert PriorSpec.from_dict(d) == spec
