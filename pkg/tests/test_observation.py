"""Observation densities and samplers against independent references.

Frozen reference numbers are scipy.stats.nbinom / scipy.stats.poisson
logpmf evaluations (a code path disjoint from the gammaln expression
under test).
"""

import numpy as np
import pytest
from scipy import stats

from epismc import (
    NegativeBinomial,
    Poisson,
    log_observation_density,
    sample_observation,
)
from epismc.rng import substream


def test_nb_matches_frozen_reference():
    nb = NegativeBinomial(r=100.0)
    assert log_observation_density(3, 5.0, nb) == pytest.approx(
        -1.9590796832279054, abs=1e-12
    )
    assert log_observation_density(0, 5.0, nb) == pytest.approx(
        -4.879016416943205, abs=1e-12
    )
    assert log_observation_density(250, 180.0, nb) == pytest.approx(
        -8.332752827957108, abs=1e-12
    )
    assert log_observation_density(7, 0.4, NegativeBinomial(r=2.5)) == pytest.approx(
        -11.358571105602834, abs=1e-12
    )


def test_poisson_matches_frozen_reference():
    po = Poisson()
    assert log_observation_density(3, 5.0, po) == pytest.approx(
        -1.9634457319257543, abs=1e-12
    )
    assert log_observation_density(0, 5.0, po) == pytest.approx(-5.0, abs=1e-12)
    assert log_observation_density(250, 180.0, po) == pytest.approx(
        -15.80601906830043, abs=1e-12
    )


def test_zero_mean_is_point_mass():
    for model in (NegativeBinomial(r=100.0), Poisson()):
        assert log_observation_density(0, 0.0, model) == 0.0
        assert log_observation_density(1, 0.0, model) == -np.inf
        assert log_observation_density(17, 0.0, model) == -np.inf


def test_broadcasting_and_array_output():
    nb = NegativeBinomial(r=10.0)
    out = log_observation_density(np.array([0, 1, 2]), 3.0, nb)
    assert out.shape == (3,)
    ref = stats.nbinom.logpmf([0, 1, 2], 10.0, 10.0 / 13.0)
    np.testing.assert_allclose(out, ref, atol=1e-12)
    out2 = log_observation_density(2, np.array([0.0, 3.0]), nb)
    assert out2[0] == -np.inf


def test_pmf_normalizes():
    # sum over y = 0..2000 must be 1 to 1e-8 for means up to 20
    y = np.arange(2001)
    for h in (0.3, 5.0, 20.0):
        for model in (NegativeBinomial(r=7.0), Poisson()):
            total = np.exp(log_observation_density(y, h, model)).sum()
            assert total == pytest.approx(1.0, abs=1e-8)


def test_pmf_mean_identity():
    y = np.arange(4001)
    for h in (1.0, 12.5):
        for model in (NegativeBinomial(r=4.0), Poisson()):
            p = np.exp(log_observation_density(y, h, model))
            assert (y * p).sum() == pytest.approx(h, rel=1e-8)


def test_nb_large_r_approaches_poisson():
    # log-pmf gap decays like y^2 / (2r)
    y = np.arange(0, 60)
    nb = log_observation_density(y, 8.0, NegativeBinomial(r=1e8))
    po = log_observation_density(y, 8.0, Poisson())
    np.testing.assert_allclose(nb, po, atol=1e-4)


def test_sampler_moments():
    rng = substream(314)
    h = 50.0
    r = 6.0
    n = 200_000
    draws = sample_observation(np.full(n, h), NegativeBinomial(r=r), rng)
    var = h + h * h / r
    assert abs(draws.mean() - h) < 3.0 * np.sqrt(var / n)
    # fourth-moment SE bound is loose; 3 SE on a normal approximation
    se_var = var * np.sqrt(2.0 / n) * 3.0  # crude but stable for skewed NB
    assert abs(draws.var(ddof=1) - var) < 10.0 * se_var
    po = sample_observation(np.full(n, h), Poisson(), substream(315))
    assert abs(po.mean() - h) < 3.0 * np.sqrt(h / n)


def test_sampler_density_agreement_chisquare():
    # goodness of fit at significance 1e-3, pooling the tail
    rng = substream(2718)
    model = NegativeBinomial(r=5.0)
    h = 4.0
    n = 100_000
    draws = sample_observation(np.full(n, h), model, rng)
    kmax = 25
    edges = np.arange(kmax + 1)
    observed = np.bincount(np.minimum(draws, kmax), minlength=kmax + 1)
    logp = log_observation_density(edges, h, model)
    expected = np.exp(logp) * n
    expected[-1] = n - expected[:-1].sum()  # pool >= kmax
    chi2 = ((observed - expected) ** 2 / expected).sum()
    assert chi2 < stats.chi2.ppf(1.0 - 1e-3, df=kmax)


def test_sampler_scalar_and_zero_mean():
    rng = substream(1)
    one = sample_observation(12.0, NegativeBinomial(r=3.0), rng)
    assert isinstance(one, int)
    zeros = sample_observation(np.zeros(100), NegativeBinomial(r=3.0), rng)
    assert (zeros == 0).all()
    assert sample_observation(0.0, Poisson(), rng) == 0


def test_r_validation():
    with pytest.raises(ValueError, match="r must be > 0"):
        NegativeBinomial(r=0.0)
