import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from unbiased_langevin import CountingStream, reflection_max_coupling, sync_pairwise_reflection_coupling
from unbiased_langevin.coupling import overlap_probability
from unbiased_langevin.errors import DegenerateTransitionError, DimensionError


def overlap_by_quadrature(sep: float) -> float:
    val, _ = integrate.quad(lambda t: min(stats.norm.pdf(t), stats.norm.pdf(t, loc=sep)), -40.0, sep + 40.0,
                            points=[sep / 2])
    return val


def test_overlap_matches_quadrature():
    assert overlap_probability([0.0], [2.0], [1.0]) == pytest.approx(overlap_by_quadrature(2.0), abs=1e-8)
    assert overlap_probability([0.0], [2.0], [1.0]) == pytest.approx(0.3173, abs=1e-4)


def test_identical_means_always_meet():
    rng = CountingStream(1)
    for _ in range(200):
        d = reflection_max_coupling([0.3, -1.0], [0.3, -1.0], [0.5, 2.0], rng)
        assert d.met and np.array_equal(d.y1, d.y2)


def met_rate(mu2, n, seed):
    rng = CountingStream(seed)
    met = 0
    for _ in range(n):
        d = reflection_max_coupling([0.0], [mu2], [1.0], rng)
        met += d.met
        if d.met:
            assert np.array_equal(d.y1, d.y2)
        else:
            assert not np.array_equal(d.y1, d.y2)
    return met / n


def test_far_apart_rarely_meet():
    assert met_rate(10.0, 20_000, 2) < 1e-3


def test_met_rate_at_moderate_separation():
    n = 20_000
    p = overlap_by_quadrature(1.0)
    assert abs(met_rate(1.0, n, 3) - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_degenerate_scale_and_shapes():
    with pytest.raises(DegenerateTransitionError):
        reflection_max_coupling([0.0], [1.0], [0.0], CountingStream(0))
    with pytest.raises(DimensionError):
        reflection_max_coupling([0.0, 1.0], [1.0], [1.0], CountingStream(0))


def test_draw_consumption():
    rng = CountingStream(0)
    reflection_max_coupling(np.zeros(4), np.ones(4), np.ones(4), rng)
    assert (rng.gaussian_count, rng.uniform_count) == (4, 1)


def test_marginals_are_exact():
    mu1, mu2, s = np.array([0.0, 1.0]), np.array([0.8, 0.2]), np.array([1.0, 0.5])
    rng = CountingStream(5)
    n = 20_000
    y1 = np.empty((n, 2))
    y2 = np.empty((n, 2))
    for i in range(n):
        d = reflection_max_coupling(mu1, mu2, s, rng)
        y1[i], y2[i] = d.y1, d.y2
    for y, mu in ((y1, mu1), (y2, mu2)):
        se_mean = s / math.sqrt(n)
        assert np.all(np.abs(y.mean(axis=0) - mu) <= 4 * se_mean)
        # variance estimator SE for a Gaussian: sigma^2 sqrt(2 / (n - 1))
        assert np.all(np.abs(y.var(axis=0, ddof=1) - s ** 2) <= 4 * s ** 2 * math.sqrt(2 / (n - 1)))


def test_sync_both_equal_means_meet():
    rng = CountingStream(0)
    for _ in range(100):
        d = sync_pairwise_reflection_coupling(([1.0], [1.0]), ([2.0], [2.0]), [1.0], [2.0], rng)
        assert d.fine.met and d.coarse.met


def test_sync_fine_equal_meets_regardless_of_coarse():
    rng = CountingStream(0)
    for _ in range(200):
        d = sync_pairwise_reflection_coupling(([1.0], [1.0]), ([0.0], [50.0]), [1.0], [1.0], rng)
        assert d.fine.met and not d.coarse.met


def test_sync_per_level_rates():
    n = 20_000
    rng = CountingStream(4)
    fine = coarse = 0
    for _ in range(n):
        d = sync_pairwise_reflection_coupling(([0.0], [1.0]), ([0.0], [2.0]), [1.0], [1.0], rng)
        fine += d.fine.met
        coarse += d.coarse.met
    for count, sep in ((fine, 1.0), (coarse, 2.0)):
        p = overlap_by_quadrature(sep)
        assert abs(count / n - p) <= 3 * math.sqrt(p * (1 - p) / n)


def test_sync_shares_variates():
    a = sync_pairwise_reflection_coupling(([0.0, 0.0], [3.0, 0.0]), ([0.0, 0.0], [4.0, 0.0]),
                                          [1.0, 1.0], [2.0, 2.0], CountingStream(9))
    # same xi on both levels: y1 offsets are proportional to the scales
    np.testing.assert_allclose(a.coarse.y1, 2.0 * a.fine.y1)


@settings(max_examples=50, deadline=None)
@given(mu1=st.lists(st.floats(-5, 5), min_size=3, max_size=3),
       shift=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
       scale=st.floats(0.01, 10), seed=st.integers(0, 2**31))
def test_met_iff_bitwise_equal(mu1, shift, scale, seed):
    mu1 = np.array(mu1)
    d = reflection_max_coupling(mu1, mu1 + np.array(shift), np.full(3, scale), CountingStream(seed))
    assert d.met == bool(np.array_equal(d.y1, d.y2))
