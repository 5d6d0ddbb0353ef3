import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from unbiased_langevin import (
    CountingStream, DoubleWellModel, PhaseState, DynamicsParams, EstimatorConfig, GaussianModel, NonMeetingError,
    ReplicateResult, average_replicates, run_increment_quad, run_single_level_pair, sample_level,
    unbiased_replicate,
)
from unbiased_langevin.errors import ConfigError
from unbiased_langevin.estimator import (
    cost_from_draws, level_probabilities, level_probability, replicate_cost, time_averaged_estimate,
)
from unbiased_langevin.harness import increment_second_moments

TOY = GaussianModel([1.0, -1.0])
DYN = DynamicsParams()


def constant(u):
    return np.array([2.5, -7.125])


def single_term(phi_u, phi_ut, k, tau):
    return phi_u[k] + sum(phi_u[n] - phi_ut[n] for n in range(k + 1, tau))


@settings(max_examples=60, deadline=None)
@given(tau=st.integers(1, 30), k=st.integers(0, 15), extra=st.integers(0, 15), c=st.floats(-1e6, 1e6))
def test_constant_observable_is_exact(tau, k, extra, c):
    m = k + extra
    n = max(m, tau) + 1
    assert time_averaged_estimate(np.full(n, c), np.full(n, c), k, m, tau) == c


@settings(max_examples=60, deadline=None)
@given(tau=st.integers(1, 25), k=st.integers(0, 10), seed=st.integers(0, 10_000))
def test_m_equal_k_is_single_term(tau, k, seed):
    rng = np.random.default_rng(seed)
    n = max(k, tau) + 1
    u, ut = rng.normal(size=n), rng.normal(size=n)
    assert time_averaged_estimate(u, ut, k, k, tau) == pytest.approx(single_term(u, ut, k, tau), rel=1e-12, abs=1e-12)


def test_empty_correction_is_plain_average():
    u = np.arange(12.0)
    ut = u + 100.0
    # tau - 1 < k + 1: no correction terms
    assert time_averaged_estimate(u, ut, 5, 9, 6) == pytest.approx(np.mean(u[5:10]))


def test_hand_evaluated_time_average():
    u = np.array([0.0, 1.0, 2.0, 3.0, 4.0, 5.0])
    ut = np.array([9.0, 9.0, 1.0, 1.0, 1.0, 9.0])
    # k=1, m=2, tau=5: mean(u[1:3]) + (1/2)(u2 - ut2) + 1*(u3 - ut3) + 1*(u4 - ut4)
    assert time_averaged_estimate(u, ut, 1, 2, 5) == pytest.approx(1.5 + 0.5 + 2.0 + 3.0)
    with pytest.raises(ConfigError):
        time_averaged_estimate(u, ut, 3, 2, 5)


def test_horizon_rules():
    adaptive = EstimatorConfig(k=100)
    assert adaptive.horizon(300) == (100, 200)
    assert adaptive.horizon(150) == (100, 149)
    assert adaptive.horizon(40) == (20, 39)
    assert adaptive.horizon(1) == (1, 1)
    strict = EstimatorConfig(k=10, strict_k=True)
    assert strict.horizon(3) == (10, 20) and strict.horizon(50) == (10, 20)
    assert EstimatorConfig(k=10, m=15, strict_k=True).horizon(3) == (10, 15)


def test_config_validation():
    for kw in ({"l_star": 3, "l_max": 3}, {"alpha": 1.0}, {"M": 0}, {"k": 5, "m": 4}, {"observable": "nope"}):
        with pytest.raises(ConfigError):
            EstimatorConfig(**kw)


def test_level_masses():
    cfg = EstimatorConfig(l_star=5, l_max=12, level_exponent=1.5)
    weights = [2.0 ** (-1.5 * l) for l in range(5, 13)]
    assert level_probability(cfg, 5) == pytest.approx(weights[0] / sum(weights), rel=1e-14)
    assert level_probability(cfg, 5) == pytest.approx((1 - 2 ** -1.5) / (1 - 2 ** -12), rel=1e-12)
    assert level_probability(cfg, 5) == pytest.approx(0.6466, abs=1e-4)
    assert level_probabilities(cfg).sum() == pytest.approx(1.0, rel=1e-15)


def test_level_frequencies():
    cfg = EstimatorConfig(l_star=5, l_max=12)
    rng = CountingStream(0)
    n = 100_000
    draws = np.array([sample_level(cfg, rng) for _ in range(n)])
    for l, p in zip(range(5, 13), level_probabilities(cfg)):
        assert abs(np.mean(draws == l) - p) <= 4 * math.sqrt(p * (1 - p) / n) + 1e-12
    assert draws.min() >= 5 and draws.max() <= 12


def test_cost_formula():
    assert replicate_cost(6, 4, 5) == 768
    assert replicate_cost(5, 10, 5) == 640


def test_average_replicates():
    def r(v):
        return ReplicateResult(5, np.array(v, dtype=float), 1, 10, 1.0)

    mean, var, cost = average_replicates([r([1.0]), r([3.0])])
    assert mean.tolist() == [2.0] and var.tolist() == [2.0] and cost == 20
    mean, var, _ = average_replicates([r([0.1, 7.0])] * 5)
    assert mean.tolist() == [0.1, 7.0] and var.tolist() == [0.0, 0.0]
    mean, var, _ = average_replicates([r([4.0])])
    assert mean.tolist() == [4.0] and math.isnan(var[0])
    with pytest.raises(ValueError):
        average_replicates([])


def test_single_level_pair_constant_and_cost():
    cfg = EstimatorConfig(l_star=2, l_max=5, k=3, observable=constant)
    rng = CountingStream(1)
    res = run_single_level_pair(2, cfg, TOY, DYN, None, rng)
    np.testing.assert_array_equal(res.estimate, constant(None))
    assert res.tau >= 1 and res.iterations >= res.tau
    assert res.cost == res.iterations * 2 ** 3
    assert res.draws == res.iterations * 2 ** 2 * 2 * TOY.d


def test_increment_constant_is_zero():
    cfg = EstimatorConfig(l_star=2, l_max=5, k=3, observable=constant)
    res = run_increment_quad(3, cfg, TOY, DYN, None, CountingStream(2))
    np.testing.assert_array_equal(res.estimate, [0.0, 0.0])
    assert res.cost == res.iterations * (2 ** 4 + 2 ** 3)


def test_non_meeting_error_carries_gap():
    cfg = EstimatorConfig(l_star=2, l_max=5, max_iterations=3)
    dyn = DynamicsParams(noise_scale=1e-9)
    with pytest.raises(NonMeetingError) as info:
        run_single_level_pair(2, cfg, TOY, dyn, None, CountingStream(3))
    assert info.value.gap > 0 and info.value.level == 2 and info.value.iterations == 3
    with pytest.raises(NonMeetingError):
        run_increment_quad(3, cfg, TOY, dyn, None, CountingStream(3))


def test_replicate_weighting_and_cost_ledger():
    cfg = EstimatorConfig(l_star=2, l_max=5, k=4)
    seen = set()
    for i in range(40):
        rng = CountingStream(5, i)
        rep = unbiased_replicate(cfg, TOY, DYN, rng, replicate_id=i)
        seen.add(rep.level)
        assert rep.weight == pytest.approx(1 / level_probability(cfg, rep.level))
        assert rep.cost == cost_from_draws(rep, TOY.d, cfg.l_star)
        replay = CountingStream(5, i)
        level = sample_level(cfg, replay)
        runner = run_single_level_pair if level == cfg.l_star else run_increment_quad
        raw = runner(level, cfg, TOY, DYN, None, replay)
        np.testing.assert_array_equal(rep.value, raw.estimate * rep.weight)
        assert rep.tau == raw.tau and rep.replicate_id == i
    assert cfg.l_star in seen and len(seen) > 1


def test_initial_state_is_used():
    far = PhaseState([50.0, 50.0], [0.0, 0.0])
    cfg = EstimatorConfig(l_star=3, l_max=5, k=0, m=0, strict_k=True, initial_state=far, observable="first")
    res = run_single_level_pair(3, cfg, TOY, DYN, None, CountingStream(0))
    assert cfg.start(2) is far and np.isfinite(res.estimate[0])
    assert res.tau > 1


def test_increment_second_moment_decreases_with_level():
    cfg = EstimatorConfig(l_star=3, l_max=9, k=10, observable="first")
    rows = increment_second_moments(DoubleWellModel(5), DYN, cfg, range(4, 9), 300, seed=0)
    moments = [r[2] for r in rows]
    assert all(a > b for a, b in zip(moments, moments[1:])), moments
