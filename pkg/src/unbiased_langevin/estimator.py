"""Meeting-time estimators and the randomized-level debiased estimator.

A replicate draws a level ``L`` from a truncated geometric law on
``{l_star, ..., l_max}``. At ``L = l_star`` it runs a lag-1 coupled pair and
returns the time-averaged estimate of ``pi_L(phi)``; above ``l_star`` it runs
the fine/coarse quad and returns the difference of the two time-averaged
estimates. Either is divided by ``P(L)``.

Cost is counted in Euler-step units: a coupled single-level iteration costs
``2**(L+1)`` (two chains of ``2**L`` steps), a quad iteration
``2**(L+1) + 2**L``. The initializing kernel step is not charged.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .dynamics import DynamicsParams, PhaseState, apply_kernel
from .errors import ConfigError, NonMeetingError, state_gap
from .kernels import (
    CoupledPair, QuadState, sample_K_check_l, sample_K_check_l_lm1, sample_Kbar_l_lm1,
)
from .streams import CountingStream

logger = logging.getLogger(__name__)


def _position(u: PhaseState) -> np.ndarray:
    return u.x


def _first(u: PhaseState) -> np.ndarray:
    return u.x[:1]


OBSERVABLES: dict[str, Callable[[PhaseState], np.ndarray]] = {
    "position": _position,
    "first": _first,
}


@dataclass
class EstimatorConfig:
    """Settings of the debiased estimator.

    Attributes:
        l_star: Coarsest level.
        l_max: Finest level (truncation of the level law).
        level_exponent: ``P(L = l)`` is proportional to ``2**(-level_exponent * l)``.
        alpha: Probability of the common-noise kernel in the mixtures.
        k: Burn-in index of the time average.
        m: Fixed end of the time average in strict mode (defaults to ``2 k``).
        strict_k: If false (default), use ``m = min(2k, tau - 1)`` and shrink
            ``k`` to ``tau // 2`` when ``tau < k - 1``. If true, ``k`` and ``m``
            are fixed, which keeps the estimator exactly unbiased.
        M: Number of replicates.
        observable: Name in :data:`OBSERVABLES` or a callable on PhaseState.
        seed: Root seed.
        max_iterations: Coupled kernel steps allowed before giving up.
        initial_state: Start of every chain (zeros by default).
    """

    l_star: int = 5
    l_max: int = 12
    level_exponent: float = 1.5
    alpha: float = 0.8
    k: int = 100
    m: int | None = None
    strict_k: bool = False
    M: int = 100
    observable: str | Callable = "position"
    seed: int = 0
    max_iterations: int = 100_000
    initial_state: PhaseState | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.l_star < 0 or self.l_max <= self.l_star:
            raise ConfigError(f"need 0 <= l_star < l_max, got l_star={self.l_star}, l_max={self.l_max}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.k < 0 or (self.m is not None and self.m < self.k):
            raise ConfigError("need k >= 0 and m >= k")
        if self.M < 1:
            raise ConfigError("M must be >= 1")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be >= 1")
        if isinstance(self.observable, str) and self.observable not in OBSERVABLES:
            raise ConfigError(f"unknown observable {self.observable!r}")

    @property
    def phi(self) -> Callable[[PhaseState], np.ndarray]:
        return OBSERVABLES[self.observable] if isinstance(self.observable, str) else self.observable

    def horizon(self, tau: int) -> tuple[int, int]:
        """Burn-in ``k`` and averaging end ``m`` for a run that met at ``tau``."""
        if self.strict_k:
            return self.k, (2 * self.k if self.m is None else self.m)
        k = self.k
        if tau < k - 1:
            k = max(1, tau // 2)
        return k, max(k, min(2 * k, tau - 1))

    def start(self, d: int) -> PhaseState:
        return PhaseState.zeros(d) if self.initial_state is None else self.initial_state


@dataclass(frozen=True)
class ReplicateResult:
    """One debiased replicate.

    Attributes:
        level: Sampled level ``L``.
        value: Estimator term already multiplied by ``weight``.
        tau: Meeting time (single level) or ``max(tau_L, tau_{L-1})``.
        cost: Euler-step units of the coupled phase.
        weight: ``1 / P(L)``.
        draws: Normal variates drawn during the coupled phase.
        replicate_id: Index of the replicate's random stream.
    """

    level: int
    value: np.ndarray
    tau: int
    cost: int
    weight: float
    draws: int = 0
    replicate_id: int = -1


class ChainEstimate(NamedTuple):
    estimate: np.ndarray
    tau: int
    cost: int
    iterations: int
    draws: int


def time_averaged_estimate(phi_u, phi_ut, k: int, m: int, tau: int) -> np.ndarray:
    """Time-averaged coupled estimator from per-iteration observable values.

    ``phi_u[n]`` and ``phi_ut[n]`` hold ``phi(U_n)`` and ``phi(U~_n)``; entries
    are needed up to ``max(m, tau - 1)`` and ``tau - 1`` respectively. With
    ``m == k`` this is the single-term estimator.
    """
    phi_u = np.asarray(phi_u, dtype=np.float64)
    phi_ut = np.asarray(phi_ut, dtype=np.float64)
    if m < k:
        raise ConfigError("need m >= k")
    span = m - k + 1
    # shift by the first term so constant observables reproduce exactly
    base = phi_u[k]
    est = base + (phi_u[k:m + 1] - base).sum(axis=0) / span
    for n in range(k + 1, tau):
        est = est + min(1.0, (n - k) / span) * (phi_u[n] - phi_ut[n])
    return est


def _check_faithful(pair: CoupledPair):
    if not pair.u.identical(pair.u_tilde):
        raise AssertionError("met flag set on a pair whose states differ")


def run_single_level_pair(l: int, config: EstimatorConfig, model, dyn: DynamicsParams,
                          init: tuple[PhaseState, PhaseState] | None,
                          rng: CountingStream) -> ChainEstimate:
    """Lag-1 coupled chains at level ``l``; returns the time-averaged estimate of ``pi_l(phi)``."""
    phi = config.phi
    if init is None:
        init = (config.start(model.d), config.start(model.d))
    u0, ut0 = init
    pair = CoupledPair.of(apply_kernel(u0, model, dyn, dyn.level(l), rng), ut0)
    draws0 = rng.gaussian_count
    phi_u, phi_ut = [phi(pair.u)], [phi(pair.u_tilde)]
    tau = None
    stop = None
    n = 0
    while stop is None or n < stop:
        if tau is None and n >= config.max_iterations:
            raise NonMeetingError(l, state_gap(pair.u, pair.u_tilde), n)
        pair = sample_K_check_l(pair, l, config.alpha, model, dyn, rng)
        n += 1
        phi_u.append(phi(pair.u))
        phi_ut.append(phi(pair.u_tilde))
        if tau is None and pair.met:
            _check_faithful(pair)
            tau = n
            k, m = config.horizon(tau)
            stop = max(m, tau)
    est = time_averaged_estimate(phi_u, phi_ut, k, m, tau)
    return ChainEstimate(est, tau, n * (2 << l), n, rng.gaussian_count - draws0)


def run_increment_quad(l: int, config: EstimatorConfig, model, dyn: DynamicsParams,
                       init: tuple[PhaseState, PhaseState, PhaseState, PhaseState] | None,
                       rng: CountingStream) -> ChainEstimate:
    """Coupled fine/coarse quad; returns the estimate of ``pi_l(phi) - pi_{l-1}(phi)``.

    ``init`` is ``(u_fine, u~_fine, u_coarse, u~_coarse)``; the tilde chains
    start there, the others after one coupled unit-time step.
    """
    if l < 1:
        raise ConfigError("increment estimator needs l >= 1")
    phi = config.phi
    if init is None:
        s = config.start(model.d)
        init = (s, s, s, s)
    uf, utf, uc, utc = init
    uf1, uc1 = sample_Kbar_l_lm1(uf, uc, l, model, dyn, rng)
    z = QuadState(CoupledPair.of(uf1, utf), CoupledPair.of(uc1, utc))
    draws0 = rng.gaussian_count
    rec = {"fu": [phi(z.fine.u)], "ft": [phi(z.fine.u_tilde)],
           "cu": [phi(z.coarse.u)], "ct": [phi(z.coarse.u_tilde)]}
    tau_f = tau_c = None
    stop = None
    n = 0
    while stop is None or n < stop:
        if (tau_f is None or tau_c is None) and n >= config.max_iterations:
            lev, pair = (l, z.fine) if tau_f is None else (l - 1, z.coarse)
            raise NonMeetingError(lev, state_gap(pair.u, pair.u_tilde), n)
        z = sample_K_check_l_lm1(z, config.alpha, l, model, dyn, rng)
        n += 1
        rec["fu"].append(phi(z.fine.u))
        rec["ft"].append(phi(z.fine.u_tilde))
        rec["cu"].append(phi(z.coarse.u))
        rec["ct"].append(phi(z.coarse.u_tilde))
        if tau_f is None and z.fine.met:
            _check_faithful(z.fine)
            tau_f = n
        if tau_c is None and z.coarse.met:
            _check_faithful(z.coarse)
            tau_c = n
        if stop is None and tau_f is not None and tau_c is not None:
            tau = max(tau_f, tau_c)
            k, m = config.horizon(tau)
            stop = max(m, tau)
    est = (time_averaged_estimate(rec["fu"], rec["ft"], k, m, tau_f)
           - time_averaged_estimate(rec["cu"], rec["ct"], k, m, tau_c))
    return ChainEstimate(est, tau, n * 3 * (1 << l), n, rng.gaussian_count - draws0)


def level_probabilities(config: EstimatorConfig) -> np.ndarray:
    """Normalized masses ``P(L = l)`` for ``l = l_star .. l_max``."""
    levels = np.arange(config.l_star, config.l_max + 1)
    w = 2.0 ** (-config.level_exponent * (levels - config.l_star))
    return w / w.sum()


def level_probability(config: EstimatorConfig, l: int) -> float:
    return float(level_probabilities(config)[l - config.l_star])


def sample_level(config: EstimatorConfig, rng: CountingStream) -> int:
    cdf = np.cumsum(level_probabilities(config))
    idx = int(np.searchsorted(cdf, rng.uniform() * cdf[-1], side="right"))
    return config.l_star + min(idx, config.l_max - config.l_star)


def replicate_cost(level: int, tau: int, l_star: int) -> int:
    """Cost in Euler steps: ``tau 2^(L+1)`` at ``l_star``, ``tau (2^(L+1) + 2^L)`` above."""
    if level == l_star:
        return tau * (2 << level)
    return tau * ((2 << level) + (1 << level))


def unbiased_replicate(config: EstimatorConfig, model, dyn: DynamicsParams, rng: CountingStream,
                       replicate_id: int = -1) -> ReplicateResult:
    level = sample_level(config, rng)
    weight = 1.0 / level_probability(config, level)
    if level == config.l_star:
        res = run_single_level_pair(level, config, model, dyn, None, rng)
    else:
        res = run_increment_quad(level, config, model, dyn, None, rng)
    return ReplicateResult(level, res.estimate * weight, res.tau, res.cost, weight, res.draws, replicate_id)


def consumption_factor(level: int, l_star: int) -> int:
    """Chains charged per drawn fine increment: 2 for a pair, 3 for a quad.

    Each shared fine increment drives both fine chains; each coarse increment
    (two fine ones summed) drives both coarse chains, adding one more.
    """
    return 2 if level == l_star else 3


def cost_from_draws(result: ReplicateResult, d: int, l_star: int) -> int:
    """Euler-step cost recovered from the stream's normal-variate counter."""
    per_step = 2 * d
    if result.draws % per_step:
        raise AssertionError("draw count is not a whole number of Euler steps")
    return consumption_factor(result.level, l_star) * (result.draws // per_step)


def average_replicates(results) -> tuple[np.ndarray, np.ndarray, int]:
    """Mean, unbiased sample variance (NaN for a single replicate) and total cost."""
    results = list(results)
    if not results:
        raise ValueError("average_replicates needs at least one result")
    values = np.array([r.value for r in results], dtype=np.float64)
    mean = values[0] + (values - values[0]).mean(axis=0)
    if len(results) > 1:
        var = values.var(axis=0, ddof=1)
    else:
        var = np.full(values.shape[1], math.nan)
    return mean, var, int(sum(r.cost for r in results))
