"""Coupled unit-time kernels for a pair of chains and for a fine/coarse quad.

Single level, pair ``(u, u_tilde)``:

* ``sample_Q_l``: both chains driven by one noise path (common random numbers).
* ``sample_P_l``: common noise up to time ``1 - delta_l``, then the last step
  drawn from the reflection maximal coupling of the two one-step Gaussians.
* ``sample_K_check_l``: ``Q`` with probability ``alpha``, else ``P``.

Two levels, quad ``((u_l, u~_l), (u_{l-1}, u~_{l-1}))``: the same three kernels
where the coarse chains are driven by pairwise sums of the fine increments.
``sample_Kbar_l_lm1`` couples one fine and one coarse chain for initialization.

A pair that has met is advanced as a single chain and mirrored; every kernel
maps equal inputs to equal outputs, so this only saves work.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coupling import reflection_max_coupling, sync_pairwise_reflection_coupling
from .dynamics import (
    DynamicsParams, NoisePath, PhaseState, advance, draw_path, transition_params,
)
from .errors import ConfigError
from .streams import CountingStream

__all__ = [
    "CoupledPair", "QuadState", "NoisePath",
    "sample_Q_l", "sample_P_l", "sample_K_check_l",
    "sample_Kbar_l_lm1", "sample_Q_l_lm1", "sample_P_l_lm1", "sample_K_check_l_lm1",
]


@dataclass(frozen=True)
class CoupledPair:
    u: PhaseState
    u_tilde: PhaseState
    met: bool = False

    @classmethod
    def of(cls, u: PhaseState, u_tilde: PhaseState) -> "CoupledPair":
        """Pair with ``met`` derived from exact equality of the two states."""
        return cls(u, u_tilde, u.identical(u_tilde))


@dataclass(frozen=True)
class QuadState:
    fine: CoupledPair
    coarse: CoupledPair

    @property
    def both_met(self) -> bool:
        return self.fine.met and self.coarse.met


def _stack(pair: CoupledPair):
    if pair.met:
        return pair.u.x[None].copy(), pair.u.v[None].copy()
    return (np.stack([pair.u.x, pair.u_tilde.x]), np.stack([pair.u.v, pair.u_tilde.v]))


def _unstack(xs, vs, met: bool) -> CoupledPair:
    u = PhaseState(xs[0], vs[0])
    if met:
        return CoupledPair(u, PhaseState(xs[0].copy(), vs[0].copy()), True)
    return CoupledPair(u, PhaseState(xs[1], vs[1]), False)


def _run_pair(pair: CoupledPair, path: NoisePath, model, dyn, level) -> CoupledPair:
    xs, vs = _stack(pair)
    advance(xs, vs, path, model, dyn, level)
    return _unstack(xs, vs, pair.met)


def _check_alpha(alpha: float):
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must lie in (0, 1), got {alpha}")


def _check_quad_level(l: int):
    if l < 1:
        raise ConfigError(f"two-level kernels need l >= 1, got {l}")


def sample_Q_l(pair: CoupledPair, l: int, model, dyn: DynamicsParams, rng: CountingStream) -> CoupledPair:
    level = dyn.level(l)
    path = draw_path(rng, level.steps, model.d, level.delta)
    return _run_pair(pair, path, model, dyn, level)


def _final_coupled_step(pair: CoupledPair, model, dyn, level, rng) -> CoupledPair:
    d = model.d
    p = transition_params(pair.u, model, dyn, level)
    if pair.met:
        mu_tilde = p.mean
    else:
        mu_tilde = transition_params(pair.u_tilde, model, dyn, level).mean
    draw = reflection_max_coupling(p.mean, mu_tilde, p.stddev, rng)
    return _from_draw(draw.y1, draw.y2, draw.met, d)


def _from_draw(y1, y2, met, d) -> CoupledPair:
    u = PhaseState(y1[:d], y1[d:])
    return CoupledPair(u, PhaseState(y2[:d], y2[d:]), bool(met))


def sample_P_l(pair: CoupledPair, l: int, model, dyn: DynamicsParams, rng: CountingStream) -> CoupledPair:
    level = dyn.level(l)
    if level.sigma_l <= 0:
        transition_params(pair.u, model, dyn, level)  # raises DegenerateTransitionError
    path = draw_path(rng, level.steps - 1, model.d, level.delta)
    pair = _run_pair(pair, path, model, dyn, level)
    return _final_coupled_step(pair, model, dyn, level, rng)


def sample_K_check_l(pair: CoupledPair, l: int, alpha: float, model, dyn: DynamicsParams,
                     rng: CountingStream) -> CoupledPair:
    _check_alpha(alpha)
    if rng.uniform() < alpha:
        return sample_Q_l(pair, l, model, dyn, rng)
    return sample_P_l(pair, l, model, dyn, rng)


def sample_Kbar_l_lm1(u_fine: PhaseState, u_coarse: PhaseState, l: int, model, dyn: DynamicsParams,
                      rng: CountingStream) -> tuple[PhaseState, PhaseState]:
    """Advance one level-``l`` chain and one level-``l-1`` chain over unit time on a shared path."""
    _check_quad_level(l)
    fine, coarse = dyn.level(l), dyn.level(l - 1)
    path = draw_path(rng, fine.steps, model.d, fine.delta)
    xf, vf = u_fine.x[None].copy(), u_fine.v[None].copy()
    xc, vc = u_coarse.x[None].copy(), u_coarse.v[None].copy()
    advance(xf, vf, path, model, dyn, fine)
    advance(xc, vc, path.coarsen(), model, dyn, coarse)
    return PhaseState(xf[0], vf[0]), PhaseState(xc[0], vc[0])


def sample_Q_l_lm1(z: QuadState, l: int, model, dyn: DynamicsParams, rng: CountingStream) -> QuadState:
    _check_quad_level(l)
    fine, coarse = dyn.level(l), dyn.level(l - 1)
    path = draw_path(rng, fine.steps, model.d, fine.delta)
    return QuadState(_run_pair(z.fine, path, model, dyn, fine),
                     _run_pair(z.coarse, path.coarsen(), model, dyn, coarse))


def sample_P_l_lm1(z: QuadState, l: int, model, dyn: DynamicsParams, rng: CountingStream) -> QuadState:
    """Shared-noise advance to ``1 - delta_s`` per level, then a synchronous coupled last step.

    The fine pair takes ``2**l - 1`` increments; the coarse pair takes the
    ``2**(l-1) - 1`` pairwise sums of the first ``2**l - 2`` of them.
    """
    _check_quad_level(l)
    fine, coarse = dyn.level(l), dyn.level(l - 1)
    if fine.sigma_l <= 0 or coarse.sigma_l <= 0:
        transition_params(z.fine.u, model, dyn, fine if fine.sigma_l <= 0 else coarse)
    path = draw_path(rng, fine.steps - 1, model.d, fine.delta)
    fpair = _run_pair(z.fine, path, model, dyn, fine)
    cpair = _run_pair(z.coarse, path.head(fine.steps - 2).coarsen(), model, dyn, coarse)

    fp = transition_params(fpair.u, model, dyn, fine)
    cp = transition_params(cpair.u, model, dyn, coarse)
    f_tilde = fp.mean if fpair.met else transition_params(fpair.u_tilde, model, dyn, fine).mean
    c_tilde = cp.mean if cpair.met else transition_params(cpair.u_tilde, model, dyn, coarse).mean
    draw = sync_pairwise_reflection_coupling((fp.mean, f_tilde), (cp.mean, c_tilde), fp.stddev, cp.stddev, rng)
    d = model.d
    return QuadState(_from_draw(draw.fine.y1, draw.fine.y2, draw.fine.met, d),
                     _from_draw(draw.coarse.y1, draw.coarse.y2, draw.coarse.met, d))


def sample_K_check_l_lm1(z: QuadState, alpha: float, l: int, model, dyn: DynamicsParams,
                         rng: CountingStream) -> QuadState:
    """``Q`` whenever both pairs have met; otherwise ``Q`` w.p. ``alpha`` and ``P`` otherwise."""
    _check_alpha(alpha)
    if z.both_met or rng.uniform() < alpha:
        return sample_Q_l_lm1(z, l, model, dyn, rng)
    return sample_P_l_lm1(z, l, model, dyn, rng)
