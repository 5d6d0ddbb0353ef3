"""Compiled inner loops: built-in potentials, gradients and the Euler recursion.

Built-in models are described by a fixed argument pack
``(kind, ints, floats, mat_a, mat_b, vec)`` so one cached compilation serves
every model. Python-level models fall back to the numpy path in
:mod:`unbiased_langevin.dynamics`.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

GAUSSIAN = 0
DOUBLE_WELL = 1
GINZBURG_LANDAU = 2
LOGISTIC = 3


@njit(cache=True)
def _softplus(a):
    if a > 0.0:
        return a + math.log1p(math.exp(-a))
    return math.log1p(math.exp(a))


@njit(cache=True)
def _sigmoid(a):
    if a >= 0.0:
        return 1.0 / (1.0 + math.exp(-a))
    e = math.exp(a)
    return e / (1.0 + e)


@njit(cache=True)
def potential(kind, ints, floats, mat_a, mat_b, vec, x):
    d = x.shape[0]
    if kind == GAUSSIAN:
        prec = floats[0]
        s = 0.0
        for i in range(d):
            r = x[i] - vec[i]
            s += r * r
        return 0.5 * prec * s
    elif kind == DOUBLE_WELL:
        s = 0.0
        for i in range(d):
            s += x[i] * x[i]
        return 0.25 * s * s - 0.5 * s
    elif kind == GINZBURG_LANDAU:
        n = ints[0]
        t_bar = floats[0]
        quad = 0.5 * (1.0 - t_bar)
        grad_c = 0.5 * floats[1] * t_bar
        quart = 0.25 * floats[2] * t_bar
        total = 0.0
        for i in range(n):
            ip = (i + 1) % n
            for j in range(n):
                jp = (j + 1) % n
                for k in range(n):
                    kp = (k + 1) % n
                    p = x[(i * n + j) * n + k]
                    di = x[(ip * n + j) * n + k] - p
                    dj = x[(i * n + jp) * n + k] - p
                    dk = x[(i * n + j) * n + kp] - p
                    p2 = p * p
                    total += quad * p2 + grad_c * (di * di + dj * dj + dk * dk) + quart * p2 * p2
        return total
    else:
        n_obs = mat_a.shape[0]
        total = 0.0
        for r in range(n_obs):
            a = 0.0
            for i in range(d):
                a += mat_a[r, i] * x[i]
            total += _softplus(a) - vec[r] * a
        prior = 0.0
        for i in range(d):
            row = 0.0
            for j in range(d):
                row += mat_b[i, j] * x[j]
            prior += x[i] * row
        return total + 0.5 * prior


@njit(cache=True)
def gradient_into(kind, ints, floats, mat_a, mat_b, vec, x, out):
    d = x.shape[0]
    if kind == GAUSSIAN:
        prec = floats[0]
        for i in range(d):
            out[i] = prec * (x[i] - vec[i])
    elif kind == DOUBLE_WELL:
        s = 0.0
        for i in range(d):
            s += x[i] * x[i]
        s -= 1.0
        for i in range(d):
            out[i] = s * x[i]
    elif kind == GINZBURG_LANDAU:
        n = ints[0]
        t_bar = floats[0]
        lin = 1.0 - t_bar
        lap = floats[1] * t_bar
        cub = floats[2] * t_bar
        for i in range(n):
            ip = (i + 1) % n
            im = (i - 1) % n
            for j in range(n):
                jp = (j + 1) % n
                jm = (j - 1) % n
                for k in range(n):
                    kp = (k + 1) % n
                    km = (k - 1) % n
                    s = (i * n + j) * n + k
                    p = x[s]
                    nb = (
                        x[(ip * n + j) * n + k]
                        + x[(im * n + j) * n + k]
                        + x[(i * n + jp) * n + k]
                        + x[(i * n + jm) * n + k]
                        + x[(i * n + j) * n + kp]
                        + x[(i * n + j) * n + km]
                    )
                    out[s] = lin * p + lap * (6.0 * p - nb) + cub * p * p * p
    else:
        n_obs = mat_a.shape[0]
        for i in range(d):
            row = 0.0
            for j in range(d):
                row += mat_b[i, j] * x[j]
            out[i] = row
        for r in range(n_obs):
            a = 0.0
            for i in range(d):
                a += mat_a[r, i] * x[i]
            w = _sigmoid(a) - vec[r]
            for i in range(d):
                out[i] += w * mat_a[r, i]


@njit(cache=True)
def potential_batch(kind, ints, floats, mat_a, mat_b, vec, xs):
    out = np.empty(xs.shape[0])
    for r in range(xs.shape[0]):
        out[r] = potential(kind, ints, floats, mat_a, mat_b, vec, xs[r])
    return out


@njit(cache=True)
def gradient_batch(kind, ints, floats, mat_a, mat_b, vec, xs):
    out = np.empty_like(xs)
    for r in range(xs.shape[0]):
        gradient_into(kind, ints, floats, mat_a, mat_b, vec, xs[r], out[r])
    return out


@njit(cache=True)
def advance(xs, vs, gammas, dbs, delta, sigma_l, kappa, sigma,
            kind, ints, floats, mat_a, mat_b, vec):
    """Euler recursion on stacked chains that share one noise path.

    Updates ``xs`` and ``vs`` (shape ``(chains, d)``) in place. Returns -1 on
    success, otherwise ``chain * d + coordinate`` of the first non-finite drift.
    """
    n_chains, d = xs.shape
    g = np.empty(d)
    for step in range(gammas.shape[0]):
        for c in range(n_chains):
            x = xs[c]
            v = vs[c]
            gradient_into(kind, ints, floats, mat_a, mat_b, vec, x, g)
            for i in range(d):
                b = -g[i]
                if not math.isfinite(b):
                    return c * d + i
                xn = x[i] + v[i] * delta + sigma_l * gammas[step, i]
                v[i] = v[i] + (b - kappa * v[i]) * delta + sigma * dbs[step, i]
                x[i] = xn
    return -1
