"""Experiment orchestration: replicate execution, diagnostics and file output.

Every experiment writes one CSV table and ``summary.json`` into its output
directory. Randomness is fixed per replicate by ``(seed, replicate_id)``, so
results do not depend on the number of workers or the scheduling order.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .dynamics import DynamicsParams, PhaseState, advance, apply_kernel, draw_path
from .errors import ConfigError, FitError, NonMeetingError
from .estimator import (
    EstimatorConfig, ReplicateResult, average_replicates, cost_from_draws, run_increment_quad,
    run_single_level_pair, unbiased_replicate,
)
from .models import MODEL_NAMES, build_model
from .sfs_baseline import SfsConfig, sfs_sample
from .streams import CountingStream

logger = logging.getLogger(__name__)

KINDS = ("estimate", "mse-vs-cost", "weak-error", "increment-moments", "meeting-tails", "sfs-baseline")

REPLICATE_COLUMNS = ("replicate_id", "level", "tau", "cost_euler_steps", "weight")


def fit_slope(points) -> tuple[float, float, float]:
    """Ordinary least squares ``y = slope * x + intercept``; returns ``(slope, intercept, r_squared)``."""
    pts = np.asarray(list(points), dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise FitError("need at least two (x, y) points")
    if not np.all(np.isfinite(pts)):
        raise FitError("points must be finite")
    x, y = pts[:, 0], pts[:, 1]
    xc = x - x.mean()
    sxx = float(xc @ xc)
    if sxx == 0.0:
        raise FitError("all abscissae are equal")
    slope = float(xc @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    ss_tot = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(resid @ resid) / ss_tot
    return slope, intercept, r2


@dataclass
class ExperimentSpec:
    """Everything needed to run one experiment.

    ``l_star``/``l_max`` set the level law for the estimator kinds and the
    level range for the diagnostic kinds (``meeting-tails`` uses ``l_star``).
    """

    kind: str = "estimate"
    model: str = "gaussian"
    dim: int | None = None
    d0: int | None = None
    n_data: int = 100
    data: str | None = None
    l_star: int = 3
    l_max: int = 8
    level_exponent: float = 1.5
    alpha: float = 0.8
    k: int = 100
    m: int | None = None
    strict_k: bool = False
    M: int = 200
    reps: int = 50
    observable: str = "position"
    sigma: float = 3.0
    kappa: float | None = None
    noise_scale: float = 1.0
    noise_rate: float = 1.0
    max_iterations: int = 100_000
    workers: int = 1
    out: str | None = None
    timing: bool = False
    m_grid: list[int] | None = None
    single_levels: list[int] | None = None
    ref_level: int = 11
    horizon: int = 60
    burn_in: int = 10
    reference_level: int = 10
    reference_steps: int = 10_000
    sfs_N: list[int] = field(default_factory=lambda: [100])
    sfs_levels: list[int] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {', '.join(KINDS)}")
        if self.model not in MODEL_NAMES:
            raise ConfigError(f"unknown model {self.model!r}")
        if self.workers < 1 or self.reps < 1 or self.M < 1:
            raise ConfigError("workers, reps and M must be >= 1")
        if self.kind == "weak-error" and not (self.ref_level > self.l_max and self.horizon > self.burn_in >= 0):
            raise ConfigError("weak-error needs ref_level > l_max and horizon > burn_in >= 0")
        if self.kind == "increment-moments" and self.l_star < 1:
            raise ConfigError("increment-moments needs l_star >= 1")
        if self.kind == "sfs-baseline" and any(n < 1 for n in self.sfs_N):
            raise ConfigError("sfs_N entries must be >= 1")
        self.estimator_config(0)  # validates the estimator fields up front

    def estimator_config(self, seed: int) -> EstimatorConfig:
        return EstimatorConfig(
            l_star=self.l_star, l_max=self.l_max, level_exponent=self.level_exponent, alpha=self.alpha,
            k=self.k, m=self.m, strict_k=self.strict_k, M=self.M, observable=self.observable,
            seed=seed, max_iterations=self.max_iterations)

    def dynamics(self) -> DynamicsParams:
        return DynamicsParams(sigma=self.sigma, kappa=self.kappa, noise_scale=self.noise_scale,
                              noise_rate=self.noise_rate)

    def build_model(self, seed: int):
        return build_model(self.model, dim=self.dim, d0=self.d0, seed=seed, n_data=self.n_data,
                           data_path=self.data)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


@dataclass
class RunSummary:
    rows: list
    mean: np.ndarray | None = None
    variance: np.ndarray | None = None
    stderr: np.ndarray | None = None
    mse: np.ndarray | None = None
    total_cost: int = 0
    wall_time_s: float = 0.0
    extra: dict = field(default_factory=dict)

    def to_json_dict(self, seed: int, spec: ExperimentSpec) -> dict:
        out = {
            "mean": _jsonable(self.mean),
            "variance": _jsonable(self.variance),
            "stderr": _jsonable(self.stderr),
            "mse": _jsonable(self.mse),
            "total_cost": int(self.total_cost),
            "n_replicates": len(self.rows),
            "seed": int(seed),
            "spec_echo": asdict(spec),
            "wall_time_s": self.wall_time_s,
        }
        out.update({k: _jsonable(v) for k, v in self.extra.items()})
        return out


def _jsonable(v):
    if v is None:
        return None
    if isinstance(v, dict):
        return {k: _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_jsonable(x) for x in (v.tolist() if isinstance(v, np.ndarray) else v)]
    if isinstance(v, (float, np.floating)):
        return None if not math.isfinite(v) else float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    return v


# ---------------------------------------------------------------------------
# replicate execution
# ---------------------------------------------------------------------------

def _replicate_task(args):
    config, model, dyn, seed, ids, timing = args
    out = []
    for i in ids:
        t0 = time.perf_counter()
        try:
            res = unbiased_replicate(config, model, dyn, CountingStream(seed, i), replicate_id=i)
        except NonMeetingError as exc:
            exc.replicate = i
            raise
        out.append((res, time.perf_counter() - t0 if timing else None))
    return out


def _chunks(ids, n):
    ids = list(ids)
    size = max(1, math.ceil(len(ids) / (4 * n)))
    return [ids[i:i + size] for i in range(0, len(ids), size)]


def run_replicates(config: EstimatorConfig, model, dyn: DynamicsParams, ids, *, seed: int,
                   workers: int = 1, timing: bool = False) -> list[tuple[ReplicateResult, float | None]]:
    """Run replicates ``ids`` (each on stream ``(seed, id)``), returned in id order."""
    ids = list(ids)
    if workers == 1 or len(ids) < 2:
        return _replicate_task((config, model, dyn, seed, ids, timing))
    tasks = [(config, model, dyn, seed, chunk, timing) for chunk in _chunks(ids, workers)]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=workers, mp_context=ctx) as pool:
        parts = list(pool.map(_replicate_task, tasks))
    return [item for part in parts for item in part]


def write_replicate_csv(path, rows) -> None:
    """Per-replicate table; floats are written with ``repr`` so they parse back exactly."""
    rows = list(rows)
    p = len(rows[0][0].value) if rows else 0
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(REPLICATE_COLUMNS) + [f"value_{j}" for j in range(p)] + ["wall_time_s"])
        for res, wall in rows:
            w.writerow([res.replicate_id, res.level, res.tau, res.cost, repr(float(res.weight))]
                       + [repr(float(v)) for v in res.value]
                       + ["" if wall is None else repr(float(wall))])


def read_replicate_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    out = []
    for r in rows:
        values = [float(r[k]) for k in r if k.startswith("value_")]
        out.append({
            "replicate_id": int(r["replicate_id"]), "level": int(r["level"]), "tau": int(r["tau"]),
            "cost_euler_steps": int(r["cost_euler_steps"]), "weight": float(r["weight"]),
            "value": np.array(values), "wall_time_s": float(r["wall_time_s"]) if r["wall_time_s"] else None,
        })
    return out


def _write_table(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# ---------------------------------------------------------------------------
# reference values
# ---------------------------------------------------------------------------

def long_run_reference(model, dyn: DynamicsParams, level: int, steps: int, observable, seed: int,
                       burn_in: int | None = None) -> np.ndarray:
    """Time average of ``observable`` along one level-``level`` chain of ``steps`` kept kernel steps."""
    config = EstimatorConfig(l_star=0, l_max=1, observable=observable)
    phi = config.phi
    rng = CountingStream(seed, (2, 0))
    burn_in = max(1, steps // 10) if burn_in is None else burn_in
    lv = dyn.level(level)
    u = PhaseState.zeros(model.d)
    for _ in range(burn_in):
        u = apply_kernel(u, model, dyn, lv, rng)
    acc = np.zeros_like(phi(u))
    for _ in range(steps):
        u = apply_kernel(u, model, dyn, lv, rng)
        acc = acc + phi(u)
    return acc / steps


def reference_expectation(spec: ExperimentSpec, model, dyn: DynamicsParams, seed: int) -> np.ndarray:
    phi = spec.estimator_config(seed).phi
    ref = model.reference_mean
    if ref is not None:
        return np.asarray(phi(PhaseState(ref, np.zeros(model.d))), dtype=np.float64)
    logger.info("computing long-run reference at level %d with %d kernel steps",
                spec.reference_level, spec.reference_steps)
    return long_run_reference(model, dyn, spec.reference_level, spec.reference_steps, spec.observable, seed)


# ---------------------------------------------------------------------------
# experiment kinds
# ---------------------------------------------------------------------------

def _estimate(spec, model, dyn, seed, out):
    config = spec.estimator_config(seed)
    rows = run_replicates(config, model, dyn, range(spec.M), seed=seed, workers=spec.workers,
                          timing=spec.timing)
    results = [r for r, _ in rows]
    mean, var, total = average_replicates(results)
    ref = reference_expectation(spec, model, dyn, seed)
    ledger = sum(cost_from_draws(r, model.d, config.l_star) for r in results)
    if out is not None:
        write_replicate_csv(out / "replicates.csv", rows)
    return RunSummary(rows, mean, var, np.sqrt(var / len(results)), (mean - ref) ** 2, total,
                      extra={"reference": ref, "cost_from_draws": ledger, "cost_ledger_ok": ledger == total})


def _mse_vs_cost(spec, model, dyn, seed, out):
    config = spec.estimator_config(seed)
    m_max = spec.M
    grid = sorted(spec.m_grid or [max(1, m_max // 8), max(1, m_max // 4), max(1, m_max // 2), m_max])
    if grid[-1] > m_max:
        raise ConfigError("m_grid entries must not exceed M")
    ref = reference_expectation(spec, model, dyn, seed)
    rows = run_replicates(config, model, dyn, range(spec.reps * m_max), seed=seed, workers=spec.workers,
                          timing=spec.timing)
    values = np.array([r.value for r, _ in rows])
    costs = np.array([r.cost for r, _ in rows])
    curve = []
    for M in grid:
        # every disjoint block of M consecutive replicates is one estimate
        n_blocks = values.shape[0] // M
        blocks = values[:n_blocks * M].reshape(n_blocks, M, -1)
        err2 = (blocks.mean(axis=1) - ref) ** 2
        block_cost = costs[:n_blocks * M].reshape(n_blocks, M).sum(axis=1)
        curve.append(("unbiased", "", M, float(block_cost.mean()), float(err2.mean()), err2.mean(axis=0)))
    for level in spec.single_levels or []:
        cfg = replace(config, l_star=level, l_max=level + 1)
        m_l = m_max
        err2, cost = [], []
        for j in range(spec.reps):
            ests, c = [], 0
            for i in range(m_l):
                r = run_single_level_pair(level, cfg, model, dyn, None,
                                          CountingStream(seed, (3, level, j, i)))
                ests.append(r.estimate)
                c += r.cost
            err2.append((np.mean(ests, axis=0) - ref) ** 2)
            cost.append(c)
        err2 = np.array(err2)
        curve.append(("single", level, m_l, float(np.mean(cost)), float(err2.mean()), err2.mean(axis=0)))
    unb = [c for c in curve if c[0] == "unbiased"]
    extra = {"reference": ref, "m_grid": grid}
    if len(unb) >= 2:
        slope, icpt, r2 = fit_slope([(math.log(c[3]), math.log(c[4])) for c in unb])
        extra.update({"mse_cost_slope": slope, "mse_cost_intercept": icpt, "mse_cost_r2": r2})
    if out is not None:
        write_replicate_csv(out / "replicates.csv", rows)
        _write_table(out / "curve.csv", ["estimator", "level", "M", "mean_cost", "mse"],
                     [c[:5] for c in curve])
    mean, var, total = average_replicates([r for r, _ in rows])
    return RunSummary(rows, mean, var, np.sqrt(var / len(rows)), unb[-1][5], total, extra=extra)


def weak_error_curve(model, dyn: DynamicsParams, levels, ref_level: int, reps: int, horizon: int,
                     burn_in: int, observable, seed: int):
    """Per-level discrepancy between level-``l`` and reference-level long-run averages.

    Within a repetition every level is driven by coarsenings of one
    reference-level noise path, so the differences isolate discretization
    error. Returns ``(diffs, ...)`` with ``diffs[r, i, :]`` the difference of
    time averages for level ``levels[i]`` in repetition ``r``.
    """
    levels = sorted(levels)
    phi = EstimatorConfig(l_star=0, l_max=1, observable=observable).phi
    lv_ref = dyn.level(ref_level)
    all_levels = levels + [ref_level]
    diffs = None
    for r in range(reps):
        rng = CountingStream(seed, r)
        states = {l: (np.zeros((1, model.d)), np.zeros((1, model.d))) for l in all_levels}
        acc = {}
        for t in range(horizon):
            path = draw_path(rng, lv_ref.steps, model.d, lv_ref.delta)
            paths = {ref_level: path}
            for l in range(ref_level - 1, levels[0] - 1, -1):
                path = path.coarsen()
                paths[l] = path
            for l in all_levels:
                xs, vs = states[l]
                advance(xs, vs, paths[l], model, dyn, dyn.level(l))
                if t >= burn_in:
                    val = phi(PhaseState(xs[0], vs[0]))
                    acc[l] = acc.get(l, 0.0) + val
        row = np.array([(acc[l] - acc[ref_level]) / (horizon - burn_in) for l in levels])
        if diffs is None:
            diffs = np.empty((reps,) + row.shape)
        diffs[r] = row
    return diffs


def _weak_error(spec, model, dyn, seed, out):
    levels = list(range(spec.l_star, spec.l_max + 1))
    diffs = weak_error_curve(model, dyn, levels, spec.ref_level, spec.reps, spec.horizon, spec.burn_in,
                             spec.observable, seed)
    # (reps, levels, p): average |.| over repetitions and observable coordinates
    abs_err = np.abs(diffs).mean(axis=(0, 2))
    pooled = np.abs(diffs.mean(axis=0)).mean(axis=1)
    log_delta = [math.log(2.0 ** -l) for l in levels]
    slope, icpt, r2 = fit_slope(zip(log_delta, np.log(abs_err)))
    rows = [(l, 2.0 ** -l, float(a), float(p)) for l, a, p in zip(levels, abs_err, pooled)]
    if out is not None:
        _write_table(out / "levels.csv", ["level", "delta", "error", "pooled_error"], rows)
    extra = {"levels": levels, "error": abs_err, "pooled_error": pooled,
             "slope": slope, "intercept": icpt, "r2": r2}
    if np.all(pooled > 0):
        extra["pooled_slope"] = fit_slope(zip(log_delta, np.log(pooled)))[0]
    return RunSummary(rows, extra=extra)


def _increment_task(args):
    level, config, model, dyn, seed, ids = args
    out = []
    for i in ids:
        try:
            r = run_increment_quad(level, config, model, dyn, None, CountingStream(seed, (level, i)))
        except NonMeetingError as exc:
            exc.replicate = i
            raise
        out.append(r)
    return out


def increment_second_moments(model, dyn, config: EstimatorConfig, levels, n: int, seed: int, workers: int = 1):
    """``E[xi_l^2]`` (averaged over observable coordinates) from ``n`` quad runs per level."""
    rows = []
    for level in levels:
        chunks = _chunks(range(n), workers)
        tasks = [(level, config, model, dyn, seed, c) for c in chunks]
        if workers == 1:
            res = [r for t in tasks for r in _increment_task(t)]
        else:
            with ProcessPoolExecutor(workers, mp_context=multiprocessing.get_context("fork")) as pool:
                res = [r for part in pool.map(_increment_task, tasks) for r in part]
        sq = np.array([np.mean(r.estimate ** 2) for r in res])
        rows.append((level, 2.0 ** -level, float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n)),
                     float(np.mean([r.tau for r in res])), int(sum(r.cost for r in res))))
    return rows


def _increment_moments(spec, model, dyn, seed, out):
    config = spec.estimator_config(seed)
    levels = list(range(spec.l_star, spec.l_max + 1))
    rows = increment_second_moments(model, dyn, config, levels, spec.M, seed, spec.workers)
    slope, icpt, r2 = fit_slope((math.log(r[1]), math.log(r[2])) for r in rows)
    if out is not None:
        _write_table(out / "levels.csv", ["level", "delta", "second_moment", "stderr", "mean_tau", "cost"], rows)
    return RunSummary(rows, total_cost=sum(r[5] for r in rows),
                      extra={"levels": levels, "second_moment": [r[2] for r in rows],
                             "slope": slope, "intercept": icpt, "r2": r2})


def meeting_times(model, dyn, config: EstimatorConfig, level: int, n: int, seed: int) -> tuple[np.ndarray, int]:
    """Meeting times of ``n`` lag-1 pairs at ``level``; also the count that hit the cap."""
    taus, failed = [], 0
    for i in range(n):
        try:
            taus.append(run_single_level_pair(level, config, model, dyn, None, CountingStream(seed, i)).tau)
        except NonMeetingError:
            failed += 1
    return np.array(taus, dtype=np.int64), failed


def survival_curve(taus) -> tuple[np.ndarray, np.ndarray]:
    """Empirical ``P(tau > n)`` for ``n = 0 .. max(tau)``."""
    taus = np.asarray(taus)
    ns = np.arange(0, taus.max() + 1)
    surv = (taus[None, :] > ns[:, None]).mean(axis=1)
    return ns, surv


def tail_fit(taus, min_count: int = 10) -> tuple[float, float, float]:
    """Fit ``log P(tau > n)`` against ``n`` over the tail.

    The tail starts at the median meeting time and stops while at least
    ``min_count`` meetings still exceed ``n``.
    """
    taus = np.asarray(taus)
    ns, surv = survival_curve(taus)
    counts = surv * taus.size
    lo = int(np.median(taus))
    keep = (ns >= lo) & (counts >= min_count)
    return fit_slope(zip(ns[keep], np.log(surv[keep])))


def _meeting_tails(spec, model, dyn, seed, out):
    config = spec.estimator_config(seed)
    taus, failed = meeting_times(model, dyn, config, spec.l_star, spec.M, seed)
    ns, surv = survival_curve(taus)
    try:
        slope, icpt, r2 = tail_fit(taus)
        fit_note = None
    except FitError as exc:
        slope = icpt = r2 = None
        fit_note = f"tail fit skipped: {exc}"
        logger.warning(fit_note)
    if out is not None:
        _write_table(out / "tails.csv", ["n", "survival"], zip(ns, surv))
    return RunSummary(list(zip(ns, surv)), extra={
        "tail_slope": slope, "tail_intercept": icpt, "tail_r2": r2, "tail_fit_note": fit_note,
        "n_met": int(taus.size),
        "n_failed": failed, "mean_tau": float(taus.mean()) if taus.size else None})


def _sfs_baseline(spec, model, dyn, seed, out):
    ref = reference_expectation(spec, model, dyn, seed)
    rows = []
    for level in spec.sfs_levels or [spec.l_star]:
        for N in spec.sfs_N:
            cfg = SfsConfig(level, N, model)
            err2, times = [], []
            for j in range(spec.reps):
                t0 = time.perf_counter()
                xs = [sfs_sample(cfg, CountingStream(seed, (1, level, N, j * spec.M + i))) for i in range(spec.M)]
                times.append(time.perf_counter() - t0)
                err2.append(float(np.mean((np.mean(xs, axis=0) - ref) ** 2)))
            rows.append(("sfs", level, N, spec.M, float(np.mean(err2)), float(np.mean(times))))
    config = spec.estimator_config(seed)
    err2, times = [], []
    for j in range(spec.reps):
        t0 = time.perf_counter()
        res = run_replicates(config, model, dyn, range(j * spec.M, (j + 1) * spec.M), seed=seed)
        times.append(time.perf_counter() - t0)
        mean = average_replicates([r for r, _ in res])[0]
        err2.append(float(np.mean((mean - ref) ** 2)))
    rows.append(("unbiased-uld", "", "", spec.M, float(np.mean(err2)), float(np.mean(times))))
    if out is not None:
        _write_table(out / "sfs.csv", ["method", "level", "N", "M", "mse", "wall_time_s"], rows)
    return RunSummary(rows, extra={"reference": ref, "methods": [list(r) for r in rows]})


_RUNNERS = {
    "estimate": _estimate,
    "mse-vs-cost": _mse_vs_cost,
    "weak-error": _weak_error,
    "increment-moments": _increment_moments,
    "meeting-tails": _meeting_tails,
    "sfs-baseline": _sfs_baseline,
}


def run_experiment(spec: ExperimentSpec, seed: int = 0) -> RunSummary:
    """Run ``spec`` and, if ``spec.out`` is set, write its CSV table and ``summary.json`` there."""
    out = None
    if spec.out is not None:
        out = Path(spec.out)
        out.mkdir(parents=True, exist_ok=True)
    model = spec.build_model(seed)
    dyn = spec.dynamics()
    t0 = time.perf_counter()
    summary = _RUNNERS[spec.kind](spec, model, dyn, seed, out)
    summary.wall_time_s = time.perf_counter() - t0
    if out is not None:
        with open(out / "summary.json", "w") as fh:
            json.dump(summary.to_json_dict(seed, spec), fh, indent=2)
    return summary
