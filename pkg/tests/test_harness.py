import json

import numpy as np
import pytest

from unbiased_langevin import DynamicsParams, EstimatorConfig, GaussianModel, NonMeetingError
from unbiased_langevin.errors import ConfigError, FitError
from unbiased_langevin.harness import (
    ExperimentSpec, fit_slope, read_replicate_csv, run_experiment, run_replicates, survival_curve, tail_fit,
    write_replicate_csv,
)

TOY_SPEC = dict(model="gaussian", l_star=3, l_max=8, k=20, strict_k=True)


def test_fit_slope_examples():
    slope, intercept, r2 = fit_slope([(x, -x + 1) for x in (0.0, 1.5, 2.0, 7.0)])
    assert slope == pytest.approx(-1.0) and intercept == pytest.approx(1.0) and r2 == pytest.approx(1.0)
    assert fit_slope([(1.0, 3.0), (3.0, 4.0)])[0] == pytest.approx(0.5)
    slope, intercept, _ = fit_slope([(0, 0), (1, 2), (2, 4)])
    assert slope == pytest.approx(2.0) and intercept == pytest.approx(0.0, abs=1e-15)
    assert fit_slope([(0, 5), (1, 5), (2, 5)]) == (0.0, 5.0, 1.0)
    with pytest.raises(FitError):
        fit_slope([(1.0, 2.0), (1.0, 3.0)])
    with pytest.raises(FitError):
        fit_slope([(1.0, 2.0)])


def test_estimate_on_gaussian_toy(tmp_path):
    spec = ExperimentSpec(kind="estimate", M=200, out=str(tmp_path), **TOY_SPEC)
    summary = run_experiment(spec, seed=1)
    assert np.all(np.abs(summary.mean - np.array([1.0, -1.0])) <= 4 * summary.stderr)
    data = json.loads((tmp_path / "summary.json").read_text())
    for key in ("mean", "variance", "stderr", "mse", "total_cost", "n_replicates", "seed", "spec_echo"):
        assert key in data
    assert data["n_replicates"] == 200 and data["seed"] == 1 and data["spec_echo"]["k"] == 20
    assert data["cost_ledger_ok"] is True
    rows = read_replicate_csv(tmp_path / "replicates.csv")
    assert sum(r["cost_euler_steps"] for r in rows) == data["total_cost"]
    assert all(m >= 0 for m in data["mse"])


def test_csv_round_trip_is_exact(tmp_path):
    spec = ExperimentSpec(kind="estimate", M=30, timing=True, **TOY_SPEC)
    cfg = spec.estimator_config(3)
    rows = run_replicates(cfg, GaussianModel([1.0, -1.0]), DynamicsParams(), range(30), seed=3, timing=True)
    write_replicate_csv(tmp_path / "r.csv", rows)
    back = read_replicate_csv(tmp_path / "r.csv")
    header = (tmp_path / "r.csv").read_text().splitlines()[0]
    assert header == "replicate_id,level,tau,cost_euler_steps,weight,value_0,value_1,wall_time_s"
    for (res, wall), row in zip(rows, back):
        assert row["replicate_id"] == res.replicate_id and row["level"] == res.level and row["tau"] == res.tau
        assert row["cost_euler_steps"] == res.cost and row["weight"] == res.weight
        np.testing.assert_array_equal(row["value"], res.value)
        assert row["wall_time_s"] == wall


def test_worker_count_does_not_change_output(tmp_path):
    outputs = []
    for workers in (1, 8):
        out = tmp_path / f"w{workers}"
        run_experiment(ExperimentSpec(kind="estimate", M=40, workers=workers, out=str(out), **TOY_SPEC), seed=5)
        outputs.append((out / "replicates.csv").read_bytes())
    assert outputs[0] == outputs[1]


def test_single_replicate_summary_has_null_variance(tmp_path):
    run_experiment(ExperimentSpec(kind="estimate", M=1, out=str(tmp_path), **TOY_SPEC), seed=0)
    data = json.loads((tmp_path / "summary.json").read_text())
    assert data["variance"] == [None, None] and data["n_replicates"] == 1


def test_non_meeting_reports_replicate():
    cfg = EstimatorConfig(l_star=2, l_max=4, max_iterations=2)
    with pytest.raises(NonMeetingError, match="replicate 0"):
        run_replicates(cfg, GaussianModel([0.0]), DynamicsParams(noise_scale=1e-9), [0, 1], seed=0)


def test_spec_validation():
    with pytest.raises(ConfigError):
        ExperimentSpec(kind="plot")
    with pytest.raises(ConfigError):
        ExperimentSpec(model="ising")
    with pytest.raises(ConfigError):
        ExperimentSpec(kind="weak-error", l_max=8, ref_level=8)
    with pytest.raises(ConfigError):
        ExperimentSpec(l_star=4, l_max=2)


def test_survival_and_tail_fit():
    taus = np.random.default_rng(0).geometric(0.2, size=5000)
    ns, surv = survival_curve(taus)
    assert surv[0] == 1.0 and np.all(np.diff(surv) <= 0)
    slope, _, r2 = tail_fit(taus)
    assert slope == pytest.approx(np.log(0.8), rel=0.1) and r2 > 0.95


def test_diagnostic_kinds_write_tables(tmp_path):
    cases = {
        "weak-error": dict(model="double-well", l_star=3, l_max=5, ref_level=7, reps=2, horizon=6, burn_in=1,
                           observable="first"),
        "increment-moments": dict(model="double-well", l_star=3, l_max=4, M=20, k=3, observable="first"),
        "meeting-tails": dict(model="gaussian", l_star=3, M=100),
        "mse-vs-cost": dict(M=8, reps=3, m_grid=[2, 4, 8], single_levels=[3], **TOY_SPEC),
        "sfs-baseline": dict(model="gaussian", l_star=3, l_max=5, k=5, M=4, reps=2, sfs_N=[10, 20]),
    }
    tables = {"weak-error": "levels.csv", "increment-moments": "levels.csv", "meeting-tails": "tails.csv",
              "mse-vs-cost": "curve.csv", "sfs-baseline": "sfs.csv"}
    for kind, kw in cases.items():
        out = tmp_path / kind
        summary = run_experiment(ExperimentSpec(kind=kind, out=str(out), **kw), seed=2)
        assert (out / tables[kind]).exists() and (out / "summary.json").exists()
        json.loads((out / "summary.json").read_text())
        assert summary.wall_time_s > 0
    curve = (tmp_path / "mse-vs-cost" / "curve.csv").read_text().splitlines()
    assert curve[0] == "estimator,level,M,mean_cost,mse" and len(curve) == 5


def test_logistic_reference_is_a_long_run():
    spec = ExperimentSpec(kind="estimate", model="logistic", dim=2, n_data=30, l_star=2, l_max=4, k=3, M=3,
                          reference_level=3, reference_steps=200)
    summary = run_experiment(spec, seed=0)
    assert summary.extra["reference"].shape == (2,) and np.all(np.isfinite(summary.extra["reference"]))
