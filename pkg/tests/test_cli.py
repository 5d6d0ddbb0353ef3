import json
import subprocess
import sys

from unbiased_langevin.cli import main, read_config, spec_from_args


def test_config_file_and_override(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# toy run\nmodel = double-well\nlstar = 2\nlevel_exponent = 1.25\nstrict-k = true\n"
                   "M = 30\nseed = 4\nsfs-N = 10, 20\n")
    spec, seed, _ = spec_from_args(["estimate", "--config", str(cfg), "--M", "7"])
    assert spec.model == "double-well" and spec.l_star == 2 and spec.level_exponent == 1.25
    assert spec.strict_k is True and spec.M == 7 and seed == 4 and spec.sfs_N == [10, 20]
    spec, seed, _ = spec_from_args(["estimate", "--config", str(cfg), "--seed", "9"])
    assert seed == 9 and spec.M == 30


def test_bad_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("temperature = 3\n")
    assert main(["estimate", "--config", str(cfg)]) == 2
    assert "unknown key" in capsys.readouterr().err


def test_read_config_types(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("--kappa = none\nm-grid = 1 2 3\ntiming = no\n")
    assert read_config(cfg) == {"kappa": None, "m_grid": [1, 2, 3], "timing": False}


def test_cli_writes_outputs(tmp_path):
    out = tmp_path / "run"
    rc = main(["estimate", "--model", "gaussian", "--lstar", "3", "--lmax", "6", "--k", "5", "--strict-k",
               "--M", "10", "--seed", "1", "--workers", "2", "--out", str(out)])
    assert rc == 0
    assert json.loads((out / "summary.json").read_text())["n_replicates"] == 10
    assert (out / "replicates.csv").read_text().count("\n") == 11


def test_console_entry_point_prints_summary():
    proc = subprocess.run([sys.executable, "-m", "unbiased_langevin.cli", "meeting-tails", "--lstar", "3",
                           "--M", "20"], capture_output=True, text=True, check=True)
    data = json.loads(proc.stdout)
    assert data["n_met"] == 20 and data["seed"] == 0
