"""Command-line entry point ``uld``.

Usage::

    uld estimate --model gaussian --lstar 3 --lmax 8 --k 20 --strict-k --M 500 --out runs/est
    uld weak-error --config weak.cfg --seed 3

A config file holds one ``key = value`` per line, keys spelled like the long
flags (``lstar``, ``level-exponent`` or ``level_exponent``); ``#`` starts a
comment. Flags given on the command line override the file.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, FitError, NonMeetingError, NumericalError
from .harness import KINDS, ExperimentSpec, run_experiment
from .models import MODEL_NAMES


def _int_list(text: str) -> list[int]:
    return [int(t) for t in str(text).replace(",", " ").split()]


def _opt_int(text: str) -> int | None:
    return None if str(text).lower() in ("", "none") else int(text)


def _opt_float(text: str) -> float | None:
    return None if str(text).lower() in ("", "none") else float(text)


def _bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# flag -> (ExperimentSpec field, type, help)
_OPTIONS = {
    "model": ("model", str, "target model"),
    "dim": ("dim", _opt_int, "dimension (gaussian, logistic, double-well)"),
    "d0": ("d0", _opt_int, "lattice side of the Ginzburg-Landau model"),
    "n-data": ("n_data", int, "synthetic logistic data set size"),
    "data": ("data", str, "logistic data CSV (covariate columns, then label)"),
    "lstar": ("l_star", int, "coarsest level"),
    "lmax": ("l_max", int, "finest level"),
    "level-exponent": ("level_exponent", float, "P(L=l) proportional to 2^(-r l)"),
    "alpha": ("alpha", float, "probability of the common-noise kernel"),
    "sigma": ("sigma", float, "velocity noise scale"),
    "kappa": ("kappa", _opt_float, "friction (default sigma^2 / 2)"),
    "noise-scale": ("noise_scale", float, "position noise prefactor"),
    "noise-rate": ("noise_rate", float, "position noise decays as 2^(-rate l)"),
    "k": ("k", int, "burn-in of the time average"),
    "m": ("m", _opt_int, "end of the time average in strict mode (default 2k)"),
    "M": ("M", int, "replicates per estimate"),
    "reps": ("reps", int, "outer repetitions"),
    "observable": ("observable", str, "position or first"),
    "max-iterations": ("max_iterations", int, "coupled iterations before giving up"),
    "workers": ("workers", int, "worker processes"),
    "out": ("out", str, "output directory"),
    "m-grid": ("m_grid", _int_list, "replicate counts for mse-vs-cost, e.g. 250,500,1000"),
    "single-levels": ("single_levels", _int_list, "single-level estimators to add to mse-vs-cost"),
    "ref-level": ("ref_level", int, "reference level for weak-error"),
    "horizon": ("horizon", int, "time units per weak-error run"),
    "burn-in": ("burn_in", int, "discarded time units per weak-error run"),
    "reference-level": ("reference_level", int, "level of the long-run logistic reference"),
    "reference-steps": ("reference_steps", int, "kernel steps of the long-run logistic reference"),
    "sfs-N": ("sfs_N", _int_list, "inner sample sizes of the SFS baseline"),
    "sfs-levels": ("sfs_levels", _int_list, "discretization levels of the SFS baseline"),
}
_FLAGS = {"strict-k": ("strict_k", "fixed k and m (exactly unbiased)"),
          "timing": ("timing", "record per-replicate wall time in the CSV")}


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="uld", description="Unbiased underdamped Langevin estimators.")
    p.add_argument("kind", choices=KINDS)
    p.add_argument("--config", help="flat key=value file; flags override it")
    p.add_argument("--seed", type=int, default=argparse.SUPPRESS)
    p.add_argument("-v", "--verbose", action="store_true")
    for flag, (dest, typ, hlp) in _OPTIONS.items():
        kw = {"choices": MODEL_NAMES} if flag == "model" else {}
        p.add_argument(f"--{flag}", dest=dest, type=typ, default=argparse.SUPPRESS, help=hlp, **kw)
    for flag, (dest, hlp) in _FLAGS.items():
        p.add_argument(f"--{flag}", dest=dest, action="store_true", default=argparse.SUPPRESS, help=hlp)
    return p


def read_config(path) -> dict:
    """Parse a flat ``key = value`` file into ExperimentSpec fields (plus ``seed``)."""
    by_name = {}
    for flag, (dest, typ, _) in _OPTIONS.items():
        by_name[flag] = by_name[dest] = (dest, typ)
    for flag, (dest, _) in _FLAGS.items():
        by_name[flag] = by_name[dest] = (dest, _bool)
    by_name["seed"] = ("seed", int)
    out = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.lstrip("-")
            if key not in by_name:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            dest, typ = by_name[key]
            try:
                out[dest] = typ(value)
            except ValueError as exc:
                raise ConfigError(f"{path}:{lineno}: bad value for {key}: {exc}") from None
    return out


def spec_from_args(argv=None) -> tuple[ExperimentSpec, int, bool]:
    args = vars(build_parser().parse_args(argv))
    kind, config, verbose = args.pop("kind"), args.pop("config"), args.pop("verbose")
    values = read_config(config) if config else {}
    values.update(args)
    seed = values.pop("seed", 0)
    return ExperimentSpec(kind=kind, **values), seed, verbose


def main(argv=None) -> int:
    try:
        spec, seed, verbose = spec_from_args(argv)
    except ConfigError as exc:
        print(f"uld: configuration error: {exc}", file=sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        summary = run_experiment(spec, seed)
    except ConfigError as exc:
        print(f"uld: configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"uld: cannot write results: {exc}", file=sys.stderr)
        return 6
    except NonMeetingError as exc:
        print(f"uld: {exc}", file=sys.stderr)
        return 3
    except NumericalError as exc:
        print(f"uld: numerical failure: {exc}", file=sys.stderr)
        return 4
    except FitError as exc:
        print(f"uld: slope fit failed: {exc}", file=sys.stderr)
        return 5
    if spec.out is None:
        json.dump(summary.to_json_dict(seed, spec), sys.stdout, indent=2)
        print()
    else:
        print(f"wrote {spec.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
