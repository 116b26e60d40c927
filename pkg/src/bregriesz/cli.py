"""Command-line driver: ``fit``, ``estimate``, ``benchmark`` (and ``verify``).

Configuration is one JSON file; command-line flags override its keys. The
report goes to stdout, logs go to stderr.

Config schema (every key optional)::

    {
      "seed": 0,
      "data": {"source": "sample:ate" | "<path.csv>" | "synthetic_ate" | "covariate_shift",
               "n": 500, "n_target": 500, "dim": 3, "shift": 0.5,
               "design_seed": 2, "target_path": "<path.csv>"},
      "functional": {"kind": "ATE", "ame_coordinate": 0},
      "fit": <FitConfig dict>,
      "outcome": <OutcomeConfig dict>,
      "methods": ["DM", "IPW", "AIPW", "TMLE"],
      "folds": 2,
      "benchmark": <BenchmarkConfig dict>
    }

Exit codes
----------
0  success
1  unexpected error
2  invalid configuration or arguments
3  data could not be loaded (missing file, bad layout, bad size)
4  fitting or estimation failed numerically
5  at least one verification check failed
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from importlib import resources

from .balancing import balance_residuals
from .benchmark import BenchmarkConfig, run_benchmark
from .data import Dataset, gen_covariate_shift, gen_synthetic_ate, read_csv
from .errors import (ConfigError, DegenerateFluctuationError, DomainError, FoldError,
                     InitializationError, InvalidSizeError, LayoutError,
                     NoCanonicalPairError, NonDifferentiableError, SingularSystemError)
from .estimators import (METHODS, OutcomeConfig, crossfit_estimates, reports_to_csv)
from .fit import FitConfig, ModelSpec, fit_riesz
from .functionals import Functional
from .links import TREATMENT_SIGN, canonical_pair
from .losses import LossSpec
from .models import POLYNOMIAL, BasisSpec, LinearModel

log = logging.getLogger("bregriesz")

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4
EXIT_VERIFY = 5

SAMPLE_SOURCE = "sample:ate"


class DataLoadError(Exception):
    """Input data could not be read."""


def default_fit_config() -> dict:
    sq = LossSpec("SQ")
    basis = BasisSpec(POLYNOMIAL, degree=2, treatment_split=True)
    return FitConfig(sq, canonical_pair(sq, TREATMENT_SIGN), ModelSpec(basis=basis)).to_dict()


def default_outcome_config() -> dict:
    basis = BasisSpec(POLYNOMIAL, degree=2, treatment_split=True)
    return OutcomeConfig(basis=basis).to_dict()


# ---------------------------------------------------------------------------
# Configuration


def load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _apply_overrides(cfg: dict, args) -> dict:
    cfg = dict(cfg)
    if args.seed is not None:
        cfg["seed"] = args.seed
    if getattr(args, "reps", None) is not None:
        cfg.setdefault("benchmark", {})
        cfg["benchmark"] = dict(cfg["benchmark"], reps=args.reps)
    if getattr(args, "jobs", None) is not None:
        cfg["benchmark"] = dict(cfg.get("benchmark", {}), jobs=args.jobs)
    return cfg


def _parse(build, value, what):
    try:
        return build(value)
    except (KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"invalid {what} configuration: {exc!r}") from exc


def load_data(spec: dict, seed: int) -> Dataset:
    """Dataset named by the ``data`` block of a config."""
    source = spec.get("source", SAMPLE_SOURCE)
    try:
        if source == SAMPLE_SOURCE:
            ref = resources.files("bregriesz") / "resources" / "sample_ate.csv"
            with resources.as_file(ref) as path:
                return read_csv(path)
        if source == "synthetic_ate":
            design = spec.get("design_seed")
            data, _ = gen_synthetic_ate(seed, int(spec.get("n", 500)),
                                        design_seed=None if design is None else int(design))
            return data
        if source == "covariate_shift":
            data, _ = gen_covariate_shift(seed, int(spec.get("n", 500)),
                                          int(spec.get("n_target", spec.get("n", 500))),
                                          dim=int(spec.get("dim", 3)),
                                          shift=float(spec.get("shift", 0.5)))
            return data
        return read_csv(source, spec.get("target_path"))
    except (OSError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise DataLoadError(str(exc)) from exc


def _functional(cfg: dict) -> Functional:
    return _parse(Functional.from_dict, cfg.get("functional", {"kind": "ATE"}), "functional")


def _methods(cfg: dict) -> tuple:
    methods = tuple(cfg.get("methods", METHODS))
    bad = set(methods) - set(METHODS)
    if bad:
        raise ConfigError(f"unknown methods {sorted(bad)}")
    return methods


# ---------------------------------------------------------------------------
# Commands


def _dump_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, indent=2) + "\n"


def run_fit(cfg: dict, out: str | None) -> str:
    """Fit a representer; write ``model.json`` and ``balance.csv`` to ``out``."""
    seed = int(cfg.get("seed", 0))
    fit_cfg = _parse(FitConfig.from_dict, cfg.get("fit", default_fit_config()), "fit")
    fn = _functional(cfg)
    data = load_data(cfg.get("data", {}), seed)
    result = fit_riesz(fit_cfg, data, fn)
    if not result.converged:
        log.warning("fit did not converge: %s", result.message)
    if isinstance(result.model.base, LinearModel):
        balance = balance_residuals(result, data, fn).to_csv()
    else:
        log.warning("balance residuals need a linear-in-basis model; writing header only")
        balance = "j,residual,bound,satisfied\n"
    out = out or "fit_out"
    os.makedirs(out, exist_ok=True)
    with open(os.path.join(out, "model.json"), "w", encoding="utf-8") as fh:
        fh.write(_dump_json(result.to_dict()))
    with open(os.path.join(out, "balance.csv"), "w", encoding="utf-8", newline="") as fh:
        fh.write(balance)
    log.info("wrote %s", out)
    return balance


def run_estimate(cfg: dict, out: str | None) -> str:
    """Cross-fitted estimates for each configured method, as CSV."""
    seed = int(cfg.get("seed", 0))
    fit_cfg = _parse(FitConfig.from_dict, cfg.get("fit", default_fit_config()), "fit")
    gamma = _parse(OutcomeConfig.from_dict, cfg.get("outcome", default_outcome_config()),
                   "outcome")
    fn = _functional(cfg)
    methods = _methods(cfg)
    folds = int(cfg.get("folds", 2))
    if folds < 1:
        raise ConfigError("folds must be >= 1")
    data = load_data(cfg.get("data", {}), seed)
    reports = crossfit_estimates(data, fit_cfg, gamma, fn, folds, methods, seed)
    text = reports_to_csv(reports)
    _write(out, text)
    return text


def run_benchmark_command(cfg: dict, out: str | None) -> str:
    """Monte Carlo benchmark report as CSV."""
    bench = dict(cfg.get("benchmark", {}))
    if "seed" in cfg:
        bench["seed"] = cfg["seed"]
    if "methods" in cfg:
        bench.setdefault("methods", cfg["methods"])
    config = _parse(BenchmarkConfig.from_dict, bench, "benchmark")
    text = run_benchmark(config).to_csv()
    _write(out, text)
    return text


def run_verify(cfg: dict, out: str | None) -> tuple[str, bool]:
    from .verify import checks_to_csv, run_all
    checks = run_all(int(cfg.get("seed", 1)))
    text = checks_to_csv(checks)
    _write(out, text)
    return text, all(c.passed for c in checks)


def _write(path, text):
    if path:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bregriesz", description="Fit Riesz representers and estimate linear functionals.",
                                     epilog="exit codes: 0 ok, 1 unexpected, 2 config, "
                                            "3 data, 4 numerical, 5 checks failed")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", metavar="{fit,estimate,benchmark}")
    sub.required = True
    helps = {"fit": "fit a representer and write model.json and balance.csv",
             "estimate": "cross-fitted DM/IPW/AIPW/TMLE estimates as CSV",
             "benchmark": "Monte Carlo benchmark report as CSV",
             "verify": argparse.SUPPRESS}
    for name, text in helps.items():
        kwargs = {} if text is argparse.SUPPRESS else {"help": text}
        p = sub.add_parser(name, **kwargs)
        p.add_argument("--config", help="JSON configuration file")
        p.add_argument("--seed", type=int, help="seed (overrides the config)")
        p.add_argument("--out", help="output directory (fit) or CSV file")
        if name == "benchmark":
            p.add_argument("--jobs", type=int, help="worker processes")
            p.add_argument("--reps", type=int, help="replications")
    # keep the hidden subcommand out of the usage line
    sub._choices_actions = [a for a in sub._choices_actions if a.dest != "verify"]
    return parser


_NUMERICAL = (DomainError, InitializationError, SingularSystemError,
              DegenerateFluctuationError, FoldError, NoCanonicalPairError,
              NonDifferentiableError, FloatingPointError)
_DATA = (DataLoadError, LayoutError, InvalidSizeError)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "fit":
            text = run_fit(cfg, args.out)
        elif args.command == "estimate":
            text = run_estimate(cfg, args.out)
        elif args.command == "benchmark":
            text = run_benchmark_command(cfg, args.out)
        else:
            text, ok = run_verify(cfg, args.out)
            sys.stdout.write(text)
            return EXIT_OK if ok else EXIT_VERIFY
        sys.stdout.write(text)
        return EXIT_OK
    except _DATA as exc:
        log.error("data: %s", exc)
        return EXIT_DATA
    except _NUMERICAL as exc:
        log.error("numerical: %s", exc)
        return EXIT_NUMERICAL
    except ConfigError as exc:
        log.error("config: %s", exc)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - last-resort exit code
        log.exception("unexpected error: %s", exc)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
