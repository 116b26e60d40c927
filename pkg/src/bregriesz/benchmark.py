"""Monte Carlo benchmark of ATE estimators on the synthetic design.

Each replication draws a fresh sample of one fixed design (the design seed
fixes the propensity and outcome coefficients; the replication seed drives
the sample). For every representer variant the nuisances are cross-fitted
and DM, IPW, AIPW and TMLE are computed from the pooled held-out values.
Aggregation is over replications in index order, so results do not depend
on the number of workers.
"""

from __future__ import annotations

import csv
import io
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .data import gen_synthetic_ate
from .estimators import METHODS, OutcomeConfig, crossfit_values, estimate_from_values
from .errors import ConfigError
from .fit import FitConfig, ModelSpec, OptimizerConfig, Penalty, fit_propensity_mle
from .functionals import Functional
from .links import ATE_PROPENSITY_LOGIT, TREATMENT_SIGN, LinkSpec, canonical_pair
from .losses import LossSpec
from .models import POLYNOMIAL, BasisSpec
from .rng import split_seed

log = logging.getLogger(__name__)

DEFAULT_DESIGN_SEED = 2
REPORT_HEADER = ("variant", "method", "mse", "coverage", "mean_ci_width", "reps", "failures")


def default_variants(lam: float = 1e-3, degree: int = 2, logit_degree: int = 1) -> dict:
    """Representer variants as JSON-ready dicts keyed by name.

    ``kind`` is ``"oracle"`` (true nuisances), ``"riesz"`` (a
    :class:`FitConfig`) or ``"mle"`` (logistic propensity likelihood).

    The squared loss under the logit link uses a linear index by default:
    with a quadratic index the empirical objective is unbounded below
    whenever some region of covariate space holds units of one arm only.
    """
    on_z = BasisSpec(POLYNOMIAL, degree=degree, on_z_only=True)
    logit_z = BasisSpec(POLYNOMIAL, degree=logit_degree, on_z_only=True)
    split = BasisSpec(POLYNOMIAL, degree=degree, treatment_split=True)
    opt = OptimizerConfig(max_iters=500)
    pen = Penalty(2, lam)
    sq, ukl = LossSpec("SQ"), LossSpec("UKL", c=1.0)

    def riesz(loss, link, basis):
        return {"kind": "riesz",
                "fit": FitConfig(loss, link, ModelSpec(basis=basis), pen, opt).to_dict()}

    return {
        "true": {"kind": "oracle"},
        "sq_linear": riesz(sq, canonical_pair(sq, TREATMENT_SIGN), split),
        "sq_logit": riesz(sq, LinkSpec(ATE_PROPENSITY_LOGIT, branch_rule=TREATMENT_SIGN),
                          logit_z),
        "ukl_z": riesz(ukl, canonical_pair(ukl, TREATMENT_SIGN), on_z),
        "ukl_x": riesz(ukl, canonical_pair(ukl, TREATMENT_SIGN), split),
        "bkl_mle": {"kind": "mle", "basis": on_z.to_dict(), "lambda": lam},
    }


@dataclass
class BenchmarkConfig:
    """Settings for :func:`run_benchmark`.

    ``seed`` is the master seed; replication ``r`` uses
    ``split_seed(seed, r)`` for its sample and fold assignment.
    """

    n: int = 3000
    reps: int = 100
    seed: int = 0
    design_seed: int = DEFAULT_DESIGN_SEED
    folds: int = 2
    methods: tuple = METHODS
    variants: dict = field(default_factory=default_variants)
    outcome: dict = field(default_factory=lambda: OutcomeConfig(
        basis=BasisSpec(POLYNOMIAL, degree=2, treatment_split=True)).to_dict())
    jobs: int = 1

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2")
        bad = set(self.methods) - set(METHODS)
        if bad:
            raise ConfigError(f"unknown methods {sorted(bad)}")
        for name, v in self.variants.items():
            if v.get("kind") not in ("oracle", "riesz", "mle"):
                raise ConfigError(f"variant {name!r}: unknown kind {v.get('kind')!r}")
        self.methods = tuple(self.methods)

    def to_dict(self) -> dict:
        return {"n": self.n, "reps": self.reps, "seed": self.seed,
                "design_seed": self.design_seed, "folds": self.folds,
                "methods": list(self.methods), "variants": self.variants,
                "outcome": self.outcome, "jobs": self.jobs}

    @classmethod
    def from_dict(cls, d: dict) -> "BenchmarkConfig":
        base = cls()
        return cls(int(d.get("n", base.n)), int(d.get("reps", base.reps)),
                   int(d.get("seed", base.seed)), int(d.get("design_seed", base.design_seed)),
                   int(d.get("folds", base.folds)), tuple(d.get("methods", base.methods)),
                   d.get("variants", base.variants), d.get("outcome", base.outcome),
                   int(d.get("jobs", base.jobs)))


@dataclass(frozen=True)
class BenchmarkRow:
    variant: str
    method: str
    mse: float
    coverage: float
    mean_ci_width: float
    reps: int
    failures: int


@dataclass(frozen=True)
class BenchmarkReport:
    rows: tuple
    theta_true: float

    def row(self, variant: str, method: str) -> BenchmarkRow:
        for r in self.rows:
            if r.variant == variant and r.method == method:
                return r
        raise KeyError((variant, method))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(REPORT_HEADER)
        for r in self.rows:
            writer.writerow([r.variant, r.method, repr(r.mse), repr(r.coverage),
                             repr(r.mean_ci_width), r.reps, r.failures])
        return buf.getvalue()


def _learners(spec: dict, oracle, outcome: OutcomeConfig):
    kind = spec["kind"]
    if kind == "oracle":
        return (lambda train: oracle.representer), (lambda train: oracle.outcome_regression)
    if kind == "riesz":
        alpha = FitConfig.from_dict(spec["fit"])
    else:
        basis = BasisSpec.from_dict(spec["basis"])
        lam = float(spec.get("lambda", 0.0))

        def alpha(train):
            return fit_propensity_mle(basis, train, lam).model
    return alpha, outcome


def run_replication(config: BenchmarkConfig, r: int) -> dict:
    """Estimates of one replication: ``{variant: {method: (theta, lo, hi) or None}}``."""
    seed = split_seed(config.seed, r)
    data, oracle = gen_synthetic_ate(seed, config.n, design_seed=config.design_seed)
    fn = Functional("ATE")
    outcome = OutcomeConfig.from_dict(config.outcome)
    out = {}
    for name, spec in config.variants.items():
        alpha, gamma = _learners(spec, oracle, outcome)
        try:
            nv = crossfit_values(data, alpha, gamma, fn, config.folds, seed)
        except Exception as exc:  # recorded as a failed replication
            log.warning("replication %d, variant %s failed: %s", r, name, exc)
            out[name] = {m: None for m in config.methods}
            continue
        res = {}
        for m in config.methods:
            try:
                rep = estimate_from_values(nv, m, config.folds)
                res[m] = (rep.theta, rep.ci_low, rep.ci_high)
            except Exception as exc:
                log.warning("replication %d, %s/%s failed: %s", r, name, m, exc)
                res[m] = None
        out[name] = res
    return out


def _run_one(args):
    config_dict, r = args
    return run_replication(BenchmarkConfig.from_dict(config_dict), r)


def aggregate(results: list, config: BenchmarkConfig, theta_true: float) -> BenchmarkReport:
    rows = []
    for name in config.variants:
        for m in config.methods:
            vals = [res[name][m] for res in results]
            ok = [v for v in vals if v is not None and all(map(math.isfinite, v))]
            if ok:
                arr = np.array(ok)
                mse = float(np.mean((arr[:, 0] - theta_true) ** 2))
                cover = float(np.mean((arr[:, 1] <= theta_true) & (theta_true <= arr[:, 2])))
                width = float(np.mean(arr[:, 2] - arr[:, 1]))
            else:
                mse = cover = width = float("nan")
            rows.append(BenchmarkRow(name, m, mse, cover, width, len(ok), len(vals) - len(ok)))
    return BenchmarkReport(tuple(rows), theta_true)


def run_benchmark(config: BenchmarkConfig) -> BenchmarkReport:
    """Run all replications (in a process pool when ``jobs > 1``) and aggregate."""
    _, oracle = gen_synthetic_ate(0, config.n, design_seed=config.design_seed)
    args = [(config.to_dict(), r) for r in range(config.reps)]
    if config.jobs > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(_run_one, args))
    else:
        results = [_run_one(a) for a in args]
    return aggregate(results, config, oracle.theta_true)
