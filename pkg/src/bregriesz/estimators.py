"""Plug-in, weighting and doubly robust estimators with Wald intervals.

All estimators work from the same pooled nuisance evaluations
(:class:`NuisanceValues`), so a single cross-fitting pass can feed every
method. Standard errors are the sample standard deviation of the
per-observation score (``ddof=1``) divided by ``sqrt(n)``. Under covariate
shift the target-sample term and the source-sample correction are
independent averages, and their variances are added.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from statistics import NormalDist
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.typing import NDArray

from .data import Dataset, split_folds
from .errors import ConfigError, DegenerateFluctuationError, FoldError
from .fit import FitConfig, fit_riesz
from .functionals import COVARIATE_SHIFT, EvaluableFn, Functional, as_evaluable, m_values
from .models import BasisSpec, KernelModel, MlpModel, fit_least_squares
from .optim import minimize_lbfgs

Z_975 = NormalDist().inv_cdf(0.975)
METHODS = ("DM", "IPW", "AIPW", "TMLE")
CSV_HEADER = ("method", "theta", "se", "ci_low", "ci_high", "n", "folds")


@dataclass(frozen=True)
class ScoreSet:
    """Per-observation orthogonal score ``m(W_i, gamma) + alpha(X_i)(Y_i - gamma(X_i))``.

    Under covariate shift observation ``i`` is paired with target draw
    ``i mod m``.
    """

    psi: NDArray[np.float64]
    method: str = "AIPW"

    def __post_init__(self):
        if not np.all(np.isfinite(self.psi)):
            raise ValueError("score values must be finite")


@dataclass(frozen=True)
class EstimateReport:
    """Point estimate with a 95% Wald interval."""

    method: str
    theta: float
    se: float
    ci_low: float
    ci_high: float
    n: int
    folds: int = 1
    extra: dict = field(default_factory=dict, compare=False)

    @classmethod
    def from_variance(cls, method, theta, variance, n, folds=1, **extra):
        se = float(np.sqrt(max(variance, 0.0)))
        half = Z_975 * se
        return cls(method, float(theta), se, float(theta) - half, float(theta) + half,
                   int(n), int(folds), extra)

    def covers(self, value: float) -> bool:
        return self.ci_low <= value <= self.ci_high

    def row(self) -> list:
        return [self.method, repr(self.theta), repr(self.se), repr(self.ci_low),
                repr(self.ci_high), self.n, self.folds]


def reports_to_csv(reports: Sequence[EstimateReport]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in reports:
        writer.writerow(r.row())
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Nuisance evaluations


@dataclass(frozen=True)
class NuisanceValues:
    """Nuisances evaluated where the estimators need them.

    ``alpha`` and ``gamma`` are evaluated at the source regressors.
    ``m_gamma`` and ``m_alpha`` hold ``m(., gamma)`` and ``m(., alpha)``: one
    entry per source observation, or one per target draw when ``separate``.
    """

    y: NDArray[np.float64]
    alpha: NDArray[np.float64]
    gamma: NDArray[np.float64]
    m_gamma: NDArray[np.float64]
    m_alpha: Optional[NDArray[np.float64]]
    separate: bool = False

    @property
    def n(self) -> int:
        return self.y.size

    @staticmethod
    def concat(parts: Sequence["NuisanceValues"]) -> "NuisanceValues":
        has_m_alpha = all(p.m_alpha is not None for p in parts)
        return NuisanceValues(
            np.concatenate([p.y for p in parts]),
            np.concatenate([p.alpha for p in parts]),
            np.concatenate([p.gamma for p in parts]),
            np.concatenate([p.m_gamma for p in parts]),
            np.concatenate([p.m_alpha for p in parts]) if has_m_alpha else None,
            parts[0].separate,
        )


def _zero(X):
    return np.zeros(np.atleast_2d(X).shape[0])


def _m_terms(fn: Functional, data: Dataset, h):
    if fn.kind == COVARIATE_SHIFT:
        fn.validate(data)
        return as_evaluable(h)(data.target)
    return m_values(fn, data, h)


def nuisance_values(data: Dataset, alpha_hat, gamma_hat, functional: Functional,
                    need_m_alpha: bool = True) -> NuisanceValues:
    """Evaluate ``alpha_hat`` and ``gamma_hat`` on ``data``.

    Either nuisance may be ``None`` (treated as identically zero).
    """
    alpha_hat = _zero if alpha_hat is None else alpha_hat
    gamma_hat = _zero if gamma_hat is None else gamma_hat
    a = as_evaluable(alpha_hat)
    g = as_evaluable(gamma_hat)
    m_alpha = _m_terms(functional, data, a) if need_m_alpha else None
    return NuisanceValues(data.y.copy(), a(data.X), g(data.X),
                          _m_terms(functional, data, g), m_alpha,
                          functional.kind == COVARIATE_SHIFT)


def _var_mean(v):
    v = np.asarray(v, dtype=float)
    return float(np.var(v, ddof=1) / v.size) if v.size > 1 else 0.0


def _dm(nv: NuisanceValues, folds: int) -> EstimateReport:
    return EstimateReport.from_variance("DM", nv.m_gamma.mean(), _var_mean(nv.m_gamma),
                                        nv.n, folds)


def _ipw(nv: NuisanceValues, folds: int) -> EstimateReport:
    w = nv.alpha * nv.y
    return EstimateReport.from_variance("IPW", w.mean(), _var_mean(w), nv.n, folds)


def _aipw(nv: NuisanceValues, folds: int, method: str = "AIPW", **extra) -> EstimateReport:
    corr = nv.alpha * (nv.y - nv.gamma)
    if nv.separate:
        theta = nv.m_gamma.mean() + corr.mean()
        var = _var_mean(nv.m_gamma) + _var_mean(corr)
    else:
        psi = nv.m_gamma + corr
        theta, var = psi.mean(), _var_mean(psi)
    return EstimateReport.from_variance(method, theta, var, nv.n, folds, **extra)


def fluctuation(nv: NuisanceValues) -> float:
    """Targeting coefficient ``sum alpha (Y - gamma) / sum alpha^2``."""
    denom = float(nv.alpha @ nv.alpha)
    if denom == 0.0:
        raise DegenerateFluctuationError("sum of squared representer values is zero")
    return float(nv.alpha @ (nv.y - nv.gamma)) / denom


def _tmle(nv: NuisanceValues, folds: int) -> EstimateReport:
    if nv.m_alpha is None:
        raise ValueError("targeting needs m(., alpha) evaluations")
    eps = fluctuation(nv)
    updated = NuisanceValues(nv.y, nv.alpha, nv.gamma + eps * nv.alpha,
                             nv.m_gamma + eps * nv.m_alpha, nv.m_alpha, nv.separate)
    return _aipw(updated, folds, "TMLE", epsilon=eps)


_DISPATCH = {"DM": _dm, "IPW": _ipw, "AIPW": _aipw, "TMLE": _tmle}


def estimate_from_values(nv: NuisanceValues, method: str, folds: int = 1) -> EstimateReport:
    """Apply one of ``DM``, ``IPW``, ``AIPW``, ``TMLE`` to pooled nuisance values."""
    if method not in _DISPATCH:
        raise ConfigError(f"unknown method {method!r}")
    return _DISPATCH[method](nv, folds)


def dm_estimate(data: Dataset, gamma_hat, functional: Functional) -> EstimateReport:
    """Plug-in estimate ``mean m(W, gamma_hat)``."""
    return _dm(nuisance_values(data, None, gamma_hat, functional, False), 1)


def ipw_estimate(data: Dataset, alpha_hat, functional: Functional) -> EstimateReport:
    """Weighting estimate ``mean alpha_hat(X) Y``."""
    functional.validate(data)
    return _ipw(nuisance_values(data, alpha_hat, None, functional, False), 1)


def aipw_estimate(data: Dataset, alpha_hat, gamma_hat, functional: Functional) -> EstimateReport:
    """Doubly robust estimate from the orthogonal score."""
    return _aipw(nuisance_values(data, alpha_hat, gamma_hat, functional, False), 1)


def tmle_update(data: Dataset, alpha_hat, gamma0_hat, functional: Functional):
    """Targeted regression ``gamma0 + eps * alpha`` and its coefficient ``eps``.

    Raises
    ------
    DegenerateFluctuationError
        If ``alpha_hat`` vanishes on the whole sample.
    """
    a = as_evaluable(alpha_hat)
    g = as_evaluable(gamma0_hat)
    eps = fluctuation(nuisance_values(data, a, g, functional, False))

    def value(X):
        return g(X) + eps * a(X)

    def partial(X, j):
        return g.derivative(X, j) + eps * a.derivative(X, j)

    return EvaluableFn(value, partial), eps


def tmle_estimate(data: Dataset, alpha_hat, gamma0_hat, functional: Functional) -> EstimateReport:
    """Plug-in estimate after one targeting step; ``extra["epsilon"]`` holds ``eps``."""
    return _tmle(nuisance_values(data, alpha_hat, gamma0_hat, functional, True), 1)


def score_set(data: Dataset, alpha_hat, gamma_hat, functional: Functional) -> ScoreSet:
    """Per-observation orthogonal scores (target draws paired by ``i mod m``)."""
    a = as_evaluable(_zero if alpha_hat is None else alpha_hat)
    g = as_evaluable(_zero if gamma_hat is None else gamma_hat)
    psi = m_values(functional, data, g) + a(data.X) * (data.y - g(data.X))
    return ScoreSet(psi)


def neyman_error(data: Dataset, alpha_hat, gamma_hat, oracle_gamma,
                 functional: Functional) -> float:
    """``mean[alpha_hat (Y - gamma_hat) + m(W, gamma_hat) - m(W, gamma_0)]``.

    Under covariate shift the ``m`` terms are target-sample averages.
    """
    nv = nuisance_values(data, alpha_hat, gamma_hat, functional, False)
    m_true = _m_terms(functional, data, oracle_gamma)
    corr = nv.alpha * (nv.y - nv.gamma)
    if nv.separate:
        return float(corr.mean() + nv.m_gamma.mean() - m_true.mean())
    return float(np.mean(corr + nv.m_gamma - m_true))


# ---------------------------------------------------------------------------
# Outcome regression


@dataclass(frozen=True)
class OutcomeConfig:
    """Learner for the regression ``gamma(x) = E[Y | X = x]``.

    Parameters
    ----------
    kind : {"linear", "kernel", "mlp"}
    basis : BasisSpec
        Features for ``"linear"``.
    ridge : float
        Ridge weight (linear: on ``|rho|^2``; kernel: ``n * ridge`` on the
        RKHS norm; mlp: ``ridge / 2 * |theta|^2``).
    hidden, n_centers, bandwidth_scale, max_iters : learner settings
    """

    kind: str = "linear"
    basis: Optional[BasisSpec] = None
    ridge: float = 0.0
    hidden: tuple = (100,)
    n_centers: int = 100
    bandwidth_scale: float = 1.0
    max_iters: int = 500

    def __post_init__(self):
        if self.kind not in ("linear", "kernel", "mlp"):
            raise ConfigError(f"unknown outcome learner {self.kind!r}")
        if self.kind == "linear" and self.basis is None:
            raise ConfigError("linear outcome learner requires a basis")
        if self.ridge < 0:
            raise ConfigError("ridge must be non-negative")

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "ridge": self.ridge}
        if self.basis is not None:
            out["basis"] = self.basis.to_dict()
        if self.kind == "mlp":
            out.update(hidden=list(self.hidden), max_iters=self.max_iters)
        if self.kind == "kernel":
            out.update(n_centers=self.n_centers, bandwidth_scale=self.bandwidth_scale)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "OutcomeConfig":
        basis = d.get("basis")
        return cls(d.get("kind", "linear"),
                   None if basis is None else BasisSpec.from_dict(basis),
                   float(d.get("ridge", 0.0)), tuple(d.get("hidden", (100,))),
                   int(d.get("n_centers", 100)), float(d.get("bandwidth_scale", 1.0)),
                   int(d.get("max_iters", 500)))


def fit_outcome(config: OutcomeConfig, data: Dataset, seed: int = 0):
    """Fit the outcome regression on ``data``; returns a model with ``value``/``partial``."""
    if config.kind == "linear":
        return fit_least_squares(config.basis, data, config.ridge)
    if config.kind == "kernel":
        model = KernelModel.from_data(data.X, n_centers=config.n_centers, seed=seed,
                                      bandwidth_scale=config.bandwidth_scale)
        return model.fit_ridge(data, config.ridge)
    model = MlpModel.init(data.dim, config.hidden, seed)
    X, y, n, lam = data.X, data.y, data.n, config.ridge

    def fun(theta):
        m = model.with_params(theta)
        r = m.value(X) - y
        return (0.5 * float(r @ r) / n + 0.5 * lam * float(theta @ theta),
                m.vjp(X, r / n) + lam * theta)

    res = minimize_lbfgs(fun, model.params, max_iters=config.max_iters, grad_tol=1e-6)
    return model.with_params(res.x)


# ---------------------------------------------------------------------------
# Cross-fitting

Learner = Union[FitConfig, OutcomeConfig, Callable[[Dataset], object]]


def _fit_alpha(learner, train: Dataset, functional: Functional, seed: int):
    if isinstance(learner, FitConfig):
        return fit_riesz(learner, train, functional).model
    return learner(train)


def _fit_gamma(learner, train: Dataset, seed: int):
    if isinstance(learner, OutcomeConfig):
        return fit_outcome(learner, train, seed)
    return learner(train)


def crossfit_values(data: Dataset, alpha_learner: Learner, gamma_learner: Learner,
                    functional: Functional, k: int = 2, seed: int = 0) -> NuisanceValues:
    """Held-out nuisance evaluations pooled over ``k`` folds, in fold order.

    With ``k = 1`` both nuisances are fit and evaluated on the full sample.
    Under covariate shift the target sample is split into ``k`` folds as well.

    Raises
    ------
    FoldError
        Wrapping any failure, with the fold index.
    """
    functional.validate(data)
    if k == 1:
        alpha = _fit_alpha(alpha_learner, data, functional, seed)
        gamma = _fit_gamma(gamma_learner, data, seed)
        return nuisance_values(data, alpha, gamma, functional)
    folds = split_folds(data, k, seed)
    tfolds = None
    if functional.kind == COVARIATE_SHIFT:
        tfolds = split_folds(data.target.shape[0], k, seed + 1)
    parts = []
    for j, (train_idx, eval_idx) in enumerate(folds):
        t_train = t_eval = None
        if tfolds is not None:
            t_train, t_eval = tfolds[j]
        try:
            train = data.subset(train_idx, t_train)
            held = data.subset(eval_idx, t_eval)
            alpha = _fit_alpha(alpha_learner, train, functional, seed)
            gamma = _fit_gamma(gamma_learner, train, seed)
            parts.append(nuisance_values(held, alpha, gamma, functional))
        except Exception as exc:
            raise FoldError(j, exc) from exc
    return NuisanceValues.concat(parts)


def crossfit_estimates(data: Dataset, alpha_learner: Learner, gamma_learner: Learner,
                       functional: Functional, k: int = 2,
                       methods: Sequence[str] = METHODS, seed: int = 0) -> list[EstimateReport]:
    """Several estimators sharing one set of cross-fitted nuisances.

    TMLE uses a single targeting coefficient pooled over all held-out folds.
    """
    nv = crossfit_values(data, alpha_learner, gamma_learner, functional, k, seed)
    return [estimate_from_values(nv, m, k) for m in methods]


def crossfit_estimate(data: Dataset, fit_config: Learner, gamma_config: Learner,
                      functional: Functional, k: int = 2, method: str = "AIPW",
                      seed: int = 0) -> EstimateReport:
    """Cross-fitted estimate with ``k >= 2`` folds."""
    if k < 2:
        raise ConfigError("cross-fitting needs k >= 2")
    return crossfit_estimates(data, fit_config, gamma_config, functional, k, (method,), seed)[0]
