"""Linear functionals ``m(W, h)`` defining the target parameter ``E[m(W, gamma)]``.

Supported kinds:

``ATE``
    ``h(1, z) - h(0, z)`` on the ``TreatmentFirst`` layout.
``AME``
    ``d h / d x_j`` at ``x`` for a chosen coordinate ``j``.
``APE``
    ``mean_{P1} h - mean_{P-1} h`` from two user-supplied samples of regressors.
``CovariateShift``
    ``h`` evaluated on the target sample.

Every functional also exposes an :class:`EvalPlan`, a weighted set of
evaluation points whose weighted sum of ``h`` (or of ``d h / d x_j``) is the
sample average of ``m``. The fitting and estimation code works with plans,
so the target average for covariate shift is taken over the whole target
sample regardless of the relative sample sizes.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

from .data import TREATMENT_FIRST, Dataset, Observation
from .errors import ConfigError, LayoutError

ATE, AME, APE, COVARIATE_SHIFT = "ATE", "AME", "APE", "CovariateShift"
KINDS = (ATE, AME, APE, COVARIATE_SHIFT)


def fd_step(x):
    """Central-difference step used when no analytic partial is available."""
    return 1e-5 * (1.0 + np.abs(x))


@dataclass(frozen=True)
class EvaluableFn:
    """A function of the regressors with an optional analytic partial derivative.

    Parameters
    ----------
    value : callable
        Maps an ``(n, d)`` array to an ``(n,)`` array.
    partial : callable, optional
        ``partial(X, j)`` returns ``d value / d x_j`` at each row.
    """

    value: Callable[[NDArray], NDArray]
    partial: Optional[Callable[[NDArray, int], NDArray]] = None

    def __call__(self, X):
        return np.asarray(self.value(np.atleast_2d(X)), dtype=float).reshape(-1)

    def derivative(self, X, j: int):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.partial is not None:
            return np.asarray(self.partial(X, j), dtype=float).reshape(-1)
        h = fd_step(X[:, j])
        up, down = X.copy(), X.copy()
        up[:, j] += h
        down[:, j] -= h
        return (self(up) - self(down)) / (2.0 * h)


def as_evaluable(h) -> EvaluableFn:
    """Wrap a callable or model as an :class:`EvaluableFn`.

    Objects exposing a ``partial(X, j)`` method (all package models do) keep
    their analytic derivative.
    """
    if isinstance(h, EvaluableFn):
        return h
    partial = getattr(h, "partial", None)
    return EvaluableFn(h, partial if callable(partial) else None)


@dataclass(frozen=True)
class EvalPlan:
    """Weighted evaluation points representing the average of ``m``.

    The average equals ``sum_e weights[e] * h(points[e])``, or with ``h``
    replaced by ``d h / d x_coordinate`` when ``coordinate`` is set.
    """

    points: NDArray[np.float64]
    weights: NDArray[np.float64]
    coordinate: Optional[int] = None

    def apply(self, h) -> float:
        h = as_evaluable(h)
        if self.coordinate is None:
            vals = h(self.points)
        else:
            vals = h.derivative(self.points, self.coordinate)
        return float(self.weights @ vals)


@dataclass(frozen=True)
class Functional:
    """A linear functional of the regression function.

    Parameters
    ----------
    kind : {"ATE", "AME", "APE", "CovariateShift"}
    ame_coordinate : int
        Coordinate differentiated by AME.
    ape_weights : pair of arrays, optional
        Samples from ``P1`` and ``P-1`` for APE.
    """

    kind: str
    ame_coordinate: int = 0
    ape_weights: Optional[tuple] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown functional kind {self.kind!r}")
        if self.kind == APE:
            if self.ape_weights is None or len(self.ape_weights) != 2:
                raise ConfigError("APE requires a pair of weight samples")
            p1, p0 = (np.atleast_2d(np.asarray(s, dtype=float)) for s in self.ape_weights)
            if p1.shape[0] == 0 or p0.shape[0] == 0:
                raise ConfigError("APE weight samples must be nonempty")
            object.__setattr__(self, "ape_weights", (p1, p0))
        if self.ame_coordinate < 0:
            raise ConfigError("ame_coordinate must be non-negative")

    def validate(self, data: Dataset):
        """Raise if ``data`` cannot support this functional."""
        if self.kind == ATE and data.layout != TREATMENT_FIRST:
            raise LayoutError("ATE requires the TreatmentFirst layout")
        if self.kind == AME and self.ame_coordinate >= data.dim:
            raise ConfigError(f"AME coordinate {self.ame_coordinate} >= d = {data.dim}")
        if self.kind == COVARIATE_SHIFT and data.target is None:
            raise LayoutError("CovariateShift requires a target sample")
        if self.kind == APE:
            for s in self.ape_weights:
                if s.shape[1] != data.dim:
                    raise LayoutError("APE weight samples have the wrong dimension")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "ame_coordinate": self.ame_coordinate}

    @classmethod
    def from_dict(cls, d: dict) -> "Functional":
        ape = d.get("ape_weights")
        return cls(d["kind"], int(d.get("ame_coordinate", 0)),
                   None if ape is None else (np.asarray(ape[0]), np.asarray(ape[1])))


def counterfactual(X, treatment: float):
    """Copy of ``X`` with the treatment column set to ``treatment``."""
    out = np.array(X, dtype=float, copy=True)
    out[:, 0] = treatment
    return out


def evaluation_plan(fn: Functional, data: Dataset) -> EvalPlan:
    """The :class:`EvalPlan` whose value is the sample average of ``m`` over ``data``."""
    fn.validate(data)
    n = data.n
    if fn.kind == ATE:
        pts = np.vstack([counterfactual(data.X, 1.0), counterfactual(data.X, 0.0)])
        w = np.concatenate([np.full(n, 1.0 / n), np.full(n, -1.0 / n)])
        return EvalPlan(pts, w)
    if fn.kind == AME:
        return EvalPlan(data.X, np.full(n, 1.0 / n), fn.ame_coordinate)
    if fn.kind == COVARIATE_SHIFT:
        m = data.target.shape[0]
        return EvalPlan(data.target, np.full(m, 1.0 / m))
    p1, p0 = fn.ape_weights
    pts = np.vstack([p1, p0])
    w = np.concatenate([np.full(len(p1), 1.0 / len(p1)), np.full(len(p0), -1.0 / len(p0))])
    return EvalPlan(pts, w)


def m_values(fn: Functional, data: Dataset, h) -> NDArray[np.float64]:
    """Per-observation values ``m(W_i, h)``.

    For covariate shift observation ``i`` is paired with target draw ``i mod m``.
    """
    fn.validate(data)
    h = as_evaluable(h)
    X = data.X
    if fn.kind == ATE:
        return h(counterfactual(X, 1.0)) - h(counterfactual(X, 0.0))
    if fn.kind == AME:
        return h.derivative(X, fn.ame_coordinate)
    if fn.kind == COVARIATE_SHIFT:
        idx = np.arange(data.n) % data.target.shape[0]
        return h(data.target[idx])
    p1, p0 = fn.ape_weights
    return np.full(data.n, float(h(p1).mean() - h(p0).mean()))


def apply_m(fn: Functional, w, h, data: Optional[Dataset] = None, index: int = 0) -> float:
    """Evaluate ``m(W, h)`` for a single observation.

    Parameters
    ----------
    fn : Functional
    w : Observation or array
        The observation (or its regressor vector).
    h : callable or EvaluableFn
    data : Dataset, optional
        Context: required for covariate shift (target sample) and used to
        validate the layout.
    index : int
        Position of ``w`` in ``data``; selects the paired target draw.
    """
    x = np.asarray(w.x if isinstance(w, Observation) else w, dtype=float).reshape(1, -1)
    if data is not None:
        fn.validate(data)
    h = as_evaluable(h)
    if fn.kind == ATE:
        if data is None and not x[0, 0] in (0.0, 1.0):
            raise LayoutError("ATE requires a binary first coordinate")
        return float(h(counterfactual(x, 1.0))[0] - h(counterfactual(x, 0.0))[0])
    if fn.kind == AME:
        if fn.ame_coordinate >= x.shape[1]:
            raise ConfigError("AME coordinate out of range")
        return float(h.derivative(x, fn.ame_coordinate)[0])
    if fn.kind == COVARIATE_SHIFT:
        if data is None or data.target is None:
            raise LayoutError("CovariateShift requires a dataset with a target sample")
        return float(h(data.target[index % data.target.shape[0]][None, :])[0])
    p1, p0 = fn.ape_weights
    return float(h(p1).mean() - h(p0).mean())


def functional_mean(fn: Functional, data: Dataset, h) -> float:
    """Sample average of ``m`` (target average for covariate shift)."""
    return evaluation_plan(fn, data).apply(h)


def riesz_identity_check(fn: Functional, oracle, h, data: Dataset) -> float:
    """Monte Carlo gap ``|mean m(W, h) - mean alpha0(X) h(X)|``."""
    h = as_evaluable(h)
    lhs = functional_mean(fn, data, h)
    rhs = float(np.mean(oracle.representer(data.X) * h(data.X)))
    return abs(lhs - rhs)
