"""Covariate-balancing diagnostics and nearest-neighbor matching.

For a representer fitted with a canonical loss/link pair on a linear model
``alpha = link(phi' beta)``, the first-order conditions of the penalized
objective give, for every basis function ``phi_j``,

    | mean_i alpha(X_i) phi_j(X_i) - mean_i m(W_i, phi_j) | <= lam |beta_j|^(a-1)

with ``0^0 = 1``. :func:`balance_residuals` reports the left-hand side and
the bound.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from .data import Dataset
from .errors import InvalidSizeError, LayoutError
from .fit import FitResult
from .functionals import Functional, evaluation_plan
from .models import BasisSpec, LinearModel, basis_eval, basis_partial

TOL_FACTOR = 10.0


@dataclass(frozen=True)
class BalanceReport:
    """Balance residuals against their bounds.

    ``satisfied[j]`` holds when ``|residuals[j]| <= bound[j] + tol``.
    """

    residuals: NDArray[np.float64]
    bound: NDArray[np.float64]
    satisfied: NDArray[np.bool_]
    max_violation: float
    tol: float

    @property
    def all_satisfied(self) -> bool:
        return bool(np.all(self.satisfied))

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["j", "residual", "bound", "satisfied"])
        for j, (r, b, s) in enumerate(zip(self.residuals, self.bound, self.satisfied)):
            writer.writerow([j, repr(float(r)), repr(float(b)), str(bool(s)).lower()])
        return buf.getvalue()


def moment_residuals(alpha, data: Dataset, functional: Functional, basis: BasisSpec):
    """``mean_i alpha(X_i) phi(X_i) - M(phi)`` for every basis function.

    ``alpha`` may be a callable or an array of values at ``data.X``.
    """
    values = alpha(data.X) if callable(alpha) else np.asarray(alpha, dtype=float)
    Phi = basis_eval(basis, data.X)
    plan = evaluation_plan(functional, data)
    if plan.coordinate is None:
        target = plan.weights @ basis_eval(basis, plan.points)
    else:
        target = plan.weights @ basis_partial(basis, plan.points, plan.coordinate)
    return values @ Phi / data.n - target


def balance_residuals(fit: FitResult, data: Dataset, functional: Functional,
                      basis: BasisSpec | None = None) -> BalanceReport:
    """Balance residuals of a fitted linear-in-basis representer.

    Parameters
    ----------
    fit : FitResult
    data : Dataset
        The sample the fit was computed on.
    functional : Functional
    basis : BasisSpec, optional
        Defaults to the fitted model's basis.

    Notes
    -----
    The bound uses ``lam |beta_j|^(a-1)`` with ``0^0 = 1``; RKHS penalties
    get a zero bound. The tolerance is ten times the solver tolerance.
    """
    base = fit.model.base
    if not isinstance(base, LinearModel):
        raise TypeError("balance residuals need a linear-in-basis model")
    basis = base.basis if basis is None else basis
    beta = base.beta
    if basis.size(data.dim) != beta.size:
        raise ValueError("basis does not match the fitted parameter vector")
    res = moment_residuals(fit.model, data, functional, basis)
    pen = fit.config.penalty
    if pen.lam == 0 or pen.order == "rkhs":
        bound = np.zeros_like(beta)
    elif pen.order == 1:
        bound = np.full_like(beta, pen.lam)
    else:
        bound = pen.lam * np.abs(beta)
    tol = TOL_FACTOR * fit.config.grad_tol
    excess = np.abs(res) - bound
    report = BalanceReport(res, bound, excess <= tol, float(max(excess.max(), 0.0)), tol)
    fit.balance_residuals = res
    return report


def extract_dual_weights(fit, data: Dataset) -> NDArray[np.float64]:
    """Balancing weights ``w_i = alpha(X_i)`` (treated) or ``-alpha(X_i)`` (control).

    ``fit`` may be a :class:`FitResult`, a :class:`RieszModel` or any callable.
    """
    if data.layout != "TreatmentFirst":
        raise LayoutError("dual weights require the TreatmentFirst layout")
    model = fit.model if isinstance(fit, FitResult) else fit
    alpha = np.asarray(model(data.X), dtype=float)
    d = data.treatment
    return np.where(d == 1.0, alpha, -alpha)


# ---------------------------------------------------------------------------
# Nearest-neighbor matching


@dataclass(frozen=True)
class MatchStructure:
    """Matches ``J_M(i)`` and matched-times counts ``K_M(i)``.

    ``match_sets[i]`` lists the ``M`` opposite-arm units nearest to unit
    ``i`` in covariate space (ties broken by lower index).
    """

    m_neighbors: int
    match_sets: NDArray[np.int64]
    matched_counts: NDArray[np.int64]
    treatment: NDArray[np.float64]


def _ranked(dist_row, candidates, k):
    order = np.lexsort((candidates, dist_row))
    return candidates[order[:k]]


def _sq_dist(Z, rows, point):
    # Direct differences, so equal points tie exactly wherever distances are compared.
    return ((Z[rows] - point) ** 2).sum(1)


def nn_match(data: Dataset, M: int) -> MatchStructure:
    """Euclidean ``M``-nearest-neighbor matching on the covariates."""
    d = data.treatment
    Z = data.covariates
    arms = {1.0: np.flatnonzero(d == 1.0), 0.0: np.flatnonzero(d == 0.0)}
    if M < 1 or min(len(a) for a in arms.values()) < M:
        raise InvalidSizeError(f"each arm needs at least M={M} units")
    n = data.n
    sets = np.empty((n, M), dtype=np.int64)
    for i in range(n):
        cand = arms[1.0 - d[i]]
        sets[i] = _ranked(_sq_dist(Z, cand, Z[i]), cand, M)
    counts = np.bincount(sets.ravel(), minlength=n).astype(np.int64)
    return MatchStructure(M, sets, counts, d.copy())


def nn_matching_ate(data: Dataset, M: int, form: str = "weights") -> float:
    """Nearest-neighbor matching estimate of the ATE.

    Parameters
    ----------
    form : {"weights", "imputed"}
        ``"weights"`` computes ``mean (2D - 1)(1 + K/M) Y``; ``"imputed"``
        averages the difference of imputed potential outcomes. The two are
        algebraically equal.
    """
    ms = nn_match(data, M)
    y = data.y
    d = ms.treatment
    if form == "weights":
        return float(np.mean((2.0 * d - 1.0) * (1.0 + ms.matched_counts / M) * y))
    if form != "imputed":
        raise ValueError(f"unknown form {form!r}")
    matched = y[ms.match_sets].mean(axis=1)
    y1 = np.where(d == 1.0, y, matched)
    y0 = np.where(d == 0.0, y, matched)
    return float(np.mean(y1 - y0))


def nn_cell_membership(data: Dataset, M: int, i: int) -> NDArray[np.float64]:
    """Indicator ``phi_c(Z_k)`` of the matching cell centred at ``c = Z_i``.

    Same-arm members are unit ``i`` and its ``M - 1`` nearest same-arm
    neighbors. Opposite-arm unit ``k`` is a member when ``Z_i`` ranks among
    the ``M`` nearest units of ``i``'s arm as seen from ``Z_k``.
    """
    d = data.treatment
    Z = data.covariates
    same = np.flatnonzero(d == d[i])
    other = np.flatnonzero(d != d[i])
    member = np.zeros(data.n)
    dist_i = _sq_dist(Z, same, Z[i])
    dist_i[same == i] = -1.0
    member[_ranked(dist_i, same, M)] = 1.0
    for k in other:
        if i in _ranked(_sq_dist(Z, same, Z[k]), same, M):
            member[k] = 1.0
    return member


def nn_lsif_weights(data: Dataset, M: int) -> NDArray[np.float64]:
    """One-parameter LSIF fits with the matching-cell indicator, one per unit.

    For unit ``i`` in arm ``d`` the model is ``r(z) = beta * phi_c(z)`` with
    ``c = Z_i``. Minimizing ``beta^2 H / 2 - beta h`` with
    ``H = (1/n) sum_{k in arm d} phi_c(Z_k)^2`` and
    ``h = (1/n) sum_k phi_c(Z_k)`` gives ``beta = h / H`` and the fitted
    weight ``r(Z_i) = beta``.
    """
    d = data.treatment
    n = data.n
    out = np.empty(n)
    for i in range(n):
        phi = nn_cell_membership(data, M, i)
        H = float(np.sum((d == d[i]) * phi**2)) / n
        h = float(np.sum(phi)) / n
        out[i] = h / H
    return out


def nn_lsif_equivalence(data: Dataset, M: int) -> float:
    """``max_i |r_LSIF(i) - (1 + K_M(i) / M)|``."""
    ms = nn_match(data, M)
    r = nn_lsif_weights(data, M)
    return float(np.max(np.abs(r - (1.0 + ms.matched_counts / M))))
