"""Executable oracles for the package's analytic identities.

Every check returns an :class:`OracleCheck` with a statistic and a
threshold; failures are reported, never raised. The oracles are independent
of the code under test wherever possible: finite differences for
gradients, a grid search over the dual of the balancing problem, closed-form
least-squares importance fits, and hand-coded matching counts.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .balancing import nn_lsif_equivalence
from .data import gen_covariate_shift, gen_synthetic_ate
from .errors import DomainError
from .estimators import aipw_estimate, ipw_estimate
from .fit import (FitConfig, ModelSpec, OptimizerConfig, Penalty, _Objective,
                  empirical_bregman, fit_riesz)
from .functionals import Functional, evaluation_plan
from .links import (ALWAYS_POSITIVE, ATE_PROPENSITY_LOGIT, EXPONENTIAL, LOG_BRANCH,
                    RAW, TREATMENT_SIGN, LinkSpec, canonical_pair)
from .losses import LossSpec, eval_dg, eval_g, loss_domain
from .models import (POLYNOMIAL, RAW_PLUS_INTERCEPT, BasisSpec, KernelModel, LinearModel,
                     MlpModel, basis_eval, fit_least_squares)
from .rng import stream

LINEAR_GRAD_THRESHOLD = 1e-6
MLP_GRAD_THRESHOLD = 1e-4
DUAL_THRESHOLD = 1e-3

# Check name -> the identity it verifies.
MANIFEST = {
    "gradient": "analytic parameter gradient of the penalized objective equals central "
                "finite differences",
    "dual_bruteforce": "the primal fit induces the same representer as a grid search over "
                       "the dual of the balancing problem",
    "bp_delta1_matches_sq": "BP with delta = 1 and c = 0 fits the same representer as SQ "
                            "with C = 1",
    "bp_small_delta_approaches_ukl": "BP objective with delta = 1e-3 is within 1% of the UKL "
                                     "objective",
    "aipw_equals_ipw_under_balance": "canonical SQ fit and same-basis least squares give "
                                     "equal AIPW and IPW estimates",
    "ate_splits_into_two_lsif": "SQ fit for the ATE with a treatment-split basis equals two "
                                "separate least-squares importance fits",
    "nn_matching_is_lsif": "matching weights 1 + K/M equal indicator-basis importance fits",
}


@dataclass(frozen=True)
class OracleCheck:
    """Outcome of one check; ``passed`` iff ``statistic <= threshold``."""

    name: str
    statistic: float
    threshold: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.statistic <= self.threshold)


def checks_to_csv(checks) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["name", "detail", "statistic", "threshold", "passed"])
    for c in checks:
        writer.writerow([c.name, c.detail, repr(float(c.statistic)), repr(c.threshold),
                         str(c.passed).lower()])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Gradients


def _gradient_cases():
    """(label, loss, link, functional kind, penalty, nn_correction)."""
    ts, ap = TREATMENT_SIGN, ALWAYS_POSITIVE
    l2 = Penalty(2, 0.1)
    sq, ukl1, ukl0 = LossSpec("SQ"), LossSpec("UKL", c=1.0), LossSpec("UKL")
    bkl = LossSpec("BKL", c=1.0)
    bp_half, bp_two = LossSpec("BP", delta=0.5), LossSpec("BP", c=1.0, delta=2.0)
    return [
        ("SQ/LinearSQ/ATE", sq, canonical_pair(sq, ts), "ATE", l2, False),
        ("SQ/Raw/CS", sq, LinkSpec(RAW), "CS", l2, False),
        ("SQ/Logit/ATE", sq, LinkSpec(ATE_PROPENSITY_LOGIT, branch_rule=ts), "ATE", l2, False),
        ("SQ/Exponential/CS", sq, LinkSpec(EXPONENTIAL), "CS", l2, False),
        ("SQ/LinearSQ/AME", sq, canonical_pair(sq, ap), "AME", l2, False),
        ("SQ/LinearSQ/CS-nn", sq, canonical_pair(sq, ap), "CS", l2, True),
        ("UKL/LogBranch/ATE", ukl1, canonical_pair(ukl1, ts), "ATE", l2, False),
        ("UKL/LogBranch/CS", ukl0, canonical_pair(ukl0, ap), "CS", l2, False),
        ("UKL/LogBranch/AME", ukl0, canonical_pair(ukl0, ap), "AME", l2, False),
        ("UKL/LogBranch/CS-nn", ukl0, canonical_pair(ukl0, ap), "CS", l2, True),
        ("UKL/Logit/ATE", ukl1, LinkSpec(ATE_PROPENSITY_LOGIT, branch_rule=ts), "ATE", l2,
         False),
        ("BKL/Logit/ATE", bkl, LinkSpec(ATE_PROPENSITY_LOGIT, branch_rule=ts), "ATE", l2,
         False),
        ("BKL/LogBranch/ATE", bkl, LinkSpec(LOG_BRANCH, 1.0, branch_rule=ts), "ATE", l2, False),
        ("BP/PowerBranch/CS", bp_half, canonical_pair(bp_half, ap), "CS", l2, False),
        ("BP/PowerBranch/ATE", bp_two, canonical_pair(bp_two, ts), "ATE", l2, False),
        ("BP/PowerBranch/AME", bp_half, canonical_pair(bp_half, ap), "AME", l2, False),
    ]


def _gradient_data(kind, seed):
    if kind == "ATE":
        data, _ = gen_synthetic_ate(seed, 40)
        return data, Functional("ATE")
    data, _ = gen_covariate_shift(seed, 40, 30, dim=3)
    return data, Functional("AME" if kind == "AME" else "CovariateShift", ame_coordinate=1)


def _models(data, seed):
    basis = BasisSpec(POLYNOMIAL, degree=2)
    kernel = KernelModel.from_data(data.X, n_centers=10, seed=seed)
    mlp = MlpModel.init(data.dim, (6,), seed)
    # A small output layer starts inside narrow link domains such as |v| < k.
    mlp.weights[-1] = 0.1 * mlp.weights[-1]
    return [("linear", LinearModel.zeros(basis, data.dim), 0.2),
            ("kernel", kernel, 0.5), ("mlp", mlp, 0.3)]


def _central_difference(fun, theta, h):
    grad = np.empty_like(theta)
    for j in range(theta.size):
        step = h * max(1.0, abs(theta[j]))
        up, down = theta.copy(), theta.copy()
        up[j] += step
        down[j] -= step
        grad[j] = (fun(up) - fun(down)) / (2.0 * step)
    return grad


def _gradient_error(obj, theta, h):
    _, g = obj.smooth(theta)
    fd = _central_difference(lambda t: obj.smooth(t, grad=False)[0], theta, h)
    scale = max(np.linalg.norm(g), np.linalg.norm(fd), 1e-12)
    return float(np.linalg.norm(g - fd) / scale)


def check_gradients(seed: int = 0, n_points: int = 20) -> list[OracleCheck]:
    """Compare analytic and finite-difference gradients for every supported combination.

    Each loss/link/functional case runs on linear, kernel and MLP models
    (AME skips the MLP, whose mixed partial Jacobian is not implemented) plus a
    PU case on a linear model. The statistic is the largest relative error
    over ``n_points`` random feasible parameter vectors.
    """
    checks = []
    cases = _gradient_cases()
    for label, loss, link, kind, pen, nn in cases:
        data, fn = _gradient_data(kind, seed)
        for mname, model, scale in _models(data, seed):
            if kind == "AME" and mname == "mlp":
                continue
            penalty = Penalty("rkhs", 0.1) if mname == "kernel" else pen
            cfg = FitConfig(loss, link, model, penalty, nn_correction=nn)
            checks.append(_gradient_check(f"{label}/{mname}", cfg, data, fn, model, scale,
                                          mname == "mlp", n_points, seed))
    # PU needs representer values inside (0, 1): raw link around an intercept of 0.5.
    data, fn = _gradient_data("CS", seed)
    model = LinearModel(BasisSpec(RAW_PLUS_INTERCEPT), np.r_[0.5, np.zeros(data.dim)])
    cfg = FitConfig(LossSpec("PU", c_tilde=1.0), LinkSpec(RAW), model, Penalty(2, 0.1))
    checks.append(_gradient_check("PU/Raw/CS/linear", cfg, data, fn, model, 0.05, False,
                                  n_points, seed, center=model.params))
    return checks


def _gradient_check(name, cfg, data, fn, model, scale, is_mlp, n_points, seed, center=None):
    obj = _Objective(cfg, data, fn, model)
    rng = stream(seed, "gradient-points:" + name)
    base = np.zeros(model.n_params) if center is None else center
    if is_mlp:
        base = model.params
    h = 1e-7 if is_mlp else 1e-5
    worst, used = 0.0, 0
    misses = 0
    for _ in range(50 * n_points):
        if used == n_points:
            break
        theta = base + scale * rng.standard_normal(base.size)
        try:
            obj.smooth(theta, grad=False)
            err = _gradient_error(obj, theta, h)
        except DomainError:
            # Narrow domains (power links) reject most wide perturbations.
            misses += 1
            if misses % 10 == 0:
                scale *= 0.5
            continue
        worst = max(worst, err)
        used += 1
    threshold = MLP_GRAD_THRESHOLD if is_mlp else LINEAR_GRAD_THRESHOLD
    if used < n_points:
        return OracleCheck("gradient", np.inf, threshold, f"{name}: only {used} feasible points")
    return OracleCheck("gradient", worst, threshold, name)


# ---------------------------------------------------------------------------
# Dual brute force

BISECTION_STEPS = 64


def _branch_root(loss: LossSpec, u, sign):
    """Solve ``g'(a) = u`` on the branch with the given sign by bisection.

    Half-line branches are parameterized as ``a = sign (c + exp(tau))`` so
    that the search stays inside the open domain.
    """
    u = np.asarray(u, dtype=float)
    sign = np.broadcast_to(np.asarray(sign, dtype=float), u.shape)
    dom = loss_domain(loss)
    if dom.whole_line:
        width = 10.0 * (1.0 + np.max(np.abs(u)))
        lo, hi = np.full(u.shape, -width), np.full(u.shape, width)

        def point(t):
            return t
    else:
        lo, hi = np.full(u.shape, -18.0), np.full(u.shape, 40.0)

        def point(t):
            return sign * (loss.c + np.exp(t))
    # Along the parameterization, sign * g'(point(t)) increases in t.
    orient = np.ones(u.shape) if dom.whole_line else sign
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        above = orient * eval_dg(loss, point(mid)) > orient * u
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return point(0.5 * (lo + hi))


def _dual_value(loss, Phi, signs, target, lam, betas):
    """``mean_i g*(phi_i' beta) - beta' target + lam |beta|_1`` for each row of ``betas``."""
    U = betas @ Phi.T
    A = _branch_root(loss, U, signs[None, :])
    conj = U * A - eval_g(loss, A)
    return conj.mean(axis=1) - betas @ target + lam * np.abs(betas).sum(axis=1)


def _grid_minimize(f, p, radius=8.0, points=9, levels=80, tol=1e-11):
    center = np.zeros(p)
    axis = np.linspace(-1.0, 1.0, points)
    mesh = np.stack(np.meshgrid(*([axis] * p), indexing="ij"), -1).reshape(-1, p)
    for _ in range(levels):
        cand = center + radius * mesh
        vals = f(cand)
        center = cand[int(np.nanargmin(vals))]
        if radius < tol:
            break
        # Keep two grid spacings on each side of the incumbent.
        radius *= 4.0 / (points - 1)
    return center


def _dual_instance(functional: str, n: int, seed: int):
    if functional == "ATE":
        data, _ = gen_synthetic_ate(seed, n)
        basis = BasisSpec(POLYNOMIAL, degree=0, treatment_split=True)
        return data, Functional("ATE"), basis, TREATMENT_SIGN
    data, _ = gen_covariate_shift(seed, n, n, dim=2, shift=0.3)
    return data, Functional("CovariateShift"), BasisSpec(RAW_PLUS_INTERCEPT), ALWAYS_POSITIVE


def dual_feasible(loss_kind: str = "SQ", n: int = 20, seed: int = 0,
                  functional: str = "ATE") -> bool:
    """Whether some representer on the loss domain matches every moment exactly.

    Half-line losses need ``alpha_i = s_i (c + t_i)`` with ``t_i > 0``; when the
    target moments fall outside the cone these span, the unpenalized primal is
    unbounded below and there is no solution to compare against.
    """
    data, fn, basis, rule = _dual_instance(functional, n, seed)
    if loss_domain(LossSpec(loss_kind)).whole_line:
        return True
    c = 1.0 if (loss_kind == "UKL" and functional == "ATE") else 0.0
    Phi = basis_eval(basis, data.X)
    plan = evaluation_plan(fn, data)
    target = plan.weights @ basis_eval(basis, plan.points)
    signs = data.X[:, 0] * 2.0 - 1.0 if rule == TREATMENT_SIGN else np.ones(data.n)
    # Maximize the smallest t_i; strictly positive optimum means interior feasibility.
    A = (Phi * signs[:, None]).T / data.n
    b = target - A @ np.full(data.n, c)
    cost = np.r_[np.zeros(data.n), -1.0]
    A_eq = np.hstack([A, np.zeros((A.shape[0], 1))])
    A_ub = np.hstack([-np.eye(data.n), np.ones((data.n, 1))])
    res = linprog(cost, A_ub=A_ub, b_ub=np.zeros(data.n), A_eq=A_eq, b_eq=b,
                  bounds=[(0, None)] * data.n + [(0, 1.0)])
    return bool(res.status == 0 and -res.fun > 1e-9)


def check_dual_bruteforce(loss_kind: str = "SQ", lam: float = 0.0, n: int = 20,
                          seed: int = 0, functional: str = "ATE") -> OracleCheck:
    """Compare the primal fit with a grid search over the dual of the balancing problem.

    The balancing problem minimizes ``sum g(alpha_i)`` subject to
    ``|mean alpha phi_j - M(phi_j)| <= lam``. Its dual maximizes
    ``M(phi)' beta - mean g*(phi_i' beta) - lam |beta|_1``; the conjugate is
    computed by bisection on ``g'`` and the maximizer found by recursive
    grid refinement. The statistic is the largest pointwise gap between
    the induced representer and the fitted one.

    Parameters
    ----------
    loss_kind : {"SQ", "UKL"}
    functional : {"ATE", "CovariateShift"}
        ATE uses ``p = 2`` arm indicators with treatment-signed branches;
        covariate shift uses ``(1, x1, x2)``, ``p = 3``, on the positive branch.
    """
    data, fn, basis, rule = _dual_instance(functional, n, seed)
    c = 1.0 if (loss_kind == "UKL" and functional == "ATE") else 0.0
    loss = LossSpec(loss_kind, c=c)
    penalty = Penalty(1, lam)
    cfg = FitConfig(loss, canonical_pair(loss, rule), ModelSpec(basis=basis), penalty,
                    OptimizerConfig(max_iters=5000, grad_tol=1e-10))
    fit = fit_riesz(cfg, data, fn)
    Phi = basis_eval(basis, data.X)
    plan = evaluation_plan(fn, data)
    target = plan.weights @ basis_eval(basis, plan.points)
    signs = data.X[:, 0] * 2.0 - 1.0 if rule == TREATMENT_SIGN else np.ones(data.n)
    p = Phi.shape[1]
    beta = _grid_minimize(lambda b: _dual_value(loss, Phi, signs, target, lam, b), p)
    alpha_dual = _branch_root(loss, Phi @ beta, signs)
    gap = float(np.max(np.abs(alpha_dual - fit.model(data.X))))
    return OracleCheck("dual_bruteforce", gap, DUAL_THRESHOLD,
                       f"{loss_kind}/{functional}/n={n}/p={p}/lam={lam}/seed={seed}")


# ---------------------------------------------------------------------------
# Identities


def _bp_delta1_check(seed):
    # A mild shift keeps the SQ solution positive, where the two generators agree.
    data, _ = gen_covariate_shift(seed, 400, 400, dim=2, shift=0.1)
    fn = Functional("CovariateShift")
    basis = BasisSpec(POLYNOMIAL, degree=1)
    bp = LossSpec("BP", c=0.0, delta=1.0)
    sq = LossSpec("SQ", c=1.0)
    fits = [fit_riesz(FitConfig(loss, canonical_pair(loss, ALWAYS_POSITIVE),
                                ModelSpec(basis=basis)), data, fn) for loss in (bp, sq)]
    a_bp, a_sq = fits[0].model(data.X), fits[1].model(data.X)
    if a_sq.min() <= 0:
        return OracleCheck("bp_delta1_matches_sq", np.inf, 1e-4,
                           f"seed={seed}: SQ fit is not positive")
    gap = float(np.max(np.abs(a_bp - a_sq)))
    return OracleCheck("bp_delta1_matches_sq", gap, 1e-4, f"seed={seed}")


def _bp_small_delta_check(seed):
    data, _ = gen_covariate_shift(seed, 400, 400, dim=2, shift=0.3)
    fn = Functional("CovariateShift")
    basis = BasisSpec(POLYNOMIAL, degree=1)
    link = LinkSpec(LOG_BRANCH, 0.0)
    bp = FitConfig(LossSpec("BP", delta=1e-3), link, ModelSpec(basis=basis))
    ukl = FitConfig(LossSpec("UKL"), link, ModelSpec(basis=basis))
    rng = stream(seed, "bp-ukl-grid")
    worst = 0.0
    for _ in range(20):
        model = LinearModel(basis, 0.5 * rng.standard_normal(basis.size(data.dim)))
        a = empirical_bregman(bp, data, fn, model)
        b = empirical_bregman(ukl, data, fn, model)
        worst = max(worst, abs(a - b) / max(abs(b), 1e-12))
    return OracleCheck("bp_small_delta_approaches_ukl", worst, 1e-2, f"seed={seed}")


def _aipw_ipw_check(seed):
    data, _ = gen_synthetic_ate(seed, 500)
    fn = Functional("ATE")
    basis = BasisSpec(POLYNOMIAL, degree=2, treatment_split=True)
    sq = LossSpec("SQ")
    fit = fit_riesz(FitConfig(sq, canonical_pair(sq, TREATMENT_SIGN), ModelSpec(basis=basis),
                              optimizer=OptimizerConfig(grad_tol=1e-10)), data, fn)
    gamma = fit_least_squares(basis, data)
    gap = abs(aipw_estimate(data, fit.model, gamma, fn).theta
              - ipw_estimate(data, fit.model, fn).theta)
    return OracleCheck("aipw_equals_ipw_under_balance", gap, 1e-8, f"seed={seed}")


def _two_lsif_check(seed):
    data, _ = gen_synthetic_ate(seed, 500)
    fn = Functional("ATE")
    inner = BasisSpec(POLYNOMIAL, degree=2, on_z_only=True)
    split = BasisSpec(POLYNOMIAL, degree=2, treatment_split=True)
    sq = LossSpec("SQ")
    fit = fit_riesz(FitConfig(sq, canonical_pair(sq, TREATMENT_SIGN), ModelSpec(basis=split),
                              optimizer=OptimizerConfig(grad_tol=1e-10)), data, fn)
    Psi = basis_eval(inner, data.X)
    d = data.treatment
    worst = 0.0
    for arm, sign in ((1.0, 1.0), (0.0, -1.0)):
        group = d == arm
        kappa = group.mean()
        H = Psi[group].T @ Psi[group] / group.sum()
        h = Psi.mean(axis=0)
        r = Psi @ np.linalg.solve(H, h)
        X_arm = data.X.copy()
        X_arm[:, 0] = arm
        worst = max(worst, float(np.max(np.abs(fit.model(X_arm) - sign * r / kappa))))
    return OracleCheck("ate_splits_into_two_lsif", worst, 1e-6, f"seed={seed}")


def _nn_lsif_check(seed):
    data, _ = gen_synthetic_ate(seed, 40)
    return OracleCheck("nn_matching_is_lsif", nn_lsif_equivalence(data, 2), 1e-12,
                       f"n=40/M=2/seed={seed}")


def check_identities(seed: int = 1) -> list[OracleCheck]:
    """Run the five reduction identities on instances derived from ``seed``."""
    return [_bp_delta1_check(seed), _bp_small_delta_check(seed), _aipw_ipw_check(seed),
            _two_lsif_check(seed), _nn_lsif_check(seed)]


def run_all(seed: int = 1) -> list[OracleCheck]:
    """Gradients, dual brute force (SQ and UKL, both instance types) and identities."""
    checks = check_gradients(seed)
    for kind in ("SQ", "UKL"):
        for functional in ("ATE", "CovariateShift"):
            for lam in (0.0, 0.05):
                checks.append(check_dual_bruteforce(kind, lam, 20, seed, functional))
    checks.extend(check_identities(seed))
    return checks
