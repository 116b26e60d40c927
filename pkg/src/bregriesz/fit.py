"""Empirical Bregman objective and the representer fitting routine.

For a representer ``alpha = link(xi(x), f_theta(x))`` the objective is

    BD(alpha) = mean_i [ -g(alpha_i) + g'(alpha_i) alpha_i ] - M(g' o alpha)

where ``M(h)`` is the sample average of ``m(W, h)`` (see
:mod:`bregriesz.functionals`), plus a penalty ``lam * J(theta)``:

* order 1: ``lam * |theta|_1``
* order 2: ``(lam / 2) * |theta|_2^2``
* ``"rkhs"``: ``lam * theta' K theta`` for kernel models

For SQ the objective simplifies (up to a constant) to
``mean_i alpha_i^2 - 2 M(alpha)``; both forms are available.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .data import TREATMENT_FIRST, Dataset
from .errors import ConfigError, DomainError, InitializationError
from .functionals import AME, COVARIATE_SHIFT, EvalPlan, Functional, evaluation_plan
from .links import (ALWAYS_POSITIVE, ATE_PROPENSITY_LOGIT, RAW, TREATMENT_SIGN, LinkSpec,
                    apply_link, branch_selector, link_deriv, link_deriv2)
from .losses import (BP, SQ, UKL, LossSpec, check_domain, eval_d2g, eval_d3g, eval_dg,
                     eval_g)
from .models import (BasisSpec, KernelModel, LinearModel, MlpModel, basis_eval,
                     model_from_dict)
from .optim import OptimResult, minimize_lbfgs, minimize_proximal

log = logging.getLogger(__name__)

# Minimum distance to a branch boundary for iterates during optimization.
LINE_SEARCH_GUARD = 1e-7
LINEAR_GRAD_TOL = 1e-8
MLP_GRAD_TOL = 1e-5
DEFAULT_NN_CONSTANT = 0.1


# ---------------------------------------------------------------------------
# Configuration


@dataclass(frozen=True)
class Penalty:
    """Penalty ``lam * J(theta)``; ``order`` is 1, 2 or ``"rkhs"``."""

    order: Union[int, str] = 2
    lam: float = 0.0

    def __post_init__(self):
        if self.order not in (1, 2, "rkhs"):
            raise ConfigError(f"penalty order must be 1, 2 or 'rkhs', got {self.order!r}")
        if not self.lam >= 0:
            raise ConfigError(f"penalty lambda must be >= 0, got {self.lam}")


@dataclass(frozen=True)
class OptimizerConfig:
    """Solver settings. ``grad_tol=None`` picks the per-model default."""

    max_iters: int = 500
    grad_tol: Optional[float] = None
    step_rule: str = "backtracking"
    memory: int = 10
    keep_trace: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ConfigError("max_iters must be >= 1")
        if self.grad_tol is not None and not self.grad_tol > 0:
            raise ConfigError("grad_tol must be positive")
        if self.step_rule != "backtracking":
            raise ConfigError(f"unknown step rule {self.step_rule!r}")


@dataclass(frozen=True)
class ModelSpec:
    """Recipe for a base model, instantiated per training sample.

    Parameters
    ----------
    kind : {"linear", "kernel", "mlp"}
    basis : BasisSpec, optional
        Feature map for ``"linear"``.
    hidden : tuple of int
        Hidden widths for ``"mlp"``.
    n_centers, bandwidth, bandwidth_scale : kernel settings
        ``bandwidth=None`` uses ``bandwidth_scale`` times the median distance.
    on_z_only : bool
        For kernel and MLP models, drop the treatment column.
    """

    kind: str = "linear"
    basis: Optional[BasisSpec] = None
    hidden: tuple = (100,)
    n_centers: int = 100
    bandwidth: Optional[float] = None
    bandwidth_scale: float = 1.0
    on_z_only: bool = False

    def __post_init__(self):
        if self.kind not in ("linear", "kernel", "mlp"):
            raise ConfigError(f"unknown model kind {self.kind!r}")
        if self.kind == "linear" and self.basis is None:
            raise ConfigError("linear model requires a basis")

    def build(self, data: Dataset, seed: int = 0):
        if self.kind == "linear":
            return LinearModel.zeros(self.basis, data.dim)
        if self.kind == "kernel":
            return KernelModel.from_data(data.X, n_centers=self.n_centers, seed=seed,
                                         bandwidth=self.bandwidth,
                                         bandwidth_scale=self.bandwidth_scale,
                                         on_z_only=self.on_z_only)
        return MlpModel.init(data.dim, self.hidden, seed, self.on_z_only)

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        if self.basis is not None:
            out["basis"] = self.basis.to_dict()
        if self.kind == "mlp":
            out["hidden"] = list(self.hidden)
        if self.kind == "kernel":
            out.update(n_centers=self.n_centers, bandwidth=self.bandwidth,
                       bandwidth_scale=self.bandwidth_scale)
        if self.kind != "linear":
            out["on_z_only"] = self.on_z_only
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        basis = d.get("basis")
        return cls(d.get("kind", "linear"),
                   None if basis is None else BasisSpec.from_dict(basis),
                   tuple(d.get("hidden", (100,))), int(d.get("n_centers", 100)),
                   d.get("bandwidth"), float(d.get("bandwidth_scale", 1.0)),
                   bool(d.get("on_z_only", False)))


@dataclass(frozen=True)
class FitConfig:
    """Everything needed to fit a representer.

    ``model`` is either a :class:`ModelSpec` (built on the training sample)
    or a concrete model whose current parameters are the starting point.
    ``nn_constant`` is the constant ``C`` in the non-negative correction,
    which should satisfy ``C < 1 / sup(ratio)``.
    """

    loss: LossSpec
    link: LinkSpec
    model: object
    penalty: Penalty = Penalty()
    optimizer: OptimizerConfig = OptimizerConfig()
    nn_correction: bool = False
    nn_constant: float = DEFAULT_NN_CONSTANT
    seed: int = 0

    def __post_init__(self):
        if not isinstance(self.penalty, Penalty):
            raise ConfigError("penalty must be a Penalty")
        if self.nn_constant < 0:
            raise ConfigError("nn_constant must be non-negative")
        kind = self.model.kind if isinstance(self.model, ModelSpec) else None
        is_mlp = kind == "mlp" or isinstance(self.model, MlpModel)
        is_kernel = kind == "kernel" or isinstance(self.model, KernelModel)
        if is_mlp and self.penalty.order == 1 and self.penalty.lam > 0:
            raise ConfigError("l1 penalty is not supported for MLP models")
        if self.penalty.order == "rkhs" and not is_kernel:
            raise ConfigError("RKHS penalty requires a kernel model")

    @property
    def is_mlp(self) -> bool:
        return (isinstance(self.model, MlpModel)
                or (isinstance(self.model, ModelSpec) and self.model.kind == "mlp"))

    @property
    def grad_tol(self) -> float:
        if self.optimizer.grad_tol is not None:
            return self.optimizer.grad_tol
        return MLP_GRAD_TOL if self.is_mlp else LINEAR_GRAD_TOL

    def to_dict(self) -> dict:
        model = (self.model.to_dict() if isinstance(self.model, ModelSpec)
                 else {"instance": self.model.to_dict()})
        return {"loss": self.loss.to_dict(), "link": self.link.to_dict(), "model": model,
                "penalty": {"order": self.penalty.order, "lambda": self.penalty.lam},
                "optimizer": {"max_iters": self.optimizer.max_iters,
                              "grad_tol": self.optimizer.grad_tol,
                              "step_rule": self.optimizer.step_rule,
                              "keep_trace": self.optimizer.keep_trace},
                "nn_correction": self.nn_correction, "nn_constant": self.nn_constant,
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "FitConfig":
        m = d.get("model", {})
        model = model_from_dict(m["instance"]) if "instance" in m else ModelSpec.from_dict(m)
        pen = d.get("penalty", {})
        opt = d.get("optimizer", {})
        order = pen.get("order", 2)
        return cls(LossSpec.from_dict(d["loss"]), LinkSpec.from_dict(d["link"]), model,
                   Penalty(order if order == "rkhs" else int(order),
                           float(pen.get("lambda", 0.0))),
                   OptimizerConfig(int(opt.get("max_iters", 500)), opt.get("grad_tol"),
                                   opt.get("step_rule", "backtracking"),
                                   int(opt.get("memory", 10)),
                                   bool(opt.get("keep_trace", False))),
                   bool(d.get("nn_correction", False)),
                   float(d.get("nn_constant", DEFAULT_NN_CONSTANT)), int(d.get("seed", 0)))


# ---------------------------------------------------------------------------
# Fitted representer


@dataclass(frozen=True)
class RieszModel:
    """Base model composed with a link: ``alpha(x) = link(xi(x), f(x))``."""

    base: object
    link: LinkSpec

    def index(self, X):
        return self.base.value(np.atleast_2d(X))

    def branch(self, X):
        return branch_selector(self.link, X)

    def value(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return apply_link(self.link, self.branch(X), self.base.value(X))

    __call__ = value

    def partial(self, X, j):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.link.branch_rule == TREATMENT_SIGN and j == 0 and self.link.kind != RAW:
            raise DomainError(self.link.kind, 0.0, "differentiable in the treatment column")
        f = self.base.value(X)
        return link_deriv(self.link, self.branch(X), f) * self.base.partial(X, j)

    def to_dict(self) -> dict:
        return {"link": self.link.to_dict(), "base": self.base.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "RieszModel":
        return cls(model_from_dict(d["base"]), LinkSpec.from_dict(d["link"]))


@dataclass
class FitResult:
    """Outcome of :func:`fit_riesz`.

    ``grad_norm`` is the norm of the penalized gradient (smooth penalties) or
    of the proximal gradient mapping (l1 penalty).
    """

    model: RieszModel
    objective: float
    grad_norm: float
    iterations: int
    converged: bool
    config: FitConfig
    message: str = ""
    trace: list = field(default_factory=list)
    balance_residuals: Optional[np.ndarray] = None

    @property
    def params(self):
        return self.model.base.params

    def to_dict(self, include_trace: bool = False) -> dict:
        out = {"model": self.model.to_dict(), "objective": self.objective,
               "grad_norm": self.grad_norm, "iterations": self.iterations,
               "converged": self.converged, "message": self.message,
               "config": self.config.to_dict()}
        if self.balance_residuals is not None:
            out["balance_residuals"] = np.asarray(self.balance_residuals).tolist()
        if include_trace:
            out["trace"] = list(self.trace)
        return out


# ---------------------------------------------------------------------------
# Objective


def _validate(config: FitConfig, data: Dataset, functional: Functional):
    functional.validate(data)
    if config.link.branch_rule == TREATMENT_SIGN and data.layout != TREATMENT_FIRST:
        raise ConfigError("TreatmentSign branch rule requires the TreatmentFirst layout")
    if config.link.kind == ATE_PROPENSITY_LOGIT and config.link.branch_rule != TREATMENT_SIGN:
        raise ConfigError("AtePropensityLogit requires the TreatmentSign branch rule")
    if functional.kind == AME and config.link.kind != RAW \
            and config.link.branch_rule != ALWAYS_POSITIVE:
        raise ConfigError("AME requires a Raw link or the AlwaysPositive branch rule")


class _Objective:
    """Objective and gradient for fixed (config, data, functional)."""

    def __init__(self, config: FitConfig, data: Dataset, functional: Functional, model,
                 form: str = "auto", guard: float = 1e-9):
        _validate(config, data, functional)
        self.config = config
        self.loss = config.loss
        self.link = config.link
        self.data = data
        self.functional = functional
        self.model = model
        self.guard = guard
        if form == "auto":
            form = "simplified" if self.loss.kind == SQ else "general"
        if form not in ("general", "simplified"):
            raise ConfigError(f"unknown objective form {form!r}")
        if form == "simplified" and self.loss.kind != SQ:
            raise ConfigError("the simplified form exists only for SQ")
        self.form = form
        self.plan: EvalPlan = evaluation_plan(functional, data)
        self.xi = branch_selector(self.link, data.X)
        self.xi_plan = branch_selector(self.link, self.plan.points)
        self.gram = model.gram() if config.penalty.order == "rkhs" else None

    # -- model access (features are cached for linear-in-parameter models) --
    def _cache(self, model):
        if not isinstance(model, LinearModel):
            return None
        if getattr(self, "_feat", None) is None or self._feat[0] is not model.basis:
            j = self.plan.coordinate
            self._feat = (model.basis, model.features(self.data.X),
                          model.features(self.plan.points),
                          None if j is None else model.partial_jacobian(self.plan.points, j))
        return self._feat

    def _values(self, model):
        c = self._cache(model)
        j = self.plan.coordinate
        if c is None:
            f = model.value(self.data.X)
            fP = model.value(self.plan.points)
            dfP = None if j is None else model.partial(self.plan.points, j)
        else:
            theta = model.params
            f, fP = c[1] @ theta, c[2] @ theta
            dfP = None if j is None else c[3] @ theta
        return f, fP, dfP

    def _vjp_sample(self, model, v):
        c = self._cache(model)
        return model.vjp(self.data.X, v) if c is None else c[1].T @ v

    def _vjp_plan(self, model, v):
        c = self._cache(model)
        return model.vjp(self.plan.points, v) if c is None else c[2].T @ v

    def _vjp_plan_partial(self, model, v):
        c = self._cache(model)
        if c is None:
            return model.partial_jacobian(self.plan.points, self.plan.coordinate).T @ v
        return c[3].T @ v

    def _link_values(self, f, fP):
        a = apply_link(self.link, self.xi, f)
        aP = apply_link(self.link, self.xi_plan, fP)
        for arr, where in ((a, "sample"), (aP, "functional evaluation points")):
            try:
                check_domain(self.loss, arr, self.guard)
            except DomainError as exc:
                raise DomainError(self.loss.kind, exc.value,
                                  f"{exc.boundary} ({where})", exc.index) from None
        return a, aP

    def bregman(self, model, grad: bool = True):
        """Unpenalized objective (and its parameter gradient)."""
        w = self.plan.weights
        n = self.data.n
        loss, link = self.loss, self.link
        f, fP, dfP = self._values(model)
        a, aP = self._link_values(f, fP)
        j = self.plan.coordinate
        if j is not None:
            lP = link_deriv(link, self.xi_plan, fP)
        if self.form == "simplified":
            value = float(np.mean(a * a))
            mterm = float(w @ aP) if j is None else float(w @ (lP * dfP))
            value -= 2.0 * mterm
        else:
            conj = -eval_g(loss, a) + eval_dg(loss, a) * a
            if j is None:
                mterm = float(w @ eval_dg(loss, aP))
            else:
                mterm = float(w @ (eval_d2g(loss, aP) * lP * dfP))
            value = float(np.mean(conj)) - mterm
        if not grad:
            return value, None
        l_x = link_deriv(link, self.xi, f)
        if self.form == "simplified":
            g = self._vjp_sample(model, 2.0 * a * l_x / n)
            if j is None:
                g -= self._vjp_plan(model, 2.0 * w * link_deriv(link, self.xi_plan, fP))
            else:
                l2P = link_deriv2(link, self.xi_plan, fP)
                g -= self._vjp_plan(model, 2.0 * w * l2P * dfP)
                g -= self._vjp_plan_partial(model, 2.0 * w * lP)
        else:
            g = self._vjp_sample(model, eval_d2g(loss, a) * a * l_x / n)
            if j is None:
                g -= self._vjp_plan(model, w * eval_d2g(loss, aP)
                                    * link_deriv(link, self.xi_plan, fP))
            else:
                d2 = eval_d2g(loss, aP)
                d3 = eval_d3g(loss, aP)
                l2P = link_deriv2(link, self.xi_plan, fP)
                g -= self._vjp_plan(model, w * (d3 * lP * lP + d2 * l2P) * dfP)
                g -= self._vjp_plan_partial(model, w * d2 * lP)
        return value, g

    def nn_corrected(self, model, grad: bool = True):
        """Objective with the non-negative component clamped at zero."""
        if self.functional.kind != COVARIATE_SHIFT:
            raise ConfigError("the non-negative correction applies to covariate shift only")
        offset = nn_offset(self.loss)
        c = self.config.nn_constant
        w = self.plan.weights
        loss, link = self.loss, self.link
        f, fP, _ = self._values(model)
        a, aP = self._link_values(f, fP)
        ell_x = -eval_g(loss, a) + eval_dg(loss, a) * a + offset
        ell_p = -eval_g(loss, aP) + eval_dg(loss, aP) * aP + offset
        component = float(np.mean(ell_x) - c * (w @ ell_p))
        if component >= 0:
            return self.bregman(model, grad)
        value = float(w @ (c * ell_p - eval_dg(loss, aP))) - offset
        if not grad:
            return value, None
        d2 = eval_d2g(loss, aP)
        g = self._vjp_plan(model, w * (c * d2 * aP - d2) * link_deriv(link, self.xi_plan, fP))
        return value, g

    def penalty(self, theta):
        pen = self.config.penalty
        if pen.lam == 0 or pen.order == 1:
            return 0.0, np.zeros_like(theta)
        if pen.order == 2:
            return 0.5 * pen.lam * float(theta @ theta), pen.lam * theta
        Kt = self.gram @ theta
        return pen.lam * float(theta @ Kt), 2.0 * pen.lam * Kt

    def smooth(self, theta, grad: bool = True):
        model = self.model.with_params(theta)
        if self.config.nn_correction:
            value, g = self.nn_corrected(model, grad)
        else:
            value, g = self.bregman(model, grad)
        pv, pg = self.penalty(theta)
        return value + pv, (None if g is None else g + pg)


def nn_offset(loss: LossSpec) -> float:
    """Constant making ``-g(a) + g'(a) a + offset`` non-negative on the domain.

    Raises
    ------
    ConfigError
        For generators where that quantity is unbounded below.
    """
    if loss.kind == SQ:
        return loss.c**2
    if loss.kind in (UKL, BP) and loss.c == 0:
        return 0.0
    raise ConfigError("the non-negative correction requires SQ, or UKL/BP with c = 0")


def _model_of(config: FitConfig, data: Dataset, model=None):
    if model is not None:
        return model.base if isinstance(model, RieszModel) else model
    if isinstance(config.model, ModelSpec):
        return config.model.build(data, config.seed)
    return config.model


def empirical_bregman(config: FitConfig, data: Dataset, functional: Functional, model=None,
                      *, form: str = "auto") -> float:
    """Unpenalized empirical Bregman objective at ``model``.

    Parameters
    ----------
    form : {"auto", "general", "simplified"}
        ``"auto"`` uses the simplified form for SQ and the general form
        otherwise. The two differ by a constant.

    Raises
    ------
    DomainError
        If the representer leaves the loss domain at a sample point or at a
        functional evaluation point.
    """
    base = _model_of(config, data, model)
    return _Objective(config, data, functional, base, form).bregman(base, grad=False)[0]


def empirical_bregman_grad(config: FitConfig, data: Dataset, functional: Functional,
                           model=None, *, form: str = "auto"):
    """Parameter gradient of :func:`empirical_bregman`."""
    base = _model_of(config, data, model)
    return _Objective(config, data, functional, base, form).bregman(base, grad=True)[1]


def penalized_objective(config: FitConfig, data: Dataset, functional: Functional, model=None):
    """Objective including the penalty (and the correction if configured)."""
    base = _model_of(config, data, model)
    obj = _Objective(config, data, functional, base)
    theta = base.params
    value = obj.smooth(theta, grad=False)[0]
    if config.penalty.order == 1:
        value += config.penalty.lam * float(np.abs(theta).sum())
    return value


def nn_corrected_objective(config: FitConfig, data: Dataset, functional: Functional,
                           model=None) -> float:
    """Objective with the non-negative component clamped at zero from below.

    With source sample ``X_i`` and target sample ``X~_j``, write
    ``l(a) = -g(a) + g'(a) a + k`` where ``k`` (:func:`nn_offset`) makes
    ``l`` non-negative. The objective is rewritten as

        [ mean_i l(alpha(X_i)) - C mean_j l(alpha(X~_j)) ]_+
            + mean_j [ C l(alpha(X~_j)) - g'(alpha(X~_j)) ] - k

    The bracket estimates a non-negative population quantity when
    ``C < 1 / sup ratio``; when it is already non-negative the value equals
    :func:`empirical_bregman` exactly.
    """
    base = _model_of(config, data, model)
    return _Objective(config, data, functional, base, "general").nn_corrected(base, False)[0]


# ---------------------------------------------------------------------------
# Fitting


def _feasible_start(obj: _Objective, model):
    try:
        obj.smooth(model.params, grad=False)
        return model
    except DomainError as exc:
        if not isinstance(model, MlpModel):
            raise InitializationError(f"starting point is infeasible: {exc}") from exc
        last = exc
    for _ in range(60):
        model = model.scale_output(0.5)
        try:
            obj.smooth(model.params, grad=False)
            return model
        except DomainError as exc:
            last = exc
    raise InitializationError(f"no feasible output scaling found: {last}")


def fit_riesz(config: FitConfig, data: Dataset, functional: Functional, *,
              form: str = "auto") -> FitResult:
    """Minimize the penalized empirical Bregman objective.

    Smooth problems (order-2 or RKHS penalty, or ``lam = 0``) use L-BFGS;
    the l1 penalty uses accelerated proximal gradient. Both halve trial
    steps that bring any representer value within ``1e-7`` of a branch
    boundary.

    Raises
    ------
    InitializationError
        If the starting representer is outside the loss domain.
    """
    base = _model_of(config, data)
    obj = _Objective(config, data, functional, base, form, guard=LINE_SEARCH_GUARD)
    base = _feasible_start(obj, base)
    obj.model = base
    opt = config.optimizer
    tol = config.grad_tol

    def fun(theta):
        return obj.smooth(theta)

    if config.penalty.order == 1 and config.penalty.lam > 0:
        res = _minimize_l1(fun, base.params, config.penalty.lam, opt, tol)
    else:
        res = minimize_lbfgs(fun, base.params, max_iters=opt.max_iters, grad_tol=tol,
                             memory=opt.memory, keep_trace=opt.keep_trace)
    if not res.converged:
        log.info("fit_riesz stopped without converging: %s (grad %.3g after %d iterations)",
                 res.message, res.grad_norm, res.iterations)
    fitted = RieszModel(base.with_params(res.x), config.link)
    return FitResult(fitted, res.fun, res.grad_norm, res.iterations, res.converged, config,
                     res.message, res.trace)


def l1_kkt_residual(grad, theta, lam):
    """Norm of the minimum-norm subgradient of ``f + lam |.|_1``."""
    nz = theta != 0
    r = np.where(nz, grad + lam * np.sign(theta), np.maximum(np.abs(grad) - lam, 0.0))
    return float(np.linalg.norm(r))


def _minimize_l1(fun, theta0, lam, opt: OptimizerConfig, tol: float) -> OptimResult:
    """Proximal gradient alternated with smooth solves on the active set.

    Proximal gradient identifies the support and signs; on that face the
    objective is smooth (``f + lam * sign' theta``) and L-BFGS finishes the
    job quickly. A face solve is kept only when it preserves the signs and
    does not increase the objective. Convergence is measured by the
    minimum-norm subgradient.
    """
    theta = np.array(theta0, dtype=float)
    trace, used = [], 0
    burst = min(opt.max_iters, 50)

    def total(th):
        return fun(th)[0] + lam * float(np.abs(th).sum())

    while True:
        res = minimize_proximal(fun, theta, lam, max_iters=burst, tol=tol,
                                keep_trace=opt.keep_trace)
        used += res.iterations
        trace.extend(res.trace)
        theta = res.x
        active = np.flatnonzero(theta)
        if active.size:
            signs = np.sign(theta[active])

            def face(u):
                full = np.zeros_like(theta)
                full[active] = u
                f, g = fun(full)
                return f + lam * float(signs @ u), g[active] + lam * signs

            try:
                sub = minimize_lbfgs(face, theta[active], max_iters=opt.max_iters,
                                     grad_tol=0.5 * tol, memory=opt.memory)
                used += sub.iterations
                cand = np.zeros_like(theta)
                cand[active] = sub.x
                if np.all(np.sign(sub.x) == signs) and total(cand) <= total(theta):
                    theta = cand
                    if opt.keep_trace:
                        trace.append(total(theta))
            except DomainError:
                pass
        f, g = fun(theta)
        kkt = l1_kkt_residual(g, theta, lam)
        if kkt <= tol or used >= opt.max_iters:
            break
    value = f + lam * float(np.abs(theta).sum())
    converged = kkt <= tol
    return OptimResult(theta, value, kkt, used, converged,
                       "subgradient tolerance reached" if converged else "max_iters reached",
                       trace)


# ---------------------------------------------------------------------------
# Propensity likelihood


def fit_propensity_mle(basis: BasisSpec, data: Dataset, lam: float = 0.0, *,
                       max_iters: int = 500, grad_tol: float = LINEAR_GRAD_TOL) -> FitResult:
    """Logistic maximum likelihood for the propensity, returned as a representer.

    Minimizes ``-mean[D log e + (1 - D) log(1 - e)] + (lam / 2) |beta|^2``
    with ``e = sigmoid(phi(x)' beta)``. The result is wrapped with the
    ``AtePropensityLogit`` link so that it evaluates to
    ``D / e - (1 - D) / (1 - e)``.
    """
    data.require_treatment()
    d = data.treatment
    Phi = basis_eval(basis, data.X)
    n = data.n

    def fun(beta):
        v = Phi @ beta
        # -log sigmoid(v) = logaddexp(0, -v)
        nll = np.mean(d * np.logaddexp(0.0, -v) + (1.0 - d) * np.logaddexp(0.0, v))
        e = 0.5 * (1.0 + np.tanh(0.5 * v))
        g = Phi.T @ (e - d) / n + lam * beta
        return float(nll + 0.5 * lam * beta @ beta), g

    res = minimize_lbfgs(fun, np.zeros(Phi.shape[1]), max_iters=max_iters, grad_tol=grad_tol)
    link = LinkSpec(ATE_PROPENSITY_LOGIT, branch_rule=TREATMENT_SIGN)
    model = RieszModel(LinearModel(basis, res.x), link)
    cfg = FitConfig(LossSpec("BKL", c=1.0), link, LinearModel(basis, np.zeros(Phi.shape[1])),
                    Penalty(2, lam))
    return FitResult(model, res.fun, res.grad_norm, res.iterations, res.converged, cfg,
                     "propensity likelihood: " + res.message)
