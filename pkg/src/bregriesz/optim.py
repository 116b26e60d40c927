"""Domain-guarded first-order solvers.

Both solvers take an oracle ``fun(x) -> (f, grad)`` that raises
:class:`~bregriesz.errors.DomainError` when ``x`` leaves the feasible region.
A trial step that raises is halved, so iterates never leave the domain, and
the objective never increases between accepted iterates beyond its
floating-point resolution.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

MAX_HALVINGS = 60
# Relative objective change treated as floating-point noise.
ROUNDOFF = 4 * np.finfo(float).eps


@dataclass
class OptimResult:
    """Solver output."""

    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    converged: bool
    message: str = ""
    trace: list = field(default_factory=list)


def _try(fun, x):
    try:
        f, g = fun(x)
    except DomainError:
        return None
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        return None
    return float(f), np.asarray(g, dtype=float)


def minimize_lbfgs(fun, x0, *, max_iters: int = 500, grad_tol: float = 1e-8,
                   memory: int = 10, keep_trace: bool = False) -> OptimResult:
    """Limited-memory BFGS with backtracking.

    A step is accepted when it satisfies the Armijo condition, or when the
    gradient norm shrinks while the objective changes by no more than its
    floating-point resolution (``ROUNDOFF * |f|``). The second rule lets the
    solver keep making progress once objective differences are below what
    double precision can resolve.

    Raises
    ------
    DomainError
        If ``x0`` itself is infeasible.
    """
    x = np.array(x0, dtype=float)
    first = _try(fun, x)
    if first is None:
        raise DomainError("optimizer", float("nan"), "feasible starting point")
    f, g = first
    trace = [f] if keep_trace else []
    S, Y = deque(maxlen=memory), deque(maxlen=memory)
    gnorm = float(np.linalg.norm(g))
    it = 0
    message = "max_iters reached"
    while it < max_iters:
        if gnorm <= grad_tol:
            message = "gradient tolerance reached"
            break
        d = _two_loop(g, S, Y)
        slope = float(g @ d)
        if not slope < 0:
            S.clear()
            Y.clear()
            d = -g
            slope = -gnorm**2
        t = 1.0 if S else min(1.0, 1.0 / gnorm)
        accepted = None
        for _ in range(MAX_HALVINGS):
            trial = _try(fun, x + t * d)
            if trial is not None:
                f_new, g_new = trial
                if f_new <= f + 1e-4 * t * slope:
                    accepted = trial
                    break
                if f_new <= f + ROUNDOFF * abs(f) and np.linalg.norm(g_new) < gnorm:
                    accepted = trial
                    break
            t *= 0.5
        if accepted is None:
            if S:
                S.clear()
                Y.clear()
                continue
            message = "line search failed"
            break
        it += 1
        f_new, g_new = accepted
        s = t * d
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            S.append(s)
            Y.append(y)
        x = x + s
        f, g = f_new, g_new
        gnorm = float(np.linalg.norm(g))
        if keep_trace:
            trace.append(f)
    converged = gnorm <= grad_tol
    if converged:
        message = "gradient tolerance reached"
    return OptimResult(x, f, gnorm, it, converged, message, trace)


def _two_loop(g, S, Y):
    q = g.copy()
    alphas = []
    for s, y in zip(reversed(S), reversed(Y)):
        rho = 1.0 / (y @ s)
        a = rho * (s @ q)
        q -= a * y
        alphas.append((rho, a))
    if S:
        s, y = S[-1], Y[-1]
        q *= (s @ y) / (y @ y)
    for (s, y), (rho, a) in zip(zip(S, Y), reversed(alphas)):
        b = rho * (y @ q)
        q += (a - b) * s
    return -q


def soft_threshold(x, tau):
    """Proximal map of ``tau * |x|_1``."""
    return np.sign(x) * np.maximum(np.abs(x) - tau, 0.0)


def minimize_proximal(fun, x0, lam: float, *, max_iters: int = 500, tol: float = 1e-8,
                      keep_trace: bool = False) -> OptimResult:
    """Monotone accelerated proximal gradient for ``f(x) + lam * |x|_1``.

    Step sizes are found by backtracking on the quadratic upper bound, with
    halving on domain violations. When function differences fall to
    roundoff level the bound is checked through gradient differences. Convergence is declared when the gradient
    mapping ``|y - prox(y - t grad f(y))| / t`` falls below ``tol``.
    ``grad_norm`` in the result reports that quantity.
    """
    x = np.array(x0, dtype=float)
    first = _try(fun, x)
    if first is None:
        raise DomainError("optimizer", float("nan"), "feasible starting point")
    fx, gx = first
    Fx = fx + lam * np.abs(x).sum()
    trace = [Fx] if keep_trace else []
    y, fy, gy = x.copy(), fx, gx
    theta = 1.0
    t = 1.0 / max(np.linalg.norm(gx), 1.0)
    mapping = np.inf
    it = 0
    message = "max_iters reached"
    while it < max_iters:
        z = None
        t = t * 2.0
        for _ in range(MAX_HALVINGS):
            cand = soft_threshold(y - t * gy, t * lam)
            trial = _try(fun, cand)
            if trial is not None:
                diff = cand - y
                quad = (diff @ diff) / (2.0 * t)
                gap = trial[0] - fy - gy @ diff
                if abs(gap) <= ROUNDOFF * (abs(fy) + abs(trial[0])):
                    # Function values are at roundoff; test curvature through gradients.
                    ok = (trial[1] - gy) @ diff <= 2.0 * quad
                else:
                    ok = gap <= quad
                if ok:
                    z, (fz, gz) = cand, trial
                    break
            t *= 0.5
        if z is None:
            message = "line search failed"
            break
        it += 1
        mapping = float(np.linalg.norm(z - y) / t)
        Fz = fz + lam * np.abs(z).sum()
        x_prev = x
        slack = ROUNDOFF * abs(Fx)
        if Fz <= Fx + slack:
            x, fx, gx, Fx = z, fz, gz, Fz
        if keep_trace:
            trace.append(Fx)
        if mapping <= tol:
            message = "proximal tolerance reached"
            break
        theta_next = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta**2))
        y_next = x + (theta / theta_next) * (z - x) + ((theta - 1.0) / theta_next) * (x - x_prev)
        theta = theta_next
        trial = _try(fun, y_next)
        if trial is None or Fz > Fx + slack:
            # Restart momentum from the current iterate.
            y, fy, gy, theta = x.copy(), fx, gx, 1.0
        else:
            y = y_next
            fy, gy = trial
    converged = mapping <= tol
    return OptimResult(x, Fx, mapping, it, converged, message, trace)
