"""Bregman generators ``g`` and their derivatives.

Five families are supported. Writing ``s = sign(a)`` and ``t = |a|``:

* ``SQ``  : ``g(a) = (a - C)^2`` on the real line.
* ``UKL`` : ``g(a) = (t - C) log(t - C) - t`` on ``t > C``.
* ``BKL`` : ``g(a) = (t - C) log(t - C) - (t + C) log(t + C)`` on ``t > C``.
* ``BP``  : ``g(a) = ((t - C)^(1+delta) - (t - C)) / delta - t`` on ``t > C``.
* ``PU``  : ``g(a) = c~ log(1 - t) + c~ t (log t - log(1 - t))`` on ``0 < t < 1``.

Each is strictly convex on every branch of its domain. All functions are
vectorized: ``a`` may be a scalar or an array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

SQ, UKL, BKL, BP, PU = "SQ", "UKL", "BKL", "BP", "PU"
KINDS = (SQ, UKL, BKL, BP, PU)

# Evaluations closer than this to a branch boundary raise DomainError.
DOMAIN_EPS = 1e-9


@dataclass(frozen=True)
class LossSpec:
    """A Bregman generator with its constants.

    Parameters
    ----------
    kind : {"SQ", "UKL", "BKL", "BP", "PU"}
    c : float
        The constant ``C``. For UKL/BKL/BP it is the lower bound on ``|a|``.
    delta : float
        Power for BP.
    c_tilde : float
        Scale for PU.
    """

    kind: str
    c: float = 0.0
    delta: float = 1.0
    c_tilde: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown loss kind {self.kind!r}")
        if self.kind == BP and not self.delta > 0:
            raise ConfigError("BP requires delta > 0")
        if self.kind == PU and not self.c_tilde > 0:
            raise ConfigError("PU requires c_tilde > 0")
        if self.kind in (UKL, BP) and self.c < 0:
            raise ConfigError(f"{self.kind} requires c >= 0")
        if self.kind == BKL and not self.c > 0:
            # At c = 0 the generator is identically zero.
            raise ConfigError("BKL requires c > 0")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c, "delta": self.delta, "c_tilde": self.c_tilde}

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        return cls(d["kind"], float(d.get("c", 0.0)), float(d.get("delta", 1.0)),
                   float(d.get("c_tilde", 1.0)))


@dataclass(frozen=True)
class Domain:
    """Admissible set ``{a : low < |a| < high}`` (or the whole line)."""

    low: float
    high: float
    whole_line: bool = False

    def __str__(self):
        if self.whole_line:
            return "(-inf, inf)"
        hi = "inf" if np.isinf(self.high) else f"{self.high:g}"
        return f"{self.low:g} < |a| < {hi}"

    def intervals(self):
        """The domain as a list of open intervals."""
        if self.whole_line:
            return [(-np.inf, np.inf)]
        return [(-self.high, -self.low), (self.low, self.high)]


def loss_domain(spec: LossSpec) -> Domain:
    """Return the domain of ``g`` for ``spec``."""
    if spec.kind == SQ:
        return Domain(-np.inf, np.inf, whole_line=True)
    if spec.kind == PU:
        return Domain(0.0, 1.0)
    return Domain(spec.c, np.inf)


def domain_margin(spec: LossSpec, a):
    """Distance from ``a`` to the nearest branch boundary (``inf`` for SQ)."""
    a = np.asarray(a, dtype=float)
    if spec.kind == SQ:
        return np.full(a.shape, np.inf)
    t = np.abs(a)
    if spec.kind == PU:
        return np.minimum(t, 1.0 - t)
    return t - spec.c


def check_domain(spec: LossSpec, a, eps: float = DOMAIN_EPS):
    """Raise :class:`DomainError` if any entry of ``a`` is within ``eps`` of the boundary."""
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        bad = int(np.flatnonzero(~np.isfinite(a.ravel()))[0])
        raise DomainError(spec.kind, float(a.ravel()[bad]), str(loss_domain(spec)), bad)
    if spec.kind == SQ:
        return
    margin = domain_margin(spec, a)
    if np.any(margin <= eps):
        bad = int(np.argmin(margin.ravel()))
        raise DomainError(spec.kind, float(a.ravel()[bad]), str(loss_domain(spec)), bad)


def _out(value, a):
    return float(value) if np.ndim(a) == 0 else value


def eval_g(spec: LossSpec, a):
    """Evaluate the generator ``g`` at ``a``."""
    check_domain(spec, a)
    x = np.asarray(a, dtype=float)
    t = np.abs(x)
    c = spec.c
    if spec.kind == SQ:
        val = (x - c) ** 2
    elif spec.kind == UKL:
        val = (t - c) * np.log(t - c) - t
    elif spec.kind == BKL:
        val = (t - c) * np.log(t - c) - (t + c) * np.log(t + c)
    elif spec.kind == BP:
        u = t - c
        val = u * np.expm1(spec.delta * np.log(u)) / spec.delta - t
    else:
        k = spec.c_tilde
        val = k * np.log1p(-t) + k * t * (np.log(t) - np.log1p(-t))
    return _out(val, a)


def eval_dg(spec: LossSpec, a):
    """Evaluate ``g'`` at ``a``."""
    check_domain(spec, a)
    x = np.asarray(a, dtype=float)
    s = np.sign(x)
    t = np.abs(x)
    c = spec.c
    if spec.kind == SQ:
        val = 2.0 * (x - c)
    elif spec.kind == UKL:
        val = s * np.log(t - c)
    elif spec.kind == BKL:
        val = s * (np.log(t - c) - np.log(t + c))
    elif spec.kind == BP:
        val = (1.0 + 1.0 / spec.delta) * s * np.expm1(spec.delta * np.log(t - c))
    else:
        val = spec.c_tilde * s * (np.log(t) - np.log1p(-t))
    return _out(val, a)


def eval_d2g(spec: LossSpec, a):
    """Evaluate ``g''`` at ``a`` (positive on the domain)."""
    check_domain(spec, a)
    x = np.asarray(a, dtype=float)
    t = np.abs(x)
    c = spec.c
    if spec.kind == SQ:
        val = np.full(x.shape, 2.0)
    elif spec.kind == UKL:
        val = 1.0 / (t - c)
    elif spec.kind == BKL:
        val = 1.0 / (t - c) - 1.0 / (t + c)
    elif spec.kind == BP:
        val = (1.0 + spec.delta) * (t - c) ** (spec.delta - 1.0)
    else:
        val = spec.c_tilde * (1.0 / t + 1.0 / (1.0 - t))
    return _out(val, a)


def eval_d3g(spec: LossSpec, a):
    """Evaluate ``g'''`` at ``a``."""
    check_domain(spec, a)
    x = np.asarray(a, dtype=float)
    s = np.sign(x)
    t = np.abs(x)
    c = spec.c
    if spec.kind == SQ:
        val = np.zeros(x.shape)
    elif spec.kind == UKL:
        val = -s / (t - c) ** 2
    elif spec.kind == BKL:
        val = s * (-1.0 / (t - c) ** 2 + 1.0 / (t + c) ** 2)
    elif spec.kind == BP:
        d = spec.delta
        val = s * (1.0 + d) * (d - 1.0) * (t - c) ** (d - 2.0)
    else:
        val = spec.c_tilde * s * (-1.0 / t**2 + 1.0 / (1.0 - t) ** 2)
    return _out(val, a)


def bregman_pointwise(spec: LossSpec, a0, a):
    """Bregman divergence ``g(a0) - g(a) - g'(a) (a0 - a)``."""
    if spec.kind == SQ:
        check_domain(spec, a0)
        check_domain(spec, a)
        return _out((np.asarray(a0, float) - np.asarray(a, float)) ** 2, np.add(a0, a))
    val = eval_g(spec, a0) - eval_g(spec, a) - eval_dg(spec, a) * (np.asarray(a0) - np.asarray(a))
    return val
