"""Link functions mapping a base-model index ``v = f(x)`` to a representer value.

A branch selector ``xi(x) in {0, 1}`` chooses the positive (``xi = 1``) or
negative (``xi = 0``) branch of the loss domain. With ``k = 1 + 1/delta``:

==================  =======================================================
``Raw``             ``v``
``LinearSQ``        ``v / 2 + c``
``LogBranch``       ``xi (c + e^v) - (1 - xi)(c + e^-v)``
``PowerBranch``     ``xi (c + (1 + v/k)^(1/delta)) - (1 - xi)(c + (1 - v/k)^(1/delta))``
``Exponential``     ``e^v``
``AtePropensityLogit``  ``xi (1 + e^-v) - (1 - xi)(1 + e^v)``
==================  =======================================================

``LinearSQ``, ``LogBranch`` and ``PowerBranch`` are the branchwise inverses
of ``g'`` for SQ, UKL and BP, so ``g'(link(xi, v)) = v`` on both branches.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError, LayoutError, NoCanonicalPairError
from .losses import BP, DOMAIN_EPS, SQ, UKL, LossSpec

RAW = "Raw"
LINEAR_SQ = "LinearSQ"
LOG_BRANCH = "LogBranch"
POWER_BRANCH = "PowerBranch"
EXPONENTIAL = "Exponential"
ATE_PROPENSITY_LOGIT = "AtePropensityLogit"
KINDS = (RAW, LINEAR_SQ, LOG_BRANCH, POWER_BRANCH, EXPONENTIAL, ATE_PROPENSITY_LOGIT)

ALWAYS_POSITIVE = "AlwaysPositive"
TREATMENT_SIGN = "TreatmentSign"
BRANCH_RULES = (ALWAYS_POSITIVE, TREATMENT_SIGN)


@dataclass(frozen=True)
class LinkSpec:
    """Link kind, its constants and the branch rule."""

    kind: str
    c: float = 0.0
    delta: float = 1.0
    branch_rule: str = ALWAYS_POSITIVE

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown link kind {self.kind!r}")
        if self.branch_rule not in BRANCH_RULES:
            raise ConfigError(f"unknown branch rule {self.branch_rule!r}")
        if self.kind == POWER_BRANCH and not self.delta > 0:
            raise ConfigError("PowerBranch requires delta > 0")

    @property
    def k(self) -> float:
        return 1.0 + 1.0 / self.delta

    def to_dict(self) -> dict:
        return {"kind": self.kind, "c": self.c, "delta": self.delta,
                "branch_rule": self.branch_rule}

    @classmethod
    def from_dict(cls, d: dict) -> "LinkSpec":
        return cls(d["kind"], float(d.get("c", 0.0)), float(d.get("delta", 1.0)),
                   d.get("branch_rule", ALWAYS_POSITIVE))


def branch_selector(link: LinkSpec, X, layout=None):
    """Branch indicator ``xi`` for each row of ``X``.

    ``TreatmentSign`` reads the treatment from column 0; ``AlwaysPositive``
    returns ones.
    """
    X = np.atleast_2d(X)
    if link.branch_rule == TREATMENT_SIGN:
        if layout is not None and layout != "TreatmentFirst":
            raise LayoutError("TreatmentSign branch rule requires the TreatmentFirst layout")
        return X[:, 0].astype(float)
    return np.ones(X.shape[0])


def _power_base(link, xi, v):
    base = np.where(xi > 0.5, 1.0 + v / link.k, 1.0 - v / link.k)
    if np.any(base <= DOMAIN_EPS):
        bad = int(np.argmin(np.ravel(base)))
        raise DomainError(POWER_BRANCH, float(np.ravel(v)[bad]), "1 +/- v/k > 0", bad)
    return base


def _out(value, xi, v):
    return float(value) if np.ndim(xi) == 0 and np.ndim(v) == 0 else value


def apply_link(link: LinkSpec, xi, v):
    """Representer value at branch ``xi`` and index ``v``."""
    xi, v = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(v, dtype=float))
    pos = xi > 0.5
    with np.errstate(over="ignore"):
        if link.kind == RAW:
            val = v.copy()
        elif link.kind == LINEAR_SQ:
            val = 0.5 * v + link.c
        elif link.kind == LOG_BRANCH:
            val = np.where(pos, link.c + np.exp(v), -(link.c + np.exp(-v)))
        elif link.kind == POWER_BRANCH:
            mag = _power_base(link, xi, v) ** (1.0 / link.delta)
            val = np.where(pos, link.c + mag, -(link.c + mag))
        elif link.kind == EXPONENTIAL:
            val = np.exp(v)
        else:
            val = np.where(pos, 1.0 + np.exp(-v), -(1.0 + np.exp(v)))
    return _out(val, xi, v)


def link_deriv(link: LinkSpec, xi, v):
    """Derivative of :func:`apply_link` with respect to ``v``."""
    xi, v = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(v, dtype=float))
    pos = xi > 0.5
    with np.errstate(over="ignore"):
        if link.kind == RAW:
            val = np.ones(v.shape)
        elif link.kind == LINEAR_SQ:
            val = np.full(v.shape, 0.5)
        elif link.kind == LOG_BRANCH:
            val = np.exp(np.where(pos, v, -v))
        elif link.kind == POWER_BRANCH:
            base = _power_base(link, xi, v)
            val = base ** (1.0 / link.delta - 1.0) / (1.0 + link.delta)
        elif link.kind == EXPONENTIAL:
            val = np.exp(v)
        else:
            val = -np.exp(np.where(pos, -v, v))
    return _out(val, xi, v)


def link_deriv2(link: LinkSpec, xi, v):
    """Second derivative of :func:`apply_link` with respect to ``v``."""
    xi, v = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(v, dtype=float))
    pos = xi > 0.5
    sign = np.where(pos, 1.0, -1.0)
    with np.errstate(over="ignore"):
        if link.kind in (RAW, LINEAR_SQ):
            val = np.zeros(v.shape)
        elif link.kind == LOG_BRANCH:
            val = sign * np.exp(sign * v)
        elif link.kind == POWER_BRANCH:
            d = link.delta
            base = _power_base(link, xi, v)
            val = sign * (1.0 / d - 1.0) / (link.k * (1.0 + d)) * base ** (1.0 / d - 2.0)
        elif link.kind == EXPONENTIAL:
            val = np.exp(v)
        else:
            val = sign * np.exp(-sign * v)
    return _out(val, xi, v)


def canonical_pair(loss: LossSpec, branch_rule: str = ALWAYS_POSITIVE) -> LinkSpec:
    """Link for which ``g'`` composed with the link is the identity on both branches.

    Raises
    ------
    NoCanonicalPairError
        For BKL and PU.
    """
    if loss.kind == SQ:
        return LinkSpec(LINEAR_SQ, loss.c, branch_rule=branch_rule)
    if loss.kind == UKL:
        return LinkSpec(LOG_BRANCH, loss.c, branch_rule=branch_rule)
    if loss.kind == BP:
        return LinkSpec(POWER_BRANCH, loss.c, loss.delta, branch_rule=branch_rule)
    raise NoCanonicalPairError(f"{loss.kind} has no canonical link")


def is_canonical(loss: LossSpec, link: LinkSpec) -> bool:
    """Whether ``link`` is the canonical pair of ``loss``."""
    try:
        ref = canonical_pair(loss, link.branch_rule)
    except NoCanonicalPairError:
        return False
    if ref.kind != link.kind or ref.c != link.c:
        return False
    return link.kind != POWER_BRANCH or ref.delta == link.delta
