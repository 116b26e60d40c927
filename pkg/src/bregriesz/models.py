"""Base models: basis expansions, linear and kernel models, and a ReLU network.

Every model exposes the same small interface used by the optimizer:

``value(X)``            model output for each row of ``X``
``jacobian(X)``         ``(n, n_params)`` gradient of the output in the parameters
``vjp(X, c)``           ``jacobian(X).T @ c`` without forming the Jacobian
``partial(X, j)``       derivative of the output in input coordinate ``j``
``params``/``with_params``  flat parameter vector and a copy with new parameters
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np
import scipy.linalg
from numpy.typing import NDArray

from .errors import ConfigError, NonDifferentiableError, SingularSystemError
from .rng import stream

RAW_PLUS_INTERCEPT = "RawPlusIntercept"
POLYNOMIAL = "Polynomial"
GAUSSIAN_RBF = "GaussianRBF"
INDICATOR = "Indicator"
BASIS_KINDS = (RAW_PLUS_INTERCEPT, POLYNOMIAL, GAUSSIAN_RBF, INDICATOR)


# ---------------------------------------------------------------------------
# Bases


@dataclass(frozen=True)
class BasisSpec:
    """A feature map ``phi: R^d -> R^p``.

    Parameters
    ----------
    kind : {"RawPlusIntercept", "Polynomial", "GaussianRBF", "Indicator"}
    degree : int
        Polynomial degree. Degree 2 gives the intercept, the coordinates,
        their squares and all pairwise products.
    centers : array of shape (p, d'), optional
        RBF centers (in the space the basis sees, see ``on_z_only``).
    bandwidth : float
        RBF bandwidth ``sigma`` in ``exp(-|x - c|^2 / (2 sigma^2))``.
    cells : sequence
        Indicator cells. Each is either a callable mapping rows to booleans
        or a dict ``{"lower": [...], "upper": [...]}`` describing the box
        ``lower <= x < upper`` (``None`` entries are unbounded).
    on_z_only : bool
        Drop the treatment coordinate (column 0) before evaluation.
    treatment_split : bool
        Use ``[d * psi(z), (1 - d) * psi(z)]`` where ``psi`` is the basis on
        the covariates. This makes the basis block-diagonal in the treatment.
    """

    kind: str
    degree: int = 1
    centers: Optional[NDArray[np.float64]] = None
    bandwidth: float = 1.0
    cells: Sequence = ()
    on_z_only: bool = False
    treatment_split: bool = False
    input_dim: Optional[int] = None

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ConfigError(f"unknown basis kind {self.kind!r}")
        if self.kind == POLYNOMIAL and self.degree < 0:
            raise ConfigError("polynomial degree must be >= 0")
        if self.kind == GAUSSIAN_RBF:
            if self.centers is None or len(self.centers) == 0:
                raise ConfigError("GaussianRBF requires centers")
            if not self.bandwidth > 0:
                raise ConfigError("RBF bandwidth must be positive")
            centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
            object.__setattr__(self, "centers", centers)
            object.__setattr__(self, "input_dim", centers.shape[1])
        if self.kind == INDICATOR and len(self.cells) == 0:
            raise ConfigError("Indicator basis requires at least one cell")
        object.__setattr__(self, "cells", tuple(self.cells))

    @property
    def uses_covariates_only(self) -> bool:
        return self.on_z_only or self.treatment_split

    def inner_dim(self, d: int) -> int:
        return d - 1 if self.uses_covariates_only else d

    def size(self, d: int) -> int:
        """Output dimension ``p`` for inputs of dimension ``d``."""
        q = _inner_size(self, self.inner_dim(d))
        return 2 * q if self.treatment_split else q

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "on_z_only": self.on_z_only,
               "treatment_split": self.treatment_split}
        if self.kind == POLYNOMIAL:
            out["degree"] = self.degree
        if self.kind == GAUSSIAN_RBF:
            out["centers"] = self.centers.tolist()
            out["bandwidth"] = self.bandwidth
        if self.kind == INDICATOR:
            if any(callable(c) for c in self.cells):
                raise ConfigError("callable indicator cells cannot be serialized")
            out["cells"] = [dict(c) for c in self.cells]
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "BasisSpec":
        centers = d.get("centers")
        return cls(d["kind"], int(d.get("degree", 1)),
                   None if centers is None else np.asarray(centers, dtype=float),
                   float(d.get("bandwidth", 1.0)), tuple(d.get("cells", ())),
                   bool(d.get("on_z_only", False)), bool(d.get("treatment_split", False)))


def _exponents(dim: int, degree: int) -> NDArray[np.int64]:
    rows = [np.zeros(dim, dtype=np.int64)]
    for deg in range(1, degree + 1):
        for combo in itertools.combinations_with_replacement(range(dim), deg):
            e = np.zeros(dim, dtype=np.int64)
            for i in combo:
                e[i] += 1
            rows.append(e)
    return np.array(rows)


def _inner_size(basis: BasisSpec, dim: int) -> int:
    if basis.kind == RAW_PLUS_INTERCEPT:
        return dim + 1
    if basis.kind == POLYNOMIAL:
        return len(_exponents(dim, basis.degree))
    if basis.kind == GAUSSIAN_RBF:
        return basis.centers.shape[0]
    return len(basis.cells)


def _cell_mask(cell, U):
    if callable(cell):
        return np.asarray(cell(U), dtype=bool).reshape(-1)
    lower = cell.get("lower")
    upper = cell.get("upper")
    mask = np.ones(U.shape[0], dtype=bool)
    for j in range(U.shape[1]):
        if lower is not None and lower[j] is not None:
            mask &= U[:, j] >= lower[j]
        if upper is not None and upper[j] is not None:
            mask &= U[:, j] < upper[j]
    return mask


def _inner_eval(basis: BasisSpec, U):
    n, dim = U.shape
    if basis.kind == RAW_PLUS_INTERCEPT:
        return np.column_stack([np.ones(n), U])
    if basis.kind == POLYNOMIAL:
        E = _exponents(dim, basis.degree)
        return np.prod(U[:, None, :] ** E[None, :, :], axis=2)
    if basis.kind == GAUSSIAN_RBF:
        if basis.centers.shape[1] != dim:
            raise ValueError("RBF center dimension does not match the input")
        sq = _sq_dists(U, basis.centers)
        return np.exp(-sq / (2.0 * basis.bandwidth**2))
    return np.column_stack([_cell_mask(c, U) for c in basis.cells]).astype(float)


def _inner_partial(basis: BasisSpec, U, j):
    n, dim = U.shape
    if basis.kind == RAW_PLUS_INTERCEPT:
        out = np.zeros((n, dim + 1))
        out[:, j + 1] = 1.0
        return out
    if basis.kind == POLYNOMIAL:
        E = _exponents(dim, basis.degree)
        coef = E[:, j].astype(float)
        E2 = E.copy()
        E2[:, j] = np.maximum(E2[:, j] - 1, 0)
        return coef[None, :] * np.prod(U[:, None, :] ** E2[None, :, :], axis=2)
    if basis.kind == GAUSSIAN_RBF:
        phi = _inner_eval(basis, U)
        diff = U[:, j][:, None] - basis.centers[:, j][None, :]
        return -diff / basis.bandwidth**2 * phi
    raise NonDifferentiableError("Indicator basis is not differentiable")


def _sq_dists(A, B):
    sq = (A**2).sum(1)[:, None] + (B**2).sum(1)[None, :] - 2.0 * A @ B.T
    return np.maximum(sq, 0.0)


def _as_rows(x):
    X = np.asarray(x, dtype=float)
    return X.reshape(1, -1) if X.ndim == 1 else X


def basis_eval(basis: BasisSpec, x) -> NDArray[np.float64]:
    """Evaluate ``phi`` at a vector (returns ``(p,)``) or at rows (``(n, p)``)."""
    X = _as_rows(x)
    if basis.input_dim is not None and basis.inner_dim(X.shape[1]) != basis.input_dim:
        raise ValueError(f"input dimension {X.shape[1]} does not match the basis")
    if basis.uses_covariates_only:
        if X.shape[1] < 2:
            raise ValueError("basis on covariates needs at least two columns")
        psi = _inner_eval(basis, X[:, 1:])
        if basis.treatment_split:
            d = X[:, :1]
            out = np.hstack([d * psi, (1.0 - d) * psi])
        else:
            out = psi
    else:
        out = _inner_eval(basis, X)
    return out[0] if np.ndim(x) == 1 else out


def basis_partial(basis: BasisSpec, x, j: int) -> NDArray[np.float64]:
    """Analytic ``d phi / d x_j`` at a vector or at rows.

    Raises
    ------
    NonDifferentiableError
        For the Indicator basis.
    """
    if basis.kind == INDICATOR:
        raise NonDifferentiableError("Indicator basis is not differentiable")
    X = _as_rows(x)
    if not 0 <= j < X.shape[1]:
        raise ValueError(f"coordinate {j} out of range")
    if basis.uses_covariates_only:
        U = X[:, 1:]
        if basis.treatment_split:
            d = X[:, :1]
            if j == 0:
                psi = _inner_eval(basis, U)
                out = np.hstack([psi, -psi])
            else:
                dpsi = _inner_partial(basis, U, j - 1)
                out = np.hstack([d * dpsi, (1.0 - d) * dpsi])
        elif j == 0:
            out = np.zeros((X.shape[0], _inner_size(basis, U.shape[1])))
        else:
            out = _inner_partial(basis, U, j - 1)
    else:
        out = _inner_partial(basis, X, j)
    return out[0] if np.ndim(x) == 1 else out


def median_bandwidth(X) -> float:
    """Median pairwise Euclidean distance among the rows of ``X``."""
    X = _as_rows(X)
    d = np.sqrt(_sq_dists(X, X))
    iu = np.triu_indices(X.shape[0], k=1)
    med = float(np.median(d[iu])) if iu[0].size else 1.0
    return med if med > 0 else 1.0


# ---------------------------------------------------------------------------
# Models


@dataclass(frozen=True)
class LinearModel:
    """``f(x) = phi(x)' beta``."""

    basis: BasisSpec
    beta: NDArray[np.float64]

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float).reshape(-1))

    @classmethod
    def zeros(cls, basis: BasisSpec, d: int) -> "LinearModel":
        return cls(basis, np.zeros(basis.size(d)))

    @property
    def params(self):
        return self.beta

    @property
    def n_params(self) -> int:
        return self.beta.size

    def with_params(self, theta) -> "LinearModel":
        return replace(self, beta=np.array(theta, dtype=float))

    def features(self, X):
        Phi = basis_eval(self.basis, _as_rows(X))
        if Phi.shape[1] != self.beta.size:
            raise ValueError(f"basis size {Phi.shape[1]} != parameter length {self.beta.size}")
        return Phi

    def value(self, X):
        return self.features(X) @ self.beta

    __call__ = value

    def jacobian(self, X):
        return self.features(X)

    def vjp(self, X, c):
        return self.features(X).T @ c

    def partial(self, X, j):
        return basis_partial(self.basis, _as_rows(X), j) @ self.beta

    def partial_jacobian(self, X, j):
        return basis_partial(self.basis, _as_rows(X), j)

    def to_dict(self) -> dict:
        return {"type": "linear", "basis": self.basis.to_dict(), "beta": self.beta.tolist()}


@dataclass(frozen=True)
class KernelModel(LinearModel):
    """Gaussian-kernel expansion ``f(x) = sum_k coef_k k(x, center_k)``.

    The RKHS penalty is ``coef' K coef`` with ``K`` the Gram matrix of the
    centers. ``ridge`` is the default penalty weight used by
    :meth:`fit_ridge`.
    """

    ridge: float = 0.0

    @classmethod
    def from_data(cls, X, *, n_centers: int = 100, seed: int = 0, bandwidth=None,
                  bandwidth_scale: float = 1.0, on_z_only: bool = False,
                  ridge: float = 0.0) -> "KernelModel":
        """Pick ``n_centers`` rows of ``X`` at random as centers.

        The bandwidth defaults to ``bandwidth_scale`` times the median
        pairwise distance among the centers.
        """
        X = _as_rows(X)
        U = X[:, 1:] if on_z_only else X
        k = min(n_centers, U.shape[0])
        idx = np.sort(stream(seed, "kernel-centers").choice(U.shape[0], size=k, replace=False))
        centers = U[idx]
        bw = median_bandwidth(centers) * bandwidth_scale if bandwidth is None else float(bandwidth)
        basis = BasisSpec(GAUSSIAN_RBF, centers=centers, bandwidth=bw, on_z_only=on_z_only)
        return cls(basis, np.zeros(k), ridge)

    @property
    def alpha_coefs(self):
        return self.beta

    def gram(self):
        c = self.basis.centers
        return np.exp(-_sq_dists(c, c) / (2.0 * self.basis.bandwidth**2))

    def fit_ridge(self, data, ridge=None) -> "KernelModel":
        """Kernel ridge regression of ``data.y`` on the kernel features."""
        lam = self.ridge if ridge is None else ridge
        K = self.features(data.X)
        A = K.T @ K + lam * data.n * self.gram()
        coef = _spd_solve(A, K.T @ data.y, lam)
        return replace(self, beta=coef)

    def to_dict(self) -> dict:
        out = super().to_dict()
        out.update(type="kernel", ridge=self.ridge)
        return out


def _relu(t):
    return np.maximum(t, 0.0)


@dataclass(frozen=True)
class MlpModel:
    """Fully connected ReLU network with a scalar identity output.

    Parameters
    ----------
    widths : tuple of int
        ``(d_in, hidden_1, ..., hidden_L, 1)``.
    weights : list of arrays
        ``weights[l]`` has shape ``(widths[l + 1], widths[l])``.
    biases : list of arrays
    on_z_only : bool
        Drop the treatment column before the first layer.
    """

    widths: tuple
    weights: list
    biases: list
    on_z_only: bool = False

    @classmethod
    def init(cls, d: int, hidden: Sequence[int] = (100,), seed: int = 0,
             on_z_only: bool = False) -> "MlpModel":
        """He-initialized network for ``d``-dimensional regressors."""
        d_in = d - 1 if on_z_only else d
        widths = (d_in, *tuple(int(h) for h in hidden), 1)
        rng = stream(seed, "mlp-init")
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_in), (fan_out, fan_in)))
            biases.append(np.zeros(fan_out))
        return cls(widths, weights, biases, on_z_only)

    @classmethod
    def zeros(cls, d: int, hidden: Sequence[int] = (100,), on_z_only: bool = False):
        m = cls.init(d, hidden, 0, on_z_only)
        return m.with_params(np.zeros(m.n_params))

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    @property
    def params(self):
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in
                               zip(self.weights, self.biases)])

    def with_params(self, theta) -> "MlpModel":
        theta = np.asarray(theta, dtype=float)
        weights, biases, pos = [], [], 0
        for W, b in zip(self.weights, self.biases):
            weights.append(theta[pos:pos + W.size].reshape(W.shape))
            pos += W.size
            biases.append(theta[pos:pos + b.size].copy())
            pos += b.size
        return replace(self, weights=weights, biases=biases)

    def scale_output(self, factor: float) -> "MlpModel":
        weights = list(self.weights)
        biases = list(self.biases)
        weights[-1] = weights[-1] * factor
        biases[-1] = biases[-1] * factor
        return replace(self, weights=weights, biases=biases)

    def _input(self, X):
        X = _as_rows(X)
        U = X[:, 1:] if self.on_z_only else X
        if U.shape[1] != self.widths[0]:
            raise ValueError(f"input dimension {U.shape[1]} != {self.widths[0]}")
        return U

    def _forward(self, X):
        acts = [self._input(X)]
        pre = []
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            z = acts[-1] @ W.T + b
            pre.append(z)
            acts.append(_relu(z))
        out = acts[-1] @ self.weights[-1].T + self.biases[-1]
        return out[:, 0], acts, pre

    def value(self, X):
        return self._forward(X)[0]

    __call__ = value

    def jacobian(self, X):
        _, acts, pre = self._forward(X)
        n = acts[0].shape[0]
        delta = np.ones((n, 1))
        blocks = []
        for layer in range(len(self.weights) - 1, -1, -1):
            a = acts[layer]
            gW = (delta[:, :, None] * a[:, None, :]).reshape(n, -1)
            blocks.append((gW, delta))
            if layer > 0:
                delta = (delta @ self.weights[layer]) * (pre[layer - 1] > 0)
        cols = []
        for gW, gb in reversed(blocks):
            cols.extend([gW, gb])
        return np.hstack(cols)

    def vjp(self, X, c):
        _, acts, pre = self._forward(X)
        delta = np.asarray(c, dtype=float).reshape(-1, 1)
        grads = []
        for layer in range(len(self.weights) - 1, -1, -1):
            grads.append((delta.T @ acts[layer], delta.sum(0)))
            if layer > 0:
                delta = (delta @ self.weights[layer]) * (pre[layer - 1] > 0)
        return np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in reversed(grads)])

    def partial(self, X, j):
        X = _as_rows(X)
        if self.on_z_only:
            if j == 0:
                return np.zeros(X.shape[0])
            j = j - 1
        _, acts, pre = self._forward(X)
        if not pre:
            return np.full(X.shape[0], self.weights[0][0, j])
        t = self.weights[0][:, j][None, :] * (pre[0] > 0)
        for layer in range(1, len(self.weights) - 1):
            t = (t @ self.weights[layer].T) * (pre[layer] > 0)
        return (t @ self.weights[-1].T)[:, 0]

    def partial_jacobian(self, X, j):
        raise NonDifferentiableError(
            "parameter gradients of input derivatives are not available for the MLP")

    def to_dict(self) -> dict:
        return {"type": "mlp", "widths": list(self.widths), "on_z_only": self.on_z_only,
                "weights": [W.tolist() for W in self.weights],
                "biases": [b.tolist() for b in self.biases]}


def model_eval(model, x):
    """Model output at a vector (scalar) or at rows (array)."""
    out = model.value(_as_rows(x))
    return float(out[0]) if np.ndim(x) == 1 else out


def model_param_grad(model, x):
    """Parameter gradient at a vector (``(P,)``) or at rows (``(n, P)``)."""
    out = model.jacobian(_as_rows(x))
    return out[0] if np.ndim(x) == 1 else out


def model_to_dict(model) -> dict:
    return model.to_dict()


def model_from_dict(d: dict):
    """Inverse of :func:`model_to_dict`."""
    kind = d["type"]
    if kind in ("linear", "kernel"):
        basis = BasisSpec.from_dict(d["basis"])
        if kind == "kernel":
            return KernelModel(basis, np.asarray(d["beta"]), float(d.get("ridge", 0.0)))
        return LinearModel(basis, np.asarray(d["beta"]))
    if kind == "mlp":
        return MlpModel(tuple(d["widths"]), [np.asarray(W, dtype=float) for W in d["weights"]],
                        [np.asarray(b, dtype=float) for b in d["biases"]],
                        bool(d.get("on_z_only", False)))
    raise ConfigError(f"unknown model type {kind!r}")


# ---------------------------------------------------------------------------
# Least squares


def _spd_solve(A, b, ridge):
    try:
        factor = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError(
            "normal equations are not positive definite; use ridge > 0") from exc
    if ridge == 0:
        diag = np.abs(np.diag(factor[0]))
        if diag.min() <= 1e-10 * max(diag.max(), 1.0):
            raise SingularSystemError("normal equations are singular; use ridge > 0")
    return scipy.linalg.cho_solve(factor, b)


def fit_least_squares(basis: BasisSpec, data, ridge: float = 0.0) -> LinearModel:
    """Ridge least squares ``min sum (y - phi' rho)^2 + ridge |rho|^2``.

    Solved through the normal equations with a Cholesky factorization.

    Raises
    ------
    SingularSystemError
        If ``ridge == 0`` and the design is rank deficient.
    """
    if ridge < 0:
        raise ConfigError("ridge must be non-negative")
    Phi = basis_eval(basis, data.X)
    A = Phi.T @ Phi + ridge * np.eye(Phi.shape[1])
    rho = _spd_solve(A, Phi.T @ data.y, ridge)
    return LinearModel(basis, rho)
