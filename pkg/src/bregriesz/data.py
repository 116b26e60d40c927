"""Observation containers and synthetic data-generating processes."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.typing import NDArray

from .errors import InvalidSizeError, LayoutError
from .rng import stream

GENERIC = "Generic"
TREATMENT_FIRST = "TreatmentFirst"
LAYOUTS = (GENERIC, TREATMENT_FIRST)

# Positivity clamp applied to generated propensities.
PROPENSITY_CLAMP = 1e-4
ATE_EFFECT = 5.0
COEF_VARIANCE = 0.5
MIN_SIZE = 10


@dataclass(frozen=True)
class Observation:
    """A single observation ``W = (X, Y)``."""

    x: NDArray[np.float64]
    y: float


@dataclass(frozen=True)
class AteView:
    """Treatment/covariate split ``X = (D, Z)`` of a regressor vector."""

    d_treat: int
    z: NDArray[np.float64]


@dataclass(frozen=True)
class Dataset:
    """Immutable sample of observations.

    Parameters
    ----------
    X : ndarray of shape (n, d)
        Regressors. Under the ``TreatmentFirst`` layout column 0 holds the
        binary treatment and the remaining columns the covariates.
    y : ndarray of shape (n,)
        Outcomes.
    layout : {"Generic", "TreatmentFirst"}
    target : ndarray of shape (m, d), optional
        Draws from the target covariate distribution (covariate shift).
    """

    X: NDArray[np.float64]
    y: NDArray[np.float64]
    layout: str = GENERIC
    target: Optional[NDArray[np.float64]] = None

    def __post_init__(self):
        X = np.array(self.X, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        y = np.array(self.y, dtype=float).reshape(-1)
        if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
            raise InvalidSizeError("dataset must be nonempty with d >= 1")
        if y.shape[0] != X.shape[0]:
            raise InvalidSizeError("X and y lengths differ")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        if self.layout not in LAYOUTS:
            raise LayoutError(f"unknown layout {self.layout!r}")
        if self.layout == TREATMENT_FIRST and not np.all(np.isin(X[:, 0], (0.0, 1.0))):
            raise LayoutError("TreatmentFirst layout requires a binary first column")
        target = self.target
        if target is not None:
            target = np.array(target, dtype=float)
            if target.ndim == 1:
                target = target[:, None]
            if target.shape[1] != X.shape[1] or target.shape[0] == 0:
                raise InvalidSizeError("target sample dimension mismatch")
            target.setflags(write=False)
        X.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "target", target)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def observations(self) -> list[Observation]:
        return [Observation(x, float(y)) for x, y in zip(self.X, self.y)]

    @property
    def treatment(self) -> NDArray[np.float64]:
        self.require_treatment()
        return self.X[:, 0]

    @property
    def covariates(self) -> NDArray[np.float64]:
        self.require_treatment()
        return self.X[:, 1:]

    def ate_view(self, i: int) -> AteView:
        self.require_treatment()
        return AteView(int(self.X[i, 0]), self.X[i, 1:])

    def require_treatment(self):
        if self.layout != TREATMENT_FIRST:
            raise LayoutError("operation requires the TreatmentFirst layout")

    def subset(self, index, target_index=None) -> "Dataset":
        """Rows ``index`` of the sample; optionally rows of the target sample too."""
        target = self.target
        if target is not None and target_index is not None:
            target = target[target_index]
        return Dataset(self.X[index], self.y[index], self.layout, target)


@dataclass(frozen=True)
class OracleNuisance:
    """True nuisance functions of a synthetic design.

    ``propensity`` takes covariates ``z`` (rows); the other two take full
    regressors ``x``. All are vectorized over rows.
    """

    propensity: Optional[Callable[[NDArray], NDArray]]
    outcome_regression: Callable[[NDArray], NDArray]
    representer: Callable[[NDArray], NDArray]
    theta_true: float
    info: dict = field(default_factory=dict)


def _sigmoid(t):
    return 0.5 * (1.0 + np.tanh(0.5 * t))


def _check_size(n, name="n"):
    if int(n) < MIN_SIZE:
        raise InvalidSizeError(f"{name} must be at least {MIN_SIZE}, got {n}")


def gen_synthetic_ate(seed: int, n: int, *, design_seed: Optional[int] = None):
    """Draw the three-covariate binary-treatment design with effect 5.

    The propensity is logistic in a quadratic index of ``Z ~ N(0, I_3)``:
    linear terms, squares and the three pairwise interactions, clamped to
    ``[1e-4, 1 - 1e-4]``. The outcome is
    ``1 + (Z'a~)^2 + sigmoid(sum_j b~_j Z_j^2) + 5 D + eps`` with standard
    normal noise. All coefficients are ``N(0, 0.5)`` (variance 0.5).

    Parameters
    ----------
    seed : int
        Seed for the sample draws.
    n : int
        Sample size, at least 10.
    design_seed : int, optional
        Seed for the coefficient draws. Defaults to ``seed``; fixing it while
        varying ``seed`` gives Monte Carlo replications of one design.

    Returns
    -------
    Dataset, OracleNuisance
    """
    _check_size(n)
    coef_rng = stream(seed if design_seed is None else design_seed, "ate-coefficients")
    sd = np.sqrt(COEF_VARIANCE)
    lin, quad, inter, out_lin, out_sq = (coef_rng.normal(0.0, sd, 3) for _ in range(5))

    def index(z):
        z = np.atleast_2d(z)
        return (z @ lin + (z**2) @ quad + inter[0] * z[:, 0] * z[:, 1]
                + inter[1] * z[:, 1] * z[:, 2] + inter[2] * z[:, 0] * z[:, 2])

    def propensity(z):
        return np.clip(_sigmoid(index(z)), PROPENSITY_CLAMP, 1.0 - PROPENSITY_CLAMP)

    def outcome_regression(x):
        x = np.atleast_2d(x)
        z = x[:, 1:]
        return 1.0 + (z @ out_lin) ** 2 + _sigmoid((z**2) @ out_sq) + ATE_EFFECT * x[:, 0]

    def representer(x):
        x = np.atleast_2d(x)
        e = propensity(x[:, 1:])
        d = x[:, 0]
        return d / e - (1.0 - d) / (1.0 - e)

    rng = stream(seed, "ate-sample")
    z = rng.standard_normal((n, 3))
    u = rng.random(n)
    noise = rng.standard_normal(n)
    d = (u < propensity(z)).astype(float)
    X = np.column_stack([d, z])
    y = outcome_regression(X) + noise
    oracle = OracleNuisance(
        propensity, outcome_regression, representer, ATE_EFFECT,
        info={"propensity_linear": lin, "propensity_square": quad,
              "propensity_interaction": inter, "outcome_linear": out_lin,
              "outcome_square": out_sq},
    )
    return Dataset(X, y, TREATMENT_FIRST), oracle


def shift_outcome_regression(x):
    """Fixed quadratic regression used by the covariate-shift design."""
    x = np.atleast_2d(x)
    return 1.0 + x.sum(axis=1) + 0.5 * (x**2).sum(axis=1)


def gen_covariate_shift(seed: int, n_source: int, n_target: int, *, dim: int = 3,
                        shift: float = 0.5):
    """Draw a Gaussian mean-shift covariate-shift design.

    Source ``X ~ N(0, I_d)`` with outcomes ``Y = gamma(X) + eps``; target
    ``X~ ~ N(mu, I_d)`` with ``mu = shift * 1``. The density ratio is
    ``exp(mu'x - |mu|^2 / 2)`` and the target mean of ``gamma`` is known in
    closed form. ``shift=0`` gives identical distributions (ratio 1).
    """
    _check_size(n_source, "n_source")
    _check_size(n_target, "n_target")
    mu = np.full(dim, float(shift))
    rng = stream(seed, "shift-sample")
    X = rng.standard_normal((n_source, dim))
    noise = rng.standard_normal(n_source)
    target = mu + rng.standard_normal((n_target, dim))
    y = shift_outcome_regression(X) + noise

    def representer(x):
        x = np.atleast_2d(x)
        return np.exp(x @ mu - 0.5 * mu @ mu)

    theta = 1.0 + mu.sum() + 0.5 * (mu @ mu + dim)
    oracle = OracleNuisance(None, shift_outcome_regression, representer, float(theta),
                            info={"mean_shift": mu})
    return Dataset(X, y, GENERIC, target), oracle


def split_folds(data: Dataset | int, k: int, seed: int):
    """Partition observation indices into ``k`` folds.

    Parameters
    ----------
    data : Dataset or int
        The dataset (or its size).
    k : int
        Number of folds, ``2 <= k <= n``.
    seed : int

    Returns
    -------
    list of (train_index, eval_index)
        Sorted index arrays. Fold sizes differ by at most one.
    """
    n = data if isinstance(data, (int, np.integer)) else data.n
    if k < 2 or k > n:
        raise InvalidSizeError(f"need 2 <= k <= n, got k={k}, n={n}")
    perm = stream(seed, "folds").permutation(n)
    folds = []
    for chunk in np.array_split(perm, k):
        eval_idx = np.sort(chunk)
        mask = np.ones(n, dtype=bool)
        mask[eval_idx] = False
        folds.append((np.flatnonzero(mask), eval_idx))
    return folds


def write_csv(data: Dataset, path_or_buffer=None) -> str:
    """Serialize the source sample as CSV (``y,d,z1..`` or ``y,x1..``)."""
    if data.layout == TREATMENT_FIRST:
        header = ["y", "d"] + [f"z{j}" for j in range(1, data.dim)]
    else:
        header = ["y"] + [f"x{j}" for j in range(1, data.dim + 1)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for xi, yi in zip(data.X, data.y):
        writer.writerow([repr(float(yi))] + [repr(float(v)) for v in xi])
    text = buf.getvalue()
    if path_or_buffer is not None:
        if hasattr(path_or_buffer, "write"):
            path_or_buffer.write(text)
        else:
            with open(path_or_buffer, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
    return text


def read_csv(path, target_path=None) -> Dataset:
    """Load a dataset written by :func:`write_csv`.

    The layout is inferred from the header: a ``d`` column in second position
    means ``TreatmentFirst``. An optional headerless-or-headed target file
    with the same regressor columns supplies the target sample.
    """
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidSizeError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if header[0] != "y" or len(header) < 2:
        raise LayoutError(f"{path}: header must start with 'y'")
    layout = TREATMENT_FIRST if header[1] == "d" else GENERIC
    values = np.array([[float(v) for v in r] for r in rows[1:] if r], dtype=float)
    if values.size == 0:
        raise InvalidSizeError(f"{path}: no data rows")
    target = None
    if target_path is not None:
        with open(target_path, encoding="utf-8", newline="") as fh:
            trows = [r for r in csv.reader(fh) if r]
        if trows and not _is_number(trows[0][0]):
            trows = trows[1:]
        target = np.array([[float(v) for v in r] for r in trows], dtype=float)
    return Dataset(values[:, 1:], values[:, 0], layout, target)


def _is_number(text):
    try:
        float(text)
    except ValueError:
        return False
    return True
