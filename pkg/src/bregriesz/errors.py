"""Exception types shared across the package."""


class BregrieszError(Exception):
    """Base class for all package errors."""


class DomainError(BregrieszError, ValueError):
    """A value fell outside (or too close to the boundary of) a valid domain.

    Parameters
    ----------
    kind : str
        Name of the loss or link whose domain was violated.
    value : float
        The offending value.
    boundary : str
        Human-readable description of the admissible region.
    index : int, optional
        Position of the offending observation, when known.
    """

    def __init__(self, kind, value, boundary, index=None):
        self.kind = kind
        self.value = value
        self.boundary = boundary
        self.index = index
        where = "" if index is None else f" at observation {index}"
        super().__init__(f"{kind}: value {value!r}{where} outside domain {boundary}")


class InvalidSizeError(BregrieszError, ValueError):
    """Requested sample size or fold count is not admissible."""


class LayoutError(BregrieszError, ValueError):
    """Dataset layout is incompatible with the requested operation."""


class NoCanonicalPairError(BregrieszError, ValueError):
    """The loss has no link making its derivative linear in the basis index."""


class NonDifferentiableError(BregrieszError, ValueError):
    """An analytic derivative was requested for a non-differentiable basis."""


class SingularSystemError(BregrieszError, ValueError):
    """Normal equations are singular; a positive ridge is needed."""


class InitializationError(BregrieszError, ValueError):
    """No feasible starting point for the optimizer."""


class DegenerateFluctuationError(BregrieszError, ValueError):
    """The targeting step is undefined because the representer is identically zero."""


class ConfigError(BregrieszError, ValueError):
    """A configuration value failed validation."""


class FoldError(BregrieszError):
    """A nuisance fit failed inside a cross-fitting fold.

    ``fold`` is the zero-based fold index and ``__cause__`` the original error.
    """

    def __init__(self, fold, cause):
        self.fold = fold
        super().__init__(f"fold {fold}: {type(cause).__name__}: {cause}")
