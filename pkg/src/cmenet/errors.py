"""Exception types shared across the package."""


class CmenetError(Exception):
    """Base class for all package errors."""


class InvalidParams(CmenetError):
    """Penalty or solver parameters violate their constraints."""


class DimensionMismatch(CmenetError):
    """Array shapes are inconsistent with the design."""


class DataError(CmenetError):
    """Malformed input data (CSV parse or coding problems)."""


class ConstantColumn(CmenetError):
    """A raw design column has zero variance.

    Carries the canonical effect name that triggered the rejection.
    """

    def __init__(self, effect_name, message=None):
        self.effect_name = effect_name
        super().__init__(message or f"constant raw column for effect {effect_name!r}")


class IndexOutOfRange(CmenetError):
    """A factor index lies outside 1..p."""


class NonConvergence(CmenetError):
    """Solver hit max_sweeps; the partial state is attached."""

    def __init__(self, state, message="coordinate descent did not converge"):
        self.state = state
        super().__init__(message)


class MissingPredecessor(CmenetError):
    """Screening was asked for a grid point with no solved neighbor."""


class DegenerateResponse(CmenetError):
    """The response vector is constant; no grid can be built."""


class AllFitsFailed(CmenetError):
    """No grid point produced a converged fit during cross-validation."""


class InvalidRho(CmenetError):
    """Latent correlation outside [0, 1)."""


class ModelNotRealizable(CmenetError):
    """The requested true model does not fit in the given design."""


class SingularBlock(CmenetError):
    """The active block of the correlation matrix is not invertible."""
