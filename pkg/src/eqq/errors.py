"""Exception types. Each carries a short machine-readable ``code``."""


class EqqError(Exception):
    code = "error"


class ValidationError(EqqError):
    code = "validation"


class EmptyMeasure(EqqError):
    code = "empty_measure"


class TailTooHeavy(EqqError):
    code = "tail_too_heavy"


class DimensionMismatch(EqqError):
    code = "dimension_mismatch"


class SolverLimitExceeded(EqqError):
    code = "solver_limit_exceeded"


class SolverError(EqqError):
    """Internal solver failure (residuals out of tolerance, pivot limit hit)."""

    code = "solver_error"


class TooLarge(EqqError):
    code = "too_large"


class OutOfDomain(EqqError):
    code = "out_of_domain"


class TooCoarse(EqqError):
    code = "too_coarse"


class InsufficientMass(EqqError):
    code = "insufficient_mass"


class ExponentOutOfRange(EqqError):
    code = "exponent_out_of_range"


class EmptySweep(EqqError):
    code = "empty_sweep"


class DegenerateFit(EqqError):
    code = "degenerate_fit"
