"""Exception hierarchy shared across the package."""


class SolverError(Exception):
    """Base class for all package-specific errors."""


class InvalidArgument(SolverError, ValueError):
    """An argument violates a documented precondition (bad mesh, bad exponent, ...)."""


class NumericFailure(SolverError):
    """A numerical routine did not reach its requested tolerance."""

    def __init__(self, message, achieved_tol=None):
        super().__init__(message)
        self.achieved_tol = achieved_tol


class HypothesisViolation(SolverError):
    """Sampled certification found no admissible structural constant."""


class DomainViolation(SolverError, ValueError):
    """Evaluation outside the mathematical domain (e.g. singular term at s <= 0)."""


class ConstructionFailure(SolverError):
    """The subsolution construction ran out of admissible cap levels."""


class DegenerateSubsolution(SolverError):
    """Constructed subsolution has no usable positivity margin."""


class StagnationError(SolverError):
    """Energy descent made no progress over many consecutive line searches."""


class TruncationConsistencyError(SolverError):
    """A frozen-gradient solve landed below the subsolution beyond tolerance."""


class RefusedInstance(SolverError):
    """Small-data conditions fail and no override was requested."""


class PreconditionViolation(SolverError, ValueError):
    """Caller-supplied inputs do not satisfy an operation's stated precondition."""

    def __init__(self, message, details=None):
        super().__init__(message)
        self.details = details


class UnsupportedProblem(SolverError):
    """Requested analysis is outside the supported regime (e.g. uniqueness for p != 2)."""


class InternalConsistencyError(SolverError):
    """A closed-form envelope failed its own sampling validation."""


class InnerSolveFailure(SolverError):
    """A member solve of a multi-start batch failed; partial results attached."""

    def __init__(self, message, partial=None):
        super().__init__(message)
        self.partial = partial if partial is not None else []


class ConfigError(SolverError, ValueError):
    """Malformed run configuration; ``path`` names the offending JSON entry."""

    def __init__(self, message, path=""):
        super().__init__(f"{path}: {message}" if path else message)
        self.path = path
