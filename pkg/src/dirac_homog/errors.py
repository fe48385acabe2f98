"""Exception hierarchy shared by all stages."""


class DiracHomogError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(DiracHomogError, ValueError):
    """Bad input detected before any numerical work starts."""


class NumericalCheckError(DiracHomogError):
    """A computed quantity failed a quantitative check."""


class SolverError(DiracHomogError):
    """An iterative or spectral solver did not deliver."""


# torus_core / cell_problems
class NonZeroMean(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class ZeroBeta(ValidationError):
    pass


class ExpressionError(ValidationError):
    pass


# effective_medium / bulk_analysis
class DegenerateMass(NumericalCheckError):
    pass


class NoGap(NumericalCheckError):
    pass


class NoCommonGap(NumericalCheckError):
    pass


class NotQuantized(NumericalCheckError):
    def __init__(self, raw, message=None):
        self.raw = raw
        super().__init__(message or f"Chern integral {raw!r} is not within tolerance of an integer")


# interface_spectra
class WallOutOfDomain(ValidationError):
    pass


class InsufficientResolution(ValidationError):
    pass


class UnresolvedCrossing(NumericalCheckError):
    pass


class IncompleteSupport(NumericalCheckError):
    pass


class BoxTooSmall(NumericalCheckError):
    pass


# homogenization_bench
class IncommensurateEpsilon(ValidationError):
    pass


class NoConvergence(SolverError):
    def __init__(self, iterations, residual):
        self.iterations = iterations
        self.residual = residual
        super().__init__(f"no convergence after {iterations} iterations (relative residual {residual:.3e})")


class SlopeBelowThreshold(NumericalCheckError):
    pass


# cli_runner
class SchemaError(ValidationError):
    def __init__(self, path, message):
        self.path = path
        super().__init__(f"{path}: {message}")


class ConstraintError(ValidationError):
    pass
