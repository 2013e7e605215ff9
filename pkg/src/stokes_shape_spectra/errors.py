"""Exception types shared across the package."""


class StokesSpectraError(Exception):
    """Base class for all package errors."""


class ConfigError(StokesSpectraError):
    """Invalid run configuration (exit code 2 in the CLI)."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SolverError(StokesSpectraError):
    """Eigenvalue solver failure (exit code 3 in the CLI)."""


class ValidationError(StokesSpectraError):
    """A validation stage failed (exit code 4 in the CLI)."""


class SingularPoint(StokesSpectraError):
    """Kernel evaluated at (numerically) zero separation."""


class CoincidentPoints(StokesSpectraError):
    """Series coefficients requested at x == y."""


class OrderTooHigh(StokesSpectraError):
    """Requested expansion order exceeds the engine order."""


class DeltaOutOfRange(StokesSpectraError):
    """Perturbation amplitude outside the injectivity budget."""


class SingularAssemblyFailure(StokesSpectraError):
    """Near-field correction patch could not be built."""


class TooCloseToBoundary(StokesSpectraError):
    """Potential evaluation requested too close to the surface."""


class NoDipInBracket(SolverError):
    """Bracketed minimization found no interior sigma_min dip."""


class MultipleDips(SolverError):
    """Bracket contains more than one sigma_min dip."""


class ContourThroughEigenvalue(StokesSpectraError):
    """An eigenvalue lies too close to the contour circle."""


class FactorizationFailure(StokesSpectraError):
    """Dense LU factorization failed during a contour sweep."""


class NonIntegerWinding(StokesSpectraError):
    """Winding number did not round cleanly to an integer."""


class GaugeAlignmentFailure(StokesSpectraError):
    """Eigenfunction cluster could not be phase/rotation aligned."""


class PathLeavesDomain(StokesSpectraError):
    """Pressure integration path exits the domain."""


class BracketFailure(StokesSpectraError):
    """Bessel-zero bracketing failed."""


class DegenerateData(StokesSpectraError):
    """Order fit received zero residuals (order infinity, passes)."""
