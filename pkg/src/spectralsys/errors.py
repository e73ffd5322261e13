"""Exception and warning types raised across the package."""


class SpectralSysError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(SpectralSysError, ValueError):
    pass


class NotHermitian(SpectralSysError, ValueError):
    pass


class NotUnitary(SpectralSysError, ValueError):
    pass


class NotSpecialUnitary(NotUnitary):
    pass


class DegenerateEigenvalue(SpectralSysError, ArithmeticError):
    pass


class EllipticityViolated(SpectralSysError, ArithmeticError):
    pass


class StepUnderflow(SpectralSysError, ArithmeticError):
    pass


class LinearlyDependentFrame(SpectralSysError, ValueError):
    pass


class InconsistentOrientation(SpectralSysError, ValueError):
    pass


class NotTraceFree(SpectralSysError, ValueError):
    pass


class NotPositiveDefinite(SpectralSysError, ValueError):
    pass


class NotOrthonormal(SpectralSysError, ValueError):
    pass


class SingularSystem(SpectralSysError, ArithmeticError):
    pass


class AssumptionViolated(SpectralSysError, ValueError):
    pass


class TruncationTooSmall(SpectralSysError, ValueError):
    pass


class ConvergenceFailure(SpectralSysError, ArithmeticError):
    pass


class UnsupportedFamily(SpectralSysError, ValueError):
    pass


class SchemaError(SpectralSysError, ValueError):
    """Invalid JSON input; ``pointer`` locates the offending node."""

    def __init__(self, message, pointer=""):
        super().__init__(f"{pointer or '/'}: {message}")
        self.pointer = pointer


class OutsideTrustWindow(UserWarning):
    """A spectral query reached beyond the reliable part of a truncated spectrum."""
