"""Exception hierarchy shared by every gsav module."""


class GSAVError(Exception):
    """Base class for all errors raised by gsav."""


class GridMismatch(GSAVError, ValueError):
    """A field's shape does not match the grid of the spectral context."""


class NonZeroMean(GSAVError, ValueError):
    """Inverse Laplacian requested on a field whose mean is not negligible."""


class SingularMode(GSAVError, ArithmeticError):
    """A diagonal operator symbol is non-positive at some wavenumber."""


class DomainError(GSAVError, ValueError):
    """Argument outside the domain of a forward G transform."""


class GRangeError(GSAVError, ValueError):
    """Argument outside the range of G, so G^{-1} is undefined."""


class SingularDerivative(GSAVError, ArithmeticError):
    """(G^{-1})' is unbounded at the requested point."""


class OutOfDomain(GSAVError, ValueError):
    """Field samples leave the admissible set of a potential."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class Diverged(GSAVError, ArithmeticError):
    """Newton iteration (and its fallback) failed to reach tolerance."""

    def __init__(self, message, best_x=None, best_residual=None, iterations=0):
        super().__init__(message)
        self.best_x = best_x
        self.best_residual = best_residual
        self.iterations = iterations


# Name used by the steppers.
NewtonDiverged = Diverged


class JacobianSingular(GSAVError, ArithmeticError):
    """Dense Jacobian could not be factorised."""


class DenominatorNearZero(GSAVError, ArithmeticError):
    """G of the extrapolated bulk energy vanishes while F' does not."""


class MissingHistory(GSAVError, ValueError):
    """A two-level operation was requested before two levels exist."""


class InsufficientSamples(GSAVError, ValueError):
    """Too few samples in the requested fitting window."""


class UnsupportedModel(GSAVError, ValueError):
    """Operation is not defined for the given model."""


class StallError(GSAVError, RuntimeError):
    """Adaptive stepping keeps rejecting at the minimum step size."""


class ConfigError(GSAVError, ValueError):
    """Invalid or inconsistent run configuration."""


class RunFailed(GSAVError, RuntimeError):
    """A stepper error surfaced during a run, tagged with the step index."""

    def __init__(self, message, step=None, cause=None):
        super().__init__(message)
        self.step = step
        self.cause = cause
