"""Exception types shared across the package."""


class TfemError(Exception):
    """Base class for all library errors."""


class InvalidArgumentError(TfemError, ValueError):
    pass


class DomainError(TfemError, ValueError):
    """Point outside the reference simplex."""


class CapabilityError(TfemError, NotImplementedError):
    """Requested feature (e.g. quadrature degree) is not available."""


class MeshMismatchError(TfemError, ValueError):
    """Two meshes do not share the requested interface."""


class MshParseError(TfemError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NotDegenerateError(TfemError, ValueError):
    """Operation requires a zero-measure band."""


class DegenerateShapeError(TfemError, ValueError):
    """Closed forms undefined for a flat triangle."""


class ConfigurationError(TfemError, ValueError):
    pass


class SolverError(TfemError, RuntimeError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, message, best_residual, iters):
        self.best_residual = best_residual
        self.iters = iters
        super().__init__(f"{message} (best residual {best_residual:.3e} after {iters} iterations)")


class SingularMatrixError(SolverError):
    pass
