"""Exception hierarchy shared by all modules."""


class StochMatchError(Exception):
    """Base class for every error raised by the package."""


class InvalidParameterError(StochMatchError, ValueError):
    pass


class ValidationError(StochMatchError, ValueError):
    """Raised when an instance fails `validate`; carries the violation list."""

    def __init__(self, violations):
        self.violations = list(violations)
        super().__init__("invalid instance: " + "; ".join(self.violations))


class InfeasibleSolutionError(StochMatchError, ValueError):
    """A fractional solution violates the LP it is supposed to satisfy."""

    def __init__(self, message, violations=()):
        self.violations = list(violations)
        super().__init__(message)


class SolverError(StochMatchError, RuntimeError):
    def __init__(self, message, iterations=None, phase=None):
        self.iterations = iterations
        self.phase = phase
        super().__init__(f"{message} (phase={phase}, iterations={iterations})")


class ResourceError(StochMatchError, RuntimeError):
    """The requested exact computation exceeds the configured state-space caps."""
