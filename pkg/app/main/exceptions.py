"""
Runtime failures shared by all apps.

Parameter validation at construction time uses
django.core.exceptions.ValidationError; the classes here cover what can go
wrong once valid objects are being computed with.
"""


class FGLError(Exception):
    """Base class for numerical failures."""


class DomainError(FGLError, ValueError):
    """An operation was evaluated outside its domain."""


class GridMismatchError(FGLError, ValueError):
    """Fields or densities living on different grids were combined."""


class NonFiniteFieldError(FGLError, ValueError):
    """A field contains NaN or Inf."""


class ResolutionError(FGLError, ValueError):
    """A sweep point does not resolve the vortex core (h > eps / resolution)."""

    def __init__(self, message, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])


class IterativeFailure(FGLError, RuntimeError):
    """Newton or CG did not reach its tolerance."""

    def __init__(self, message, residual=None, iterations=None):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations

    def __str__(self):
        base = super().__str__()
        if self.residual is None:
            return base
        return f"{base} (residual {self.residual:.3e} after {self.iterations} iterations)"


class ConfigurationError(FGLError, ValueError):
    """An experiment configuration failed validation."""

    def __init__(self, diagnostics):
        self.diagnostics = list(diagnostics)
        super().__init__("\n".join(self.diagnostics))
