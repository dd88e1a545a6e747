"""Exception hierarchy shared by all modules.

The CLI maps ``ConfigurationError`` to exit code 2 and every other
``RoughWallError`` to exit code 1.
"""


class RoughWallError(Exception):
    """Base class for all package errors."""


class ConfigurationError(RoughWallError, ValueError):
    """Invalid input parameters, specs or config files."""


class ResolutionError(ConfigurationError):
    """Mesh resolution too coarse to resolve the roughness."""

    def __init__(self, message, required_h=None):
        super().__init__(message)
        self.required_h = required_h


class SolverError(RoughWallError):
    """Singular or otherwise unsolvable discrete system."""


class NonConvergenceError(SolverError):
    """Picard iteration failed to converge."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history or [])


class ExtractionError(RoughWallError):
    """No far-field plateau could be identified in a boundary-layer solution."""


class DomainError(RoughWallError, ValueError):
    """Evaluation requested outside the domain of definition."""
