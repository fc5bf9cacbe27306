"""Exception hierarchy shared by the solvers and the command line."""

from __future__ import annotations


class FdeLabError(Exception):
    """Base class for every error raised by the package."""


class ConfigError(FdeLabError):
    """Invalid or incomplete experiment configuration."""

    def __init__(self, message: str, field: str | None = None, line: int | None = None):
        super().__init__(message)
        self.field = field
        self.line = line


class DomainMismatchError(FdeLabError, ValueError):
    """Operator and field live on different grids."""


class SolverError(FdeLabError):
    """A numerical solver failed; ``diagnostics`` carries the last state."""

    def __init__(self, message: str, **diagnostics):
        super().__init__(message)
        self.diagnostics = diagnostics


class ConvergenceError(SolverError):
    pass


class PositivityError(SolverError):
    pass
