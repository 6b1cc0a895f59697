"""Exception types raised across the package."""

from __future__ import annotations


class HybridTMEError(Exception):
    """Base class for all package errors."""


class DomainError(HybridTMEError, ValueError):
    """Argument outside the mathematical domain of a response function."""


class DegenerateParameterError(HybridTMEError, ValueError):
    pass


class InstabilityError(HybridTMEError, RuntimeError):
    """Fixed-step integration left the admissible region (step too large)."""


class InsufficientDataError(HybridTMEError, ValueError):
    pass


class ConsistencyError(HybridTMEError, RuntimeError):
    """A closed-form result disagreed with its numerical cross-check."""


class PoleError(HybridTMEError, ValueError):
    pass


class DampingSignError(HybridTMEError, ValueError):
    pass


class PairingError(HybridTMEError, RuntimeError):
    pass


class GridMismatchError(HybridTMEError, ValueError):
    pass


class DivergenceError(HybridTMEError, RuntimeError):
    """Non-finite or inadmissible value produced by the grid solver.

    ``record`` is attached by :func:`hybridtme.solver.run_simulation` and keeps
    the snapshots accepted before the failure.
    """

    def __init__(self, message: str, field: str | None = None, cell: tuple | None = None):
        super().__init__(message)
        self.field = field
        self.cell = cell
        self.record = None


class PositivityError(DivergenceError):
    """A field dropped below the nonnegativity tolerance; the time step is too large."""


class ConfigError(HybridTMEError, ValueError):
    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
        self.key = key
        self.line = line
