"""Exception types shared across the package."""

from __future__ import annotations


class DomainError(ValueError):
    """An input lies outside the region where a model is defined."""


class InputError(ValueError):
    """Malformed input file or configuration."""

    def __init__(self, message: str, *, row: int | None = None, column: str | None = None):
        self.row = row
        self.column = column
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class NonFiniteModelError(ArithmeticError):
    """A model returned a non-finite value at an accepted parameter point."""

    def __init__(self, x, theta):
        self.x = x
        self.theta = tuple(float(t) for t in theta)
        super().__init__(f"model is non-finite at x={x!r} for parameters {self.theta}")
