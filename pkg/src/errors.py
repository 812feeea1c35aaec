"""
Shared exception types.

Validation problems are ValueErrors that name the offending key and the
violated constraint; modelling dead-ends (unbounded AoI, no crossover) and
I/O failures get their own types so the CLI can map them to exit codes.
"""

from typing import Optional


class ValidationError(ValueError):
    """A parameter violated one of its invariants."""

    def __init__(self, key: str, constraint: str, value: Optional[object] = None):
        self.key = key
        self.constraint = constraint
        self.value = value
        message = f"{key}: {constraint}"
        if value is not None:
            message += f" (got {value!r})"
        super().__init__(message)


class UnboundedAoIError(ArithmeticError):
    """Success probability 1 - eps fell below the configured floor."""

    def __init__(self, scheme: str, error_rate: float, floor: float):
        self.scheme = scheme
        self.error_rate = error_rate
        self.floor = floor
        super().__init__(
            f"unbounded AoI: {scheme} scheme has 1 - eps = {1.0 - error_rate:.3g} "
            f"below floor {floor:g}"
        )


class NoCrossoverError(ValueError):
    """The exact AoI difference keeps one sign over the searched range."""

    def __init__(self, lo: int, hi: int):
        self.lo = lo
        self.hi = hi
        super().__init__(f"no crossover in range [{lo}, {hi}]")


class ExportError(RuntimeError):
    """Writing an output file failed."""

    def __init__(self, destination: str, reason: str):
        self.destination = destination
        self.reason = reason
        super().__init__(f"{destination}: {reason}")
