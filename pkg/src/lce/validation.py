"""Input validation helpers shared across the package."""

from __future__ import annotations

import numpy as np

__all__ = [
    "ContractViolationError",
    "EmptyMaskError",
    "EmptyConceptSetError",
    "ConceptCapError",
    "IngestionError",
    "check_same_shape",
    "check_probability",
    "as_float_array",
]


class ContractViolationError(ValueError):
    """An operation was called with arguments that violate its contract."""


class EmptyMaskError(ContractViolationError):
    """An operation that requires a non-empty mask received an empty one."""


class EmptyConceptSetError(RuntimeError):
    """Concept discovery produced no usable concept masks."""


class ConceptCapError(ContractViolationError):
    """Too many concepts for exact coalition enumeration; lower the concept cap."""


class IngestionError(ValueError):
    """Input data could not be ingested (non-finite values, unreadable file, ...)."""


def check_same_shape(a, b, what: str = "operands") -> None:
    if a.width != b.width or a.height != b.height:
        raise ContractViolationError(
            f"{what} must share dimensions, got "
            f"{a.width}x{a.height} vs {b.width}x{b.height}"
        )


def check_probability(value: float, what: str = "value") -> float:
    if not (0.0 <= value <= 1.0):
        raise ContractViolationError(f"{what} must lie in [0, 1], got {value}")
    return float(value)


def as_float_array(data, what: str = "data") -> np.ndarray:
    """Coerce to a float32 array, rejecting non-finite entries."""
    arr = np.asarray(data, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        raise IngestionError(f"{what} contains non-finite values")
    return arr
