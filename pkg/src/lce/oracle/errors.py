"""Typed endpoint errors. Transport and protocol failures never crash the
engine; they surface as one of these."""

from __future__ import annotations

__all__ = [
    "OracleError",
    "OracleTimeoutError",
    "OracleProtocolError",
    "OracleRemoteError",
    "CapabilityError",
]


class OracleError(RuntimeError):
    """Base class for endpoint failures; carries the failing method if known."""

    def __init__(self, message: str, method: str | None = None):
        super().__init__(message if method is None else f"{method}: {message}")
        self.method = method


class OracleTimeoutError(OracleError):
    """The endpoint did not answer within the configured timeout."""


class OracleProtocolError(OracleError):
    """Malformed frame, version mismatch, or broken transport."""


class OracleRemoteError(OracleError):
    """The endpoint answered with an error frame."""

    def __init__(self, code: str, message: str, method: str | None = None):
        super().__init__(f"[{code}] {message}", method)
        self.code = code


class CapabilityError(OracleError):
    """The endpoint does not advertise a capability the pipeline needs."""
