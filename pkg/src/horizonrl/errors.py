"""Exception types shared across the package.

Every error carries a short machine-readable ``code`` so it can be shipped
over the wire unchanged.
"""

from __future__ import annotations


class HorizonRLError(Exception):
    code = "INTERNAL"

    def __init__(self, message: str = "", code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code
        self.message = message

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class ValidationError(HorizonRLError, ValueError):
    code = "VALIDATION"


class ProtocolError(HorizonRLError):
    """Raised by the environment server; ``code`` is one of PROTOCOL_CODES."""


class CollectionFailed(HorizonRLError):
    code = "COLLECTION_FAILED"

    def __init__(self, message: str, underlying: str):
        super().__init__(message)
        self.underlying = underlying

    def __str__(self) -> str:
        return f"{self.code}[{self.underlying}]: {self.message}"


class NumericError(HorizonRLError, ArithmeticError):
    code = "NUMERIC"


class NotFoundError(HorizonRLError, LookupError):
    code = "NOT_FOUND"


PROTOCOL_CODES = ("VALIDATION", "NOT_FOUND", "NOT_RESET", "EPISODE_OVER", "BUSY", "CAPACITY")
