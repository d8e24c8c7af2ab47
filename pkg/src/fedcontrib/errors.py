"""Exception types shared across the package."""

from __future__ import annotations


class FedContribError(Exception):
    """Base class for all package errors."""


class ConfigError(FedContribError, ValueError):
    """Invalid configuration value. ``path`` is the offending JSON path, if known."""

    def __init__(self, message: str, path: str | None = None) -> None:
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class ShapeError(FedContribError, ValueError):
    pass


class ContractViolation(FedContribError, ValueError):
    """A precondition of an operation was not met by the caller."""


class CapacityError(FedContribError, RuntimeError):
    """The sample pool cannot satisfy a client's requested draw."""

    def __init__(self, message: str, client_id: int | None = None) -> None:
        self.client_id = client_id
        super().__init__(message)


class IdxParseError(FedContribError, ValueError):
    """Malformed IDX container. ``field`` names the header field or section at fault."""

    def __init__(self, message: str, field: str) -> None:
        self.field = field
        super().__init__(message)


class ReconciliationError(FedContribError, RuntimeError):
    def __init__(self, message: str, fields: list[str]) -> None:
        self.fields = fields
        super().__init__(message)
