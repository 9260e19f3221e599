"""Exception types shared across the pipeline."""
from __future__ import annotations


class FinzeroError(Exception):
    """Base class for all package errors."""


class IngestError(FinzeroError):
    """A dataset file is missing, malformed, or missing required fields."""


class ConfigError(FinzeroError):
    """An unsupported mode/dataset combination or bad runtime configuration."""


class UsageError(FinzeroError):
    """An operation was called in a way its contract forbids."""


class GatewayError(FinzeroError):
    """The completion backend failed after retries."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ReplayMissError(GatewayError):
    """A replay store has no entry for the requested completion."""

    def __init__(self, message: str, fingerprint: str):
        super().__init__(message)
        self.fingerprint = fingerprint


class DslError(FinzeroError):
    """Base class for program-language errors."""


class DslParseError(DslError):
    """Program text violates the grammar."""

    def __init__(self, message: str, position: int | None = None):
        super().__init__(message)
        self.position = position


class DslConversionError(DslError):
    """An extracted program structure cannot become a typed program."""


class DslExecutionError(DslError):
    """A well-formed program failed while evaluating."""


class EvaluationError(FinzeroError):
    """A comparison was attempted on values outside its domain."""
