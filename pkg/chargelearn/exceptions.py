"""Errors raised by chargelearn."""
from __future__ import annotations

from typing import Any

from .const import EXIT_DATA, EXIT_IO, EXIT_USAGE, EXIT_VERIFY


class ChargeLearnError(Exception):
    """Base error; carries the CLI exit code it maps to."""

    exit_code = EXIT_IO


class InvalidArgument(ChargeLearnError, ValueError):
    """An argument is outside its documented range."""

    exit_code = EXIT_USAGE


class StorageError(ChargeLearnError):
    """Reading or writing a file failed."""

    exit_code = EXIT_IO


class StateError(ChargeLearnError):
    """A quantum or classical state cannot support the requested operation."""

    exit_code = EXIT_DATA


class NumericError(ChargeLearnError):
    """A numerical routine failed; `diagnostics` says where."""

    exit_code = EXIT_DATA

    def __init__(self, message: str, diagnostics: dict[str, Any] | None = None) -> None:
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class LayoutMismatch(ChargeLearnError):
    exit_code = EXIT_DATA


class MissingGateData(ChargeLearnError):
    """A biased decoder needs gate parameters the record does not carry."""

    exit_code = EXIT_DATA


class InconsistentRecord(ChargeLearnError):
    """No candidate label assigns the record a nonzero likelihood."""

    exit_code = EXIT_DATA


class CorruptedRecord(ChargeLearnError):
    """A record contradicts charge conservation or its own schema."""

    exit_code = EXIT_DATA


class DegenerateDistribution(ChargeLearnError):
    exit_code = EXIT_DATA


class VerificationFailed(ChargeLearnError):
    exit_code = EXIT_VERIFY


class BackendLimitExceeded(ChargeLearnError):
    """The requested backend cannot hold a system this large."""

    exit_code = EXIT_DATA
