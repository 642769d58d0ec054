"""Exception taxonomy shared across the package.

Every domain failure raises a subclass of WeavecacheError so the CLI and
the HTTP service can map them uniformly (exit code 1, HTTP 400) without
inspecting messages.
"""

from __future__ import annotations

__all__ = [
    "WeavecacheError",
    "DimensionError",
    "ZeroNormError",
    "EmptyInputError",
    "InvalidDistributionError",
    "TimeOrderError",
    "InvalidParameterError",
    "ShapeError",
    "ConfigError",
    "EmptyMemoryError",
    "StreamFormatError",
    "SessionNotFoundError",
]


class WeavecacheError(Exception):
    """Base class for every domain error raised by this package."""


class DimensionError(WeavecacheError):
    """Vector or token dimensionalities do not line up."""


class ZeroNormError(WeavecacheError):
    """Cosine similarity was asked for against a zero-norm vector."""


class EmptyInputError(WeavecacheError):
    """An operation that needs at least one element got none."""


class InvalidDistributionError(WeavecacheError):
    """Probabilities are negative, non-finite, or do not sum to one."""


class TimeOrderError(WeavecacheError):
    """Timestamps moved backwards where the contract forbids it."""


class InvalidParameterError(WeavecacheError):
    """A numeric parameter is outside its documented range."""


class ShapeError(WeavecacheError):
    """A prediction does not match the target's length or layout."""


class ConfigError(WeavecacheError):
    """A configuration value violates its documented bound."""


class EmptyMemoryError(WeavecacheError):
    """Answering was requested against a memory with no frames."""


class StreamFormatError(WeavecacheError):
    """A stream or prediction file line could not be parsed."""


class SessionNotFoundError(WeavecacheError):
    """The service got a session id it does not know."""
