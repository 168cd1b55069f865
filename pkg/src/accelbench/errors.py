"""Exception hierarchy shared across the package."""

from __future__ import annotations


class AccelBenchError(Exception):
    """Base class for all package errors."""


class ParseError(AccelBenchError):
    """Input text could not be parsed at all."""


class SchemaError(AccelBenchError):
    """A parsed document violates a schema invariant.

    ``field`` names the offending field when known.
    """

    def __init__(self, message: str, field: str | None = None) -> None:
        super().__init__(message)
        self.field = field


class DegenerateInput(AccelBenchError):
    """Numeric input outside the domain of a metric formula."""


class EmptyInput(AccelBenchError):
    """An aggregate was asked for on an empty collection."""


class InvariantError(AccelBenchError):
    """An internal contract was violated by the caller."""


class AmbiguityError(AccelBenchError):
    """Two conflicting captures for one attribute could not be ordered."""


class BackendUnavailable(AccelBenchError):
    """The execution backend cannot be reached or is misconfigured."""


class ConfigError(AccelBenchError):
    """Invalid run configuration."""


class VerificationFailure(AccelBenchError):
    """A built task failed evaluation against its own ground truth."""


class NoFeasibleConfig(AccelBenchError):
    """Speedup search found no configuration within the quality bound."""


class InvalidM(AccelBenchError):
    """Offspring count exceeds the available population."""


class GatewayError(AccelBenchError):
    """Base class for chat-gateway failures."""


class GatewayTimeout(GatewayError):
    """The completion endpoint did not answer in time."""


class RateLimited(GatewayError):
    """The endpoint kept refusing after backoff."""


class MalformedResponse(GatewayError):
    """The endpoint answered with something that is not completion text."""


class BudgetExhausted(GatewayError):
    """The per-task call budget is spent; no further calls allowed."""


class UnparseablePlan(AccelBenchError):
    """A planning completion lacked the required structure after a retry."""
