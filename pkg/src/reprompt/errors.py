"""Exception types shared across the package."""

from __future__ import annotations


class RepromptError(Exception):
    """Base class for all package errors."""


class ConfigError(RepromptError):
    """Invalid or inconsistent run configuration."""


class SchemaError(RepromptError):
    """Input file does not match the expected schema."""


class InsufficientExamples(RepromptError):
    """Task does not provide enough examples for the requested split."""


class GatewayError(RepromptError):
    """Base class for completion-backend failures. Carries the request digest."""

    def __init__(self, message: str, digest: str = ""):
        super().__init__(message)
        self.digest = digest


class AuthError(GatewayError):
    """Missing or rejected API credential."""


class RateLimitExhausted(GatewayError):
    """Retry budget spent on throttled or transient failures."""


class BackendError(GatewayError):
    """Non-retryable backend failure."""


class CacheIOError(GatewayError):
    """Cache directory could not be read or written."""


class OracleParseError(GatewayError):
    """Prompt sent to the scripted oracle does not match the assembly grammar."""


class InsufficientTuples(RepromptError):
    """Fewer scored non-empty slots than the requested number of shots."""


class MissingCotFile(RepromptError):
    """cot_file method selected without a prompt file."""


class LogInconsistency(RepromptError):
    """Recomputed running average disagrees with the logged value."""
