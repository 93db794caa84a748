"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ValidationError -> 1,
BackendError -> 2, PartialCompletionError -> 3.
"""


class FableError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(FableError):
    """Malformed input, violated invariant, or bad configuration."""


class BackendError(FableError):
    """A backend call failed permanently (service, contract, or transport
    after retries were exhausted)."""


class TransportError(BackendError):
    """Retryable transport-level failure: network error, timeout, or a
    5xx-class response."""


class PartialCompletionError(FableError):
    """A multi-document stage stopped partway. Outputs written for already
    completed documents persist on disk."""

    def __init__(self, stage: str, done: int, total: int, cause: Exception):
        super().__init__(
            f"stage '{stage}' stopped after {done}/{total} documents: {cause}"
        )
        self.stage = stage
        self.done = done
        self.total = total
        self.cause = cause
