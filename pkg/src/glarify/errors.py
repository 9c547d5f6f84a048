"""Exception hierarchy shared by the whole toolkit.

Data-shaped failures (bad records, invariant violations, schema mismatches)
and external-service failures (transport, replay misses) are separate
branches so the CLI can map them to distinct exit codes.
"""


class GlarifyError(Exception):
    """Base class for all toolkit errors."""


class DataError(GlarifyError):
    """Invalid input data, violated invariant, or malformed artifact."""


class SchemaError(DataError):
    """Artifact schema/version mismatch."""

    def __init__(self, expected: str, found: str):
        super().__init__(f"schema mismatch: expected {expected!r}, found {found!r}")
        self.expected = expected
        self.found = found


class StructuredOutputError(DataError):
    """No parseable structured block in a model completion."""


class PerturbationError(DataError):
    """A trace perturbation precondition failed for a sample."""


class ExternalServiceError(GlarifyError):
    """Failure talking to an external model endpoint."""


class TransportError(ExternalServiceError):
    """Transport-level failure after retries; carries the last status."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class ReplayMissError(ExternalServiceError):
    """Request hash absent from the replay transcript."""
