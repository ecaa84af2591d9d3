"""Exception hierarchy shared by every layer.

The API layer maps these onto HTTP status codes; everything below it
raises them directly.
"""


class FeedbackForgeError(Exception):
    """Base class for all domain errors."""


class DomainError(FeedbackForgeError):
    """An operation's precondition or a domain invariant was violated."""


class NotFoundError(FeedbackForgeError):
    """A referenced entity does not exist."""


class ConflictError(FeedbackForgeError):
    """A write collided with existing state (duplicate version, lost CAS)."""


class StateError(FeedbackForgeError):
    """The entity is in the wrong lifecycle state for this operation."""


class ConfigError(FeedbackForgeError):
    """Invalid configuration (template, provider descriptor, policy)."""


class StorageIntegrityError(FeedbackForgeError):
    """Stored data failed an integrity check (checksum, stale breakdown,
    unknown schema version)."""


class GatewayError(FeedbackForgeError):
    """Every provider in a generation batch failed.

    Carries the per-provider results so callers can report outcomes.
    """

    def __init__(self, message: str, results: list | None = None):
        super().__init__(message)
        self.results = results or []


class AccessError(FeedbackForgeError):
    """Caller lacks the role or ownership required by the route."""
