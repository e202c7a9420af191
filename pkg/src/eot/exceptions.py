"""Exception types shared across the package.

Pure functions raise plain ValueError on bad arguments; these classes cover
failures that cross a process or configuration boundary.
"""


class EotError(Exception):
    """Base class for package-specific failures."""


class ConfigError(EotError):
    """Invalid or unusable run configuration."""


class TemplateError(EotError):
    """A prompt template could not be rendered."""


class TransportError(EotError):
    """A retryable transport or server-side failure."""


class BackendError(EotError):
    """A model backend call failed after exhausting retries."""


class RequestRejected(BackendError):
    """The backend rejected the request outright (not retryable)."""


class EmbeddingError(EotError):
    """An embedding provider could not produce vectors."""
