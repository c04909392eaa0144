"""Exception types shared across the package."""

from __future__ import annotations


class TurnsmithError(Exception):
    """Base class for all package errors."""


class ConfigError(TurnsmithError):
    """Invalid or incomplete run configuration."""


class TaxonomyError(TurnsmithError):
    """Taxonomy file failed to load or violates its invariants."""


class TemplateError(TurnsmithError):
    """Prompt template is missing, malformed, or incompletely rendered."""


class BackendError(TurnsmithError):
    """A chat or embedding backend call failed."""

    def __init__(self, message: str, *, status: int | None = None, attempts: int = 1):
        super().__init__(message)
        self.status = status
        self.attempts = attempts


class ExtractionError(TurnsmithError):
    """No parseable JSON object could be recovered from a completion."""


class RepairExhaustedError(TurnsmithError):
    """Generation kept producing invalid output until the repair budget ran out."""

    def __init__(self, message: str, report=None):
        super().__init__(message)
        self.report = report


class CorpusSynthesisError(TurnsmithError):
    """Too many per-dialogue failures during corpus synthesis."""

    def __init__(self, message: str, failures=None):
        super().__init__(message)
        self.failures = list(failures or [])


class ConsistencyError(TurnsmithError):
    """Consistency scoring or partitioning could not proceed."""


class SchemaError(TurnsmithError):
    """An input file does not match its documented schema."""


class VerdictError(TurnsmithError):
    """Judge output could not be parsed into an in-range score."""
