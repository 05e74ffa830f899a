"""Exception types shared across the pipeline.

Structural errors mean the caller handed us something that violates a
documented precondition; they are bugs, not runtime noise, and are never
retried. Transport / protocol / capability errors describe the three ways
an LLM endpoint can disappoint us and are handled at different layers.
"""
from __future__ import annotations


class ClaimtraceError(Exception):
    """Base class for every error raised by this package."""


class StructuralError(ClaimtraceError):
    """A data-structure precondition was violated by the caller."""


class DataError(ClaimtraceError):
    """Input corpus, labels, or persisted artifacts are unusable."""


class ConfigError(ClaimtraceError):
    """The run configuration is missing, malformed, or inconsistent."""


class TransportError(ClaimtraceError):
    """An endpoint stayed unreachable or kept failing after retries."""


class ProtocolError(ClaimtraceError):
    """An endpoint answered, but with a malformed or inconsistent payload."""


class CapabilityError(ClaimtraceError):
    """The endpoint rejected a feature we asked for (e.g. schema-guided output)."""


class ExtractionError(ClaimtraceError):
    """Extractor output stayed unparseable after the repair re-prompt."""

    def __init__(self, message: str, raw_output: str = "") -> None:
        super().__init__(message)
        self.raw_output = raw_output


class JudgeError(ClaimtraceError):
    """A grounding micro-batch failed after repair and the half-size retry."""


class IncompleteLabelsError(DataError):
    """An imported label file does not cover every sampled item."""

    def __init__(self, message: str, task_ids: list[str]) -> None:
        super().__init__(message)
        self.task_ids = list(task_ids)
