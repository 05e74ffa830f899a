"""Claim-level factuality evaluation for retrieval-augmented generation."""

__version__ = "0.1.0"

from .core import (
    AttributionRecord,
    EvaluationInstance,
    SourceKind,
    SourcePartition,
    Triple,
    dedup_triples,
    partition,
)

__all__ = [
    "AttributionRecord",
    "EvaluationInstance",
    "SourceKind",
    "SourcePartition",
    "Triple",
    "dedup_triples",
    "partition",
    "__version__",
]
