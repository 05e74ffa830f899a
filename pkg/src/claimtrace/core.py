"""Domain types for claim-level attribution.

Everything downstream (retrieval, judging, metrics, analysis) speaks in the
vocabulary defined here: a claim is a (subject, predicate, object) triple
tied to the text it was extracted from, and an attribution is the set of
origin sources that support one generated triple.

Design notes
------------
* All types are immutable after construction. Pipeline stages communicate
  by value and by persisted artifacts, never by mutating shared state.
* Triple identity is a content hash over (instance_id, source, s, p, o),
  so re-extraction of identical content yields identical ids and artifact
  diffs stay meaningful across runs.
* Deduplication is purely lexical (case folding and whitespace collapse).
  Semantic canonicalisation is the extraction prompt's job; duplicating it
  here with string heuristics would hide prompt regressions.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .errors import StructuralError


class SourceKind(str, Enum):
    """Where a span of text (and the triples extracted from it) came from."""

    USER_QUERY = "user"
    CONTEXT = "context"
    REFERENCE = "reference"
    GENERATED = "generated"


# Sources that may appear as evidence for a generated triple, in display
# order (user < context < reference). GENERATED is never evidence.
EVIDENCE_SOURCES: tuple[SourceKind, ...] = (
    SourceKind.USER_QUERY,
    SourceKind.CONTEXT,
    SourceKind.REFERENCE,
)

# Retrieval-context conditions an instance can be evaluated under.
CONDITION_NA = "na"
CONDITION_RELEVANT = "relevant"
CONDITION_IRRELEVANT = "irrelevant"
CONDITION_NOISY = "noisy"
CONDITIONS: tuple[str, ...] = (
    CONDITION_NA,
    CONDITION_RELEVANT,
    CONDITION_IRRELEVANT,
    CONDITION_NOISY,
)

_ID_SEPARATOR = "\x1f"


def triple_id(instance_id: str, source: SourceKind, subject: str, predicate: str, obj: str) -> str:
    """Content hash identifying a triple within its instance and source."""
    payload = _ID_SEPARATOR.join((instance_id, source.value, subject, predicate, obj))
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class Triple:
    """One extracted claim: subject, predicate, object plus provenance."""

    id: str
    subject: str
    predicate: str
    object: str
    source: SourceKind
    instance_id: str
    raw_span: str | None = None

    def __post_init__(self) -> None:
        for name in ("subject", "predicate", "object"):
            if not getattr(self, name).strip():
                raise StructuralError(f"triple field {name!r} is empty after trimming")
        if not self.instance_id:
            raise StructuralError("triple has no instance_id")
        expected = triple_id(self.instance_id, self.source, self.subject, self.predicate, self.object)
        if self.id != expected:
            raise StructuralError(f"triple id {self.id!r} does not match content hash {expected!r}")

    @classmethod
    def make(
        cls,
        subject: str,
        predicate: str,
        obj: str,
        source: SourceKind,
        instance_id: str,
        raw_span: str | None = None,
    ) -> "Triple":
        return cls(
            id=triple_id(instance_id, source, subject, predicate, obj),
            subject=subject,
            predicate=predicate,
            object=obj,
            source=source,
            instance_id=instance_id,
            raw_span=raw_span,
        )

    def to_dict(self) -> dict:
        out = {
            "id": self.id,
            "subject": self.subject,
            "predicate": self.predicate,
            "object": self.object,
            "source": self.source.value,
            "instance_id": self.instance_id,
        }
        if self.raw_span is not None:
            out["raw_span"] = self.raw_span
        return out

    @classmethod
    def from_dict(cls, payload: Mapping) -> "Triple":
        return cls(
            id=payload["id"],
            subject=payload["subject"],
            predicate=payload["predicate"],
            object=payload["object"],
            source=SourceKind(payload["source"]),
            instance_id=payload["instance_id"],
            raw_span=payload.get("raw_span"),
        )


@dataclass(frozen=True)
class EvaluationInstance:
    """One datapoint under one retrieval condition, ready for evaluation."""

    instance_id: str
    user_query: str
    context_chunks: tuple[str, ...]
    reference: str
    generated: str
    condition: str
    model_tag: str = ""

    def __post_init__(self) -> None:
        if not self.instance_id:
            raise StructuralError("instance_id is empty")
        if not self.user_query.strip():
            raise StructuralError(f"{self.instance_id}: user_query is empty")
        if not self.reference.strip():
            raise StructuralError(f"{self.instance_id}: reference is empty")
        if self.condition not in CONDITIONS:
            raise StructuralError(f"{self.instance_id}: unknown condition {self.condition!r}")
        has_context = bool(self.context_chunks)
        if self.condition == CONDITION_NA and has_context:
            raise StructuralError(f"{self.instance_id}: condition 'na' must have no context chunks")
        if self.condition != CONDITION_NA and not has_context:
            raise StructuralError(
                f"{self.instance_id}: condition {self.condition!r} requires context chunks"
            )

    def source_text(self, source: SourceKind) -> str:
        """The text a given source contributes, empty when absent."""
        if source is SourceKind.USER_QUERY:
            return self.user_query
        if source is SourceKind.REFERENCE:
            return self.reference
        if source is SourceKind.GENERATED:
            return self.generated
        return "\n\n".join(self.context_chunks)

    def to_dict(self) -> dict:
        return {
            "instance_id": self.instance_id,
            "user_query": self.user_query,
            "context_chunks": list(self.context_chunks),
            "reference": self.reference,
            "generated": self.generated,
            "condition": self.condition,
            "model_tag": self.model_tag,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "EvaluationInstance":
        return cls(
            instance_id=payload["instance_id"],
            user_query=payload["user_query"],
            context_chunks=tuple(payload.get("context_chunks", ())),
            reference=payload["reference"],
            generated=payload.get("generated", ""),
            condition=payload["condition"],
            model_tag=payload.get("model_tag", ""),
        )


@dataclass(frozen=True)
class AttributionRecord:
    """The judged outcome for one generated triple.

    ``supported_by`` is derived data: it must equal the set of source kinds
    appearing in ``evidence``. Evidence entries are (source, rank) pairs
    where rank is the 1-based position of the supporting candidate within
    its source's candidate block.
    """

    triple_id: str
    supported_by: frozenset[SourceKind]
    evidence: tuple[tuple[SourceKind, int], ...] = ()

    def __post_init__(self) -> None:
        if not self.triple_id:
            raise StructuralError("attribution record has no triple_id")
        if SourceKind.GENERATED in self.supported_by:
            raise StructuralError(f"{self.triple_id}: generated text is never a valid evidence source")
        derived = frozenset(kind for kind, _rank in self.evidence)
        if derived != self.supported_by:
            raise StructuralError(
                f"{self.triple_id}: supported_by {sorted(k.value for k in self.supported_by)} "
                f"does not match evidence sources {sorted(k.value for k in derived)}"
            )
        for kind, rank in self.evidence:
            if rank < 1:
                raise StructuralError(f"{self.triple_id}: evidence rank {rank} is not 1-based")
            if kind not in EVIDENCE_SOURCES:
                raise StructuralError(f"{self.triple_id}: {kind.value!r} cannot be evidence")

    @classmethod
    def from_evidence(
        cls, triple_id_: str, evidence: Iterable[tuple[SourceKind, int]]
    ) -> "AttributionRecord":
        ev = tuple(evidence)
        return cls(
            triple_id=triple_id_,
            supported_by=frozenset(kind for kind, _rank in ev),
            evidence=ev,
        )

    def to_dict(self) -> dict:
        return {
            "triple_id": self.triple_id,
            "supported_by": [k.value for k in EVIDENCE_SOURCES if k in self.supported_by],
            "evidence": [[kind.value, rank] for kind, rank in self.evidence],
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "AttributionRecord":
        return cls(
            triple_id=payload["triple_id"],
            supported_by=frozenset(SourceKind(v) for v in payload["supported_by"]),
            evidence=tuple((SourceKind(kind), rank) for kind, rank in payload.get("evidence", ())),
        )


# Canonical region keys for the support Venn diagram, ordered for display.
# A region name lists the member sources (r = reference, c = context,
# u = user query); "none" is the unsupported region.
VENN_REGIONS: tuple[str, ...] = ("r", "c", "u", "rc", "ru", "cu", "rcu", "none")

_REGION_BY_MEMBERSHIP = {
    frozenset(): "none",
    frozenset({SourceKind.REFERENCE}): "r",
    frozenset({SourceKind.CONTEXT}): "c",
    frozenset({SourceKind.USER_QUERY}): "u",
    frozenset({SourceKind.REFERENCE, SourceKind.CONTEXT}): "rc",
    frozenset({SourceKind.REFERENCE, SourceKind.USER_QUERY}): "ru",
    frozenset({SourceKind.CONTEXT, SourceKind.USER_QUERY}): "cu",
    frozenset({SourceKind.REFERENCE, SourceKind.CONTEXT, SourceKind.USER_QUERY}): "rcu",
}

_MEMBERSHIP_BY_REGION = {name: members for members, name in _REGION_BY_MEMBERSHIP.items()}


def region_of(supported_by: frozenset[SourceKind]) -> str:
    """Map a support set to its Venn region key."""
    try:
        return _REGION_BY_MEMBERSHIP[frozenset(supported_by)]
    except KeyError:
        raise StructuralError(f"unexpected support set {sorted(k.value for k in supported_by)}")


def region_members(region: str) -> frozenset[SourceKind]:
    try:
        return _MEMBERSHIP_BY_REGION[region]
    except KeyError:
        raise StructuralError(f"unknown Venn region {region!r}")


@dataclass(frozen=True)
class SourcePartition:
    """Exhaustive partition of generated triples by support membership."""

    region_counts: Mapping[str, int]
    total: int

    def __post_init__(self) -> None:
        counts = dict(self.region_counts)
        unknown = set(counts) - set(VENN_REGIONS)
        if unknown:
            raise StructuralError(f"unknown regions {sorted(unknown)}")
        for region in VENN_REGIONS:
            counts.setdefault(region, 0)
        if any(v < 0 for v in counts.values()):
            raise StructuralError("region counts must be non-negative")
        if sum(counts.values()) != self.total:
            raise StructuralError(
                f"region counts sum to {sum(counts.values())}, expected total {self.total}"
            )
        object.__setattr__(self, "region_counts", counts)

    @property
    def none_count(self) -> int:
        return self.region_counts["none"]

    def proportions(self) -> dict[str, float]:
        if self.total == 0:
            raise StructuralError("proportions undefined for an empty partition")
        return {region: self.region_counts[region] / self.total for region in VENN_REGIONS}

    def source_rate(self, kind: SourceKind) -> float:
        """Fraction of triples supported by ``kind`` (union of its regions)."""
        if self.total == 0:
            raise StructuralError("source_rate undefined for an empty partition")
        hits = sum(
            count
            for region, count in self.region_counts.items()
            if kind in region_members(region)
        )
        return hits / self.total


def partition(records: Sequence[AttributionRecord], total_generated: int) -> SourcePartition:
    """Partition attribution records into Venn regions.

    Every generated triple must be judged exactly once: duplicate triple ids
    or a count mismatch against ``total_generated`` is a structural error.
    """
    seen: set[str] = set()
    counts = {region: 0 for region in VENN_REGIONS}
    for record in records:
        if record.triple_id in seen:
            raise StructuralError(f"duplicate attribution for triple {record.triple_id}")
        seen.add(record.triple_id)
        counts[region_of(record.supported_by)] += 1
    if len(records) != total_generated:
        raise StructuralError(
            f"{len(records)} attribution records for {total_generated} generated triples"
        )
    return SourcePartition(region_counts=counts, total=total_generated)


def _dedup_key(triple: Triple) -> tuple[str, str, str]:
    def norm(text: str) -> str:
        return " ".join(text.split()).casefold()

    return (norm(triple.subject), norm(triple.predicate), norm(triple.object))


def dedup_triples(triples: Sequence[Triple]) -> list[Triple]:
    """Drop lexical duplicates, keeping the first occurrence in stable order.

    All triples must come from the same instance and source; deduplication
    across sources would silently merge distinct provenance.
    """
    if not triples:
        return []
    instance_ids = {t.instance_id for t in triples}
    sources = {t.source for t in triples}
    if len(instance_ids) > 1:
        raise StructuralError(f"dedup across instances {sorted(instance_ids)}")
    if len(sources) > 1:
        raise StructuralError(f"dedup across sources {sorted(s.value for s in sources)}")
    seen: set[tuple[str, str, str]] = set()
    kept: list[Triple] = []
    for t in triples:
        key = _dedup_key(t)
        if key in seen:
            continue
        seen.add(key)
        kept.append(t)
    return kept
