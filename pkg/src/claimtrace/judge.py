"""Micro-batched grounding of generated triples against their candidates.

Each batch renders one prompt holding up to ``batch_size`` generated triples,
every one followed by its own 0-based candidate enumeration. The judge
answers with one verdict per triple; evidence indices are mapped back through
the candidate display order into (source, rank) pairs.

Failure policy per batch: one repair re-prompt, then one retry split into
half-size batches, then JudgeError. Out-of-range evidence indices never fail
a batch; they are dropped and tallied as judge noise.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .core import AttributionRecord, Triple
from .errors import JudgeError, StructuralError
from .gateway import ChatRequest, LLMClient
from .retriever import CandidateSet

MICRO_BATCH_MARKER = "=== MICRO-BATCH ==="
DEFAULT_BATCH_SIZE = 8

VERDICT_SCHEMA = {
    "type": "array",
    "items": {
        "type": "object",
        "properties": {
            "index": {"type": "integer"},
            "evidence": {"type": "array", "items": {"type": "integer"}},
        },
        "required": ["index", "evidence"],
        "additionalProperties": False,
    },
}


@dataclass(frozen=True)
class BatchItem:
    index: int  # the GENERATED index displayed to the judge
    triple: Triple
    candidates: CandidateSet

    def __post_init__(self) -> None:
        if self.index < 0:
            raise StructuralError(f"negative batch index {self.index}")
        if self.candidates.generated_triple_id != self.triple.id:
            raise StructuralError(
                f"candidate set {self.candidates.generated_triple_id} does not "
                f"belong to triple {self.triple.id}"
            )


@dataclass(frozen=True)
class MicroBatch:
    batch_id: str
    items: tuple[BatchItem, ...]
    rendered_prompt: str = ""

    def __post_init__(self) -> None:
        if not self.items:
            raise StructuralError(f"batch {self.batch_id} is empty")
        indices = [item.index for item in self.items]
        if len(set(indices)) != len(indices):
            raise StructuralError(f"batch {self.batch_id} repeats generated indices")

    def item_for(self, index: int) -> BatchItem:
        for item in self.items:
            if item.index == index:
                return item
        raise StructuralError(f"batch {self.batch_id} has no item {index}")


@dataclass(frozen=True)
class JudgeVerdict:
    index: int
    evidence: tuple[int, ...]


def _quoted_triple(triple: Triple) -> str:
    return f"s='{triple.subject}', p='{triple.predicate}', o='{triple.object}'"


def render_grounding_prompt(
    batch: MicroBatch,
    header_text: str,
    format_text: str,
    triples_by_id: Mapping[str, Triple],
) -> str:
    """The full judge prompt for one micro-batch."""
    indices = ", ".join(str(item.index) for item in batch.items)
    lines = [
        header_text.strip(),
        "",
        MICRO_BATCH_MARKER,
        "",
        f"Generated triple indices in this batch: {{{indices}}}",
    ]
    for item in batch.items:
        lines += [
            "",
            f"--- GENERATED index: {item.index} ---",
            "",
            f"GENERATED: {_quoted_triple(item.triple)}",
            "",
            "CANDIDATES:",
        ]
        for display_index, candidate in enumerate(item.candidates.candidates):
            source_triple = triples_by_id.get(candidate.triple_id)
            if source_triple is None:
                raise StructuralError(
                    f"batch {batch.batch_id}: candidate {candidate.triple_id} "
                    "is not in the triple lookup"
                )
            lines.append(
                f"[{display_index}] ({candidate.source.value}#{candidate.rank}, "
                f"{_quoted_triple(source_triple)})"
            )
    lines += ["", format_text.strip(), ""]
    return "\n".join(lines)


def build_micro_batches(
    items: Sequence[tuple[Triple, CandidateSet]],
    triples_by_id: Mapping[str, Triple],
    header_text: str,
    format_text: str,
    batch_size: int = DEFAULT_BATCH_SIZE,
    id_prefix: str = "",
) -> list[MicroBatch]:
    """Slice (triple, candidates) pairs into rendered batches of ≤ batch_size."""
    if batch_size < 1:
        raise StructuralError(f"batch_size {batch_size} must be positive")
    batches: list[MicroBatch] = []
    for batch_no, start in enumerate(range(0, len(items), batch_size)):
        batch_items = tuple(
            BatchItem(index=start + offset, triple=triple, candidates=candidates)
            for offset, (triple, candidates) in enumerate(items[start:start + batch_size])
        )
        bare = MicroBatch(batch_id=f"{id_prefix}b{batch_no:03d}", items=batch_items)
        batches.append(
            MicroBatch(
                batch_id=bare.batch_id,
                items=bare.items,
                rendered_prompt=render_grounding_prompt(
                    bare, header_text, format_text, triples_by_id
                ),
            )
        )
    return batches


# -------------------------------------------------------------- verdicts


def parse_verdicts(raw: str, batch: MicroBatch) -> tuple[list[JudgeVerdict], int]:
    """Strictly parse the verdict array; returns verdicts plus dropped-index count.

    Every batch item must get exactly one verdict; anything structurally off
    (not an array, unknown or repeated indices, non-integer fields) raises
    JudgeError. Out-of-range evidence indices are dropped and counted, not
    raised: they are judge noise, not protocol violations.
    """
    try:
        payload = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise JudgeError(f"batch {batch.batch_id}: verdicts are not valid JSON ({exc})")
    if not isinstance(payload, list):
        raise JudgeError(f"batch {batch.batch_id}: verdicts are not a JSON array")

    expected = {item.index for item in batch.items}
    seen: set[int] = set()
    verdicts: list[JudgeVerdict] = []
    dropped = 0
    for entry in payload:
        if not isinstance(entry, dict):
            raise JudgeError(f"batch {batch.batch_id}: verdict entry is not an object")
        index = entry.get("index")
        evidence = entry.get("evidence")
        if isinstance(index, bool) or not isinstance(index, int):
            raise JudgeError(f"batch {batch.batch_id}: verdict index {index!r} is not an integer")
        if index not in expected:
            raise JudgeError(f"batch {batch.batch_id}: verdict for unknown index {index}")
        if index in seen:
            raise JudgeError(f"batch {batch.batch_id}: duplicate verdict for index {index}")
        if not isinstance(evidence, list):
            raise JudgeError(f"batch {batch.batch_id}: evidence for {index} is not a list")
        shown = len(batch.item_for(index).candidates.candidates)
        kept: list[int] = []
        for value in evidence:
            if isinstance(value, bool) or not isinstance(value, int):
                raise JudgeError(
                    f"batch {batch.batch_id}: evidence entry {value!r} is not an integer"
                )
            if 0 <= value < shown:
                if value not in kept:
                    kept.append(value)
            else:
                dropped += 1
        seen.add(index)
        verdicts.append(JudgeVerdict(index=index, evidence=tuple(kept)))

    missing = expected - seen
    if missing:
        raise JudgeError(
            f"batch {batch.batch_id}: no verdict for indices {sorted(missing)}"
        )
    return verdicts, dropped


def verdicts_to_records(
    batch: MicroBatch, verdicts: Sequence[JudgeVerdict]
) -> list[AttributionRecord]:
    """Map display-index evidence into (source, rank) attribution records."""
    by_index = {v.index: v for v in verdicts}
    records = []
    for item in batch.items:
        pairs = item.candidates.display_pairs()
        evidence = tuple(pairs[i] for i in by_index[item.index].evidence)
        records.append(AttributionRecord.from_evidence(item.triple.id, evidence))
    return records


# ------------------------------------------------------------ judge loop


@dataclass(frozen=True)
class AttributionRow:
    """One judged triple plus the provenance needed to audit it."""

    record: AttributionRecord
    batch_id: str
    response_sha: str

    def to_dict(self) -> dict:
        out = self.record.to_dict()
        out["batch_id"] = self.batch_id
        out["response_sha"] = self.response_sha
        return out


@dataclass(frozen=True)
class AttributionOutcome:
    rows: tuple[AttributionRow, ...]
    dropped_evidence: int
    batches: int
    repairs: int
    half_retries: int

    @property
    def records(self) -> tuple[AttributionRecord, ...]:
        return tuple(row.record for row in self.rows)


def _repair_prompt(batch: MicroBatch, raw: str, error: str) -> str:
    return (
        f"{batch.rendered_prompt}\n"
        "Your previous output could not be used.\n"
        f"Problem: {error}\n"
        f"Previous output:\n{raw}\n\n"
        "Re-emit the verdicts as a valid JSON array with exactly one object "
        "per GENERATED index in this batch.\n"
    )


def _complete(client: LLMClient, prompt: str) -> str:
    return client.chat_complete(ChatRequest(messages=(("user", prompt),))).text


def _sha(raw: str) -> str:
    return hashlib.sha256(raw.encode("utf-8")).hexdigest()[:16]


def _split_batch(
    batch: MicroBatch,
    header_text: str,
    format_text: str,
    triples_by_id: Mapping[str, Triple],
) -> list[MicroBatch]:
    half_len = (len(batch.items) + 1) // 2
    halves = [batch.items[:half_len], batch.items[half_len:]]
    out = []
    for tag, items in zip(("h0", "h1"), halves):
        if not items:
            continue
        bare = MicroBatch(batch_id=f"{batch.batch_id}-{tag}", items=items)
        out.append(
            MicroBatch(
                batch_id=bare.batch_id,
                items=bare.items,
                rendered_prompt=render_grounding_prompt(
                    bare, header_text, format_text, triples_by_id
                ),
            )
        )
    return out


def attribute_instance(
    client: LLMClient,
    items: Sequence[tuple[Triple, CandidateSet]],
    triples_by_id: Mapping[str, Triple],
    header_text: str,
    format_text: str,
    batch_size: int = DEFAULT_BATCH_SIZE,
    id_prefix: str = "",
) -> AttributionOutcome:
    """Judge every generated triple of one instance exactly once."""
    for triple, candidates in items:
        if candidates.generated_triple_id != triple.id:
            raise StructuralError(
                f"candidate set {candidates.generated_triple_id} paired with "
                f"triple {triple.id}"
            )
    if not items:
        return AttributionOutcome(rows=(), dropped_evidence=0, batches=0, repairs=0, half_retries=0)

    batches = build_micro_batches(
        items, triples_by_id, header_text, format_text, batch_size, id_prefix
    )
    rows: list[AttributionRow] = []
    dropped_total = 0
    repairs = 0
    half_retries = 0

    for batch in batches:
        raw = _complete(client, batch.rendered_prompt)
        try:
            verdicts, dropped = parse_verdicts(raw, batch)
            solved = [(batch, verdicts, dropped, _sha(raw))]
        except JudgeError as first_error:
            repairs += 1
            raw = _complete(client, _repair_prompt(batch, raw, str(first_error)))
            try:
                verdicts, dropped = parse_verdicts(raw, batch)
                solved = [(batch, verdicts, dropped, _sha(raw))]
            except JudgeError:
                if len(batch.items) < 2:
                    raise JudgeError(
                        f"batch {batch.batch_id} failed after repair and cannot be split"
                    )
                half_retries += 1
                solved = []
                for half in _split_batch(batch, header_text, format_text, triples_by_id):
                    half_raw = _complete(client, half.rendered_prompt)
                    try:
                        verdicts, dropped = parse_verdicts(half_raw, half)
                    except JudgeError:
                        raise JudgeError(
                            f"batch {batch.batch_id} failed after repair and half-size retry"
                        )
                    solved.append((half, verdicts, dropped, _sha(half_raw)))
        for solved_batch, verdicts, dropped, sha in solved:
            dropped_total += dropped
            for record in verdicts_to_records(solved_batch, verdicts):
                rows.append(
                    AttributionRow(record=record, batch_id=solved_batch.batch_id, response_sha=sha)
                )

    if len(rows) != len(items):
        raise JudgeError(
            f"attribution produced {len(rows)} records for {len(items)} triples"
        )
    return AttributionOutcome(
        rows=tuple(rows),
        dropped_evidence=dropped_total,
        batches=len(batches),
        repairs=repairs,
        half_retries=half_retries,
    )


# ---------------------------------------------------------- persistence


def write_attributions(path: Path, rows: Sequence[AttributionRow]) -> None:
    lines = [json.dumps(row.to_dict(), sort_keys=True) for row in rows]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_attributions(path: Path) -> list[AttributionRow]:
    rows = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        payload = json.loads(line)
        rows.append(
            AttributionRow(
                record=AttributionRecord.from_dict(payload),
                batch_id=payload["batch_id"],
                response_sha=payload["response_sha"],
            )
        )
    return rows
