"""Human validation: task sampling, label files, and agreement scoring.

Extraction tasks show one source text with up to eight of its extracted
triples; the annotator marks each triple faithful or not. Attribution tasks
show one generated triple with its candidate list exactly as the judge saw
it; the annotator marks each candidate supported or not. Per-candidate
booleans reduce to a human supported-by set per triple, which is compared
against the pipeline's records per label and as an exact set.

Label files keep the raw per-candidate booleans so alternative scoring rules
can be recomputed later without re-annotating.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .core import AttributionRecord, EvaluationInstance, SourceKind, Triple
from .errors import DataError, IncompleteLabelsError, StructuralError
from .retriever import CandidateSet

ATTRIBUTION_LABELS = ("reference", "context", "user", "none")

DEFAULT_N_EXTRACTION = 128
DEFAULT_N_ATTRIBUTION = 256
DEFAULT_TRIPLES_PER_TASK = 8


def _rng(seed: int, stream: str) -> random.Random:
    digest = hashlib.sha256(f"{seed}\x1f{stream}".encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _triple_payload(triple: Triple) -> dict:
    return {
        "triple_id": triple.id,
        "subject": triple.subject,
        "predicate": triple.predicate,
        "object": triple.object,
    }


@dataclass(frozen=True)
class ExtractionTask:
    task_id: str
    instance_id: str
    source: SourceKind
    source_text: str
    triples: tuple[dict, ...]

    def __post_init__(self) -> None:
        if not self.triples:
            raise StructuralError(f"{self.task_id}: extraction task with no triples")
        if len(self.triples) > DEFAULT_TRIPLES_PER_TASK:
            raise StructuralError(
                f"{self.task_id}: {len(self.triples)} triples exceeds the task cap"
            )

    def to_dict(self) -> dict:
        return {
            "kind": "extraction",
            "task_id": self.task_id,
            "instance_id": self.instance_id,
            "source": self.source.value,
            "source_text": self.source_text,
            "triples": list(self.triples),
        }


@dataclass(frozen=True)
class AttributionTask:
    task_id: str
    instance_id: str
    generated: dict
    candidates: tuple[dict, ...]  # display order, exactly as judged

    def to_dict(self) -> dict:
        return {
            "kind": "attribution",
            "task_id": self.task_id,
            "instance_id": self.instance_id,
            "generated": self.generated,
            "candidates": list(self.candidates),
        }


def sample_tasks(
    instances: Sequence[EvaluationInstance],
    triples: Sequence[Triple],
    candidate_sets: Mapping[str, CandidateSet],
    n_extraction: int = DEFAULT_N_EXTRACTION,
    n_attribution: int = DEFAULT_N_ATTRIBUTION,
    triples_per_task: int = DEFAULT_TRIPLES_PER_TASK,
    seed: int = 0,
) -> tuple[list[ExtractionTask], list[AttributionTask]]:
    """Seeded uniform sampling without replacement from the run's artifacts.

    The two samples use independent derived streams, so changing one count
    never shifts the other sample.
    """
    instances_by_id = {i.instance_id: i for i in instances}
    triples_by_id = {t.id: t for t in triples}

    by_unit: dict[tuple[str, str], list[Triple]] = {}
    for triple in triples:
        by_unit.setdefault((triple.instance_id, triple.source.value), []).append(triple)
    units = sorted(by_unit)
    if len(units) < n_extraction:
        raise DataError(
            f"extraction sample of {n_extraction} requested but only "
            f"{len(units)} (instance, source) texts have triples"
        )

    ext_rng = _rng(seed, "extraction")
    extraction_tasks: list[ExtractionTask] = []
    for task_no, unit in enumerate(sorted(ext_rng.sample(units, n_extraction))):
        instance_id, source_value = unit
        instance = instances_by_id.get(instance_id)
        if instance is None:
            raise DataError(f"triples reference unknown instance {instance_id}")
        pool = by_unit[unit]
        if len(pool) > triples_per_task:
            keep = sorted(ext_rng.sample(range(len(pool)), triples_per_task))
            pool = [pool[i] for i in keep]
        source = SourceKind(source_value)
        extraction_tasks.append(
            ExtractionTask(
                task_id=f"ext-{task_no:04d}",
                instance_id=instance_id,
                source=source,
                source_text=instance.source_text(source),
                triples=tuple(_triple_payload(t) for t in pool),
            )
        )

    judged = sorted(candidate_sets)
    if len(judged) < n_attribution:
        raise DataError(
            f"attribution sample of {n_attribution} requested but only "
            f"{len(judged)} generated triples were judged"
        )
    att_rng = _rng(seed, "attribution")
    attribution_tasks: list[AttributionTask] = []
    for task_no, generated_id in enumerate(sorted(att_rng.sample(judged, n_attribution))):
        generated = triples_by_id.get(generated_id)
        if generated is None:
            raise DataError(f"candidate set references unknown triple {generated_id}")
        candidate_payloads = []
        for display_index, candidate in enumerate(candidate_sets[generated_id].candidates):
            source_triple = triples_by_id.get(candidate.triple_id)
            if source_triple is None:
                raise DataError(f"candidate references unknown triple {candidate.triple_id}")
            payload = _triple_payload(source_triple)
            payload["display_index"] = display_index
            payload["source"] = candidate.source.value
            payload["rank"] = candidate.rank
            candidate_payloads.append(payload)
        attribution_tasks.append(
            AttributionTask(
                task_id=f"att-{task_no:04d}",
                instance_id=generated.instance_id,
                generated=_triple_payload(generated),
                candidates=tuple(candidate_payloads),
            )
        )
    return extraction_tasks, attribution_tasks


# ------------------------------------------------------------ label files


@dataclass(frozen=True)
class LabelSet:
    """Raw imported labels, keyed by (task_id, slot index)."""

    extraction: Mapping[tuple[str, int], bool]
    attribution: Mapping[tuple[str, int], bool]


def write_tasks(path: Path, tasks: Sequence[ExtractionTask | AttributionTask]) -> None:
    lines = [json.dumps(task.to_dict(), sort_keys=True) for task in tasks]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_tasks(path: Path) -> tuple[list[ExtractionTask], list[AttributionTask]]:
    extraction: list[ExtractionTask] = []
    attribution: list[AttributionTask] = []
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{line_no}: not valid JSON ({exc})")
        kind = payload.get("kind")
        if kind == "extraction":
            extraction.append(
                ExtractionTask(
                    task_id=payload["task_id"],
                    instance_id=payload["instance_id"],
                    source=SourceKind(payload["source"]),
                    source_text=payload["source_text"],
                    triples=tuple(payload["triples"]),
                )
            )
        elif kind == "attribution":
            attribution.append(
                AttributionTask(
                    task_id=payload["task_id"],
                    instance_id=payload["instance_id"],
                    generated=payload["generated"],
                    candidates=tuple(payload["candidates"]),
                )
            )
        else:
            raise DataError(f"{path}:{line_no}: unknown task kind {kind!r}")
    return extraction, attribution


def write_labels(path: Path, labels: Sequence[dict]) -> None:
    lines = [json.dumps(entry, sort_keys=True) for entry in labels]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def read_labels(path: Path) -> LabelSet:
    extraction: dict[tuple[str, int], bool] = {}
    attribution: dict[tuple[str, int], bool] = {}
    for line_no, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            payload = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}:{line_no}: not valid JSON ({exc})")
        task_id = payload.get("task_id")
        if not isinstance(task_id, str):
            raise DataError(f"{path}:{line_no}: missing task_id")
        if "faithful" in payload:
            key = (task_id, int(payload["triple_index"]))
            if key in extraction:
                raise DataError(f"{path}:{line_no}: duplicate label for {key}")
            extraction[key] = bool(payload["faithful"])
        elif "supported" in payload:
            key = (task_id, int(payload["candidate_index"]))
            if key in attribution:
                raise DataError(f"{path}:{line_no}: duplicate label for {key}")
            attribution[key] = bool(payload["supported"])
        else:
            raise DataError(f"{path}:{line_no}: neither a faithful nor a supported label")
    return LabelSet(extraction=extraction, attribution=attribution)


def make_pseudo_labels(
    extraction_tasks: Sequence[ExtractionTask],
    attribution_tasks: Sequence[AttributionTask],
    records: Mapping[str, AttributionRecord],
) -> list[dict]:
    """Labels that agree with the pipeline exactly; the scoring self-check."""
    labels: list[dict] = []
    for task in extraction_tasks:
        for index in range(len(task.triples)):
            labels.append({"task_id": task.task_id, "triple_index": index, "faithful": True})
    for task in attribution_tasks:
        record = records.get(task.generated["triple_id"])
        if record is None:
            raise DataError(f"{task.task_id}: no attribution record for its triple")
        evidence = set(record.evidence)
        for candidate in task.candidates:
            pair = (SourceKind(candidate["source"]), candidate["rank"])
            labels.append({
                "task_id": task.task_id,
                "candidate_index": candidate["display_index"],
                "supported": pair in evidence,
            })
    return labels


# --------------------------------------------------------------- scoring


@dataclass(frozen=True)
class ExtractionScore:
    faithful: int
    total: int

    @property
    def precision(self) -> float:
        return self.faithful / self.total


@dataclass(frozen=True)
class AttributionScore:
    total: int
    per_label_agreement: Mapping[str, int]
    exact_matches: int

    def per_label_accuracy(self) -> dict[str, float]:
        return {
            label: self.per_label_agreement[label] / self.total
            for label in ATTRIBUTION_LABELS
        }

    @property
    def overall_accuracy(self) -> float:
        return self.exact_matches / self.total

    @property
    def macro_accuracy(self) -> float:
        return sum(self.per_label_accuracy().values()) / len(ATTRIBUTION_LABELS)


def score_extraction(
    tasks: Sequence[ExtractionTask], labels: LabelSet
) -> ExtractionScore:
    missing = [
        task.task_id
        for task in tasks
        if any((task.task_id, i) not in labels.extraction for i in range(len(task.triples)))
    ]
    if missing:
        raise IncompleteLabelsError("extraction labels missing", task_ids=missing)
    if not tasks:
        raise DataError("no extraction tasks to score")
    faithful = 0
    total = 0
    for task in tasks:
        for index in range(len(task.triples)):
            total += 1
            faithful += int(labels.extraction[(task.task_id, index)])
    return ExtractionScore(faithful=faithful, total=total)


def _human_supported_by(task: AttributionTask, labels: LabelSet) -> frozenset[SourceKind]:
    kinds = set()
    for candidate in task.candidates:
        if labels.attribution[(task.task_id, candidate["display_index"])]:
            kinds.add(SourceKind(candidate["source"]))
    return frozenset(kinds)


def _label_membership(supported_by: frozenset[SourceKind]) -> dict[str, bool]:
    return {
        "reference": SourceKind.REFERENCE in supported_by,
        "context": SourceKind.CONTEXT in supported_by,
        "user": SourceKind.USER_QUERY in supported_by,
        "none": not supported_by,
    }


def score_attribution(
    tasks: Sequence[AttributionTask],
    labels: LabelSet,
    records: Mapping[str, AttributionRecord],
) -> AttributionScore:
    missing = [
        task.task_id
        for task in tasks
        if any(
            (task.task_id, c["display_index"]) not in labels.attribution
            for c in task.candidates
        )
    ]
    if missing:
        raise IncompleteLabelsError("attribution labels missing", task_ids=missing)
    if not tasks:
        raise DataError("no attribution tasks to score")

    agreement = {label: 0 for label in ATTRIBUTION_LABELS}
    exact = 0
    for task in tasks:
        record = records.get(task.generated["triple_id"])
        if record is None:
            raise DataError(f"{task.task_id}: no attribution record for its triple")
        human = _human_supported_by(task, labels)
        human_membership = _label_membership(human)
        pipeline_membership = _label_membership(record.supported_by)
        for label in ATTRIBUTION_LABELS:
            agreement[label] += int(human_membership[label] == pipeline_membership[label])
        exact += int(human == record.supported_by)
    return AttributionScore(
        total=len(tasks), per_label_agreement=agreement, exact_matches=exact
    )


@dataclass(frozen=True)
class ValidationSummary:
    extraction_faithful: int
    extraction_total: int
    extraction_precision: float
    attribution_total: int
    attribution_accuracy_per_label: Mapping[str, float]
    overall_attribution_accuracy: float
    macro_attribution_accuracy: float

    def __post_init__(self) -> None:
        fractions = [
            self.extraction_precision,
            self.overall_attribution_accuracy,
            self.macro_attribution_accuracy,
            *self.attribution_accuracy_per_label.values(),
        ]
        for value in fractions:
            if not 0.0 <= value <= 1.0:
                raise StructuralError(f"accuracy {value} outside [0, 1]")
        if set(self.attribution_accuracy_per_label) != set(ATTRIBUTION_LABELS):
            raise StructuralError("per-label accuracies must cover all four labels")

    def to_dict(self) -> dict:
        return {
            "extraction_faithful": self.extraction_faithful,
            "extraction_total": self.extraction_total,
            "extraction_precision": self.extraction_precision,
            "attribution_total": self.attribution_total,
            "attribution_accuracy_per_label": dict(self.attribution_accuracy_per_label),
            "overall_attribution_accuracy": self.overall_attribution_accuracy,
            "macro_attribution_accuracy": self.macro_attribution_accuracy,
        }


def build_validation_summary(
    extraction: ExtractionScore, attribution: AttributionScore
) -> ValidationSummary:
    return ValidationSummary(
        extraction_faithful=extraction.faithful,
        extraction_total=extraction.total,
        extraction_precision=extraction.precision,
        attribution_total=attribution.total,
        attribution_accuracy_per_label=attribution.per_label_accuracy(),
        overall_attribution_accuracy=attribution.overall_accuracy,
        macro_attribution_accuracy=attribution.macro_accuracy,
    )
