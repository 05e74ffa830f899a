"""Attribution metrics over judged triples.

All ratios are reported together with their integer numerators and
denominators, so every number in a report can be audited from counts.
A ratio whose denominator is zero is *undefined* and carried as None,
never coerced to 0. Aggregation is micro-averaged: counts are summed
across instances and ratios recomputed, which keeps the
``sk == pkp * pr`` identity intact at every scope.

Metric glossary
---------------
prec_ref   fraction of generated triples supported by the reference
rec_ref    fraction of reference triples matched by supported generated ones
f1_ref     harmonic mean of the two above
cu         context utilisation: fraction supported by retrieved context
uu         query utilisation: fraction supported by the user query
pr         parametric ratio: fraction supported by neither context nor query
pkp        parametric knowledge precision: of those, the fraction that is
           nevertheless correct (reference-supported)
sk         supported knowledge: reference-supported triples that lean on
           neither context nor query, over all generated triples
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import CONDITION_NA, CONDITIONS, AttributionRecord, SourceKind
from .errors import DataError, StructuralError

SCOPE_INSTANCE = "instance"
SCOPE_AGGREGATE = "aggregate"

# Fixed column order for the wide per-cell report.
TABLE_COLUMNS = ("f1_ref", "prec_ref", "rec_ref", "sk", "pkp", "pr", "cu", "uu")


@dataclass(frozen=True)
class MetricCounts:
    """Integer tallies behind every ratio."""

    generated_total: int
    reference_total: int
    supported_ref: int
    supported_ctx: int
    supported_user: int
    context_or_user: int
    parametric_total: int
    parametric_fact: int
    any_source: int

    def __post_init__(self) -> None:
        if self.generated_total < 0 or self.reference_total < 0:
            raise StructuralError("negative totals")
        if self.parametric_total + self.context_or_user != self.generated_total:
            raise StructuralError("parametric and context-or-user counts must cover all triples")
        if self.parametric_fact > min(self.supported_ref, self.parametric_total):
            raise StructuralError("parametric_fact exceeds its bounding sets")

    def to_dict(self) -> dict:
        return {
            "generated_total": self.generated_total,
            "reference_total": self.reference_total,
            "supported_ref": self.supported_ref,
            "supported_ctx": self.supported_ctx,
            "supported_user": self.supported_user,
            "context_or_user": self.context_or_user,
            "parametric_total": self.parametric_total,
            "parametric_fact": self.parametric_fact,
            "any_source": self.any_source,
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "MetricCounts":
        return cls(**{k: int(payload[k]) for k in (
            "generated_total", "reference_total", "supported_ref", "supported_ctx",
            "supported_user", "context_or_user", "parametric_total", "parametric_fact",
            "any_source",
        )})


@dataclass(frozen=True)
class MetricsReport:
    """Ratios for one instance or one aggregated (model, condition) cell."""

    model_tag: str
    condition: str
    scope: str
    counts: MetricCounts
    prec_ref: float | None
    rec_ref: float | None
    f1_ref: float | None
    cu: float | None
    uu: float | None
    pr: float | None
    pkp: float | None
    sk: float | None
    any_source_rate: float | None
    instance_ids: tuple[str, ...] = ()

    def value(self, metric: str) -> float | None:
        if metric not in TABLE_COLUMNS and metric != "any_source_rate":
            raise StructuralError(f"unknown metric {metric!r}")
        return getattr(self, metric)

    def to_dict(self) -> dict:
        out = {
            "model_tag": self.model_tag,
            "condition": self.condition,
            "scope": self.scope,
            "counts": self.counts.to_dict(),
            "any_source_rate": self.any_source_rate,
        }
        for name in TABLE_COLUMNS:
            out[name] = getattr(self, name)
        if self.instance_ids:
            out["instance_ids"] = list(self.instance_ids)
        return out


def _ratio(numerator: int, denominator: int) -> float | None:
    # Zero denominator means the quantity is undefined, not zero.
    if denominator == 0:
        return None
    return numerator / denominator


def harmonic_f1(precision: float | None, recall: float | None) -> float | None:
    """Harmonic mean; 0 when either side is 0, undefined when both are."""
    if precision is None and recall is None:
        return None
    if precision == 0.0 or recall == 0.0:
        return 0.0
    if precision is None or recall is None:
        return None
    return 2.0 * precision * recall / (precision + recall)


def counts_from_records(
    records: Sequence[AttributionRecord],
    generated_total: int,
    reference_total: int,
) -> MetricCounts:
    seen: set[str] = set()
    supported_ref = supported_ctx = supported_user = 0
    context_or_user = parametric_fact = any_source = 0
    for record in records:
        if record.triple_id in seen:
            raise StructuralError(f"duplicate attribution for triple {record.triple_id}")
        seen.add(record.triple_id)
        in_ref = SourceKind.REFERENCE in record.supported_by
        in_ctx = SourceKind.CONTEXT in record.supported_by
        in_user = SourceKind.USER_QUERY in record.supported_by
        supported_ref += in_ref
        supported_ctx += in_ctx
        supported_user += in_user
        context_or_user += in_ctx or in_user
        parametric_fact += in_ref and not (in_ctx or in_user)
        any_source += bool(record.supported_by)
    if len(records) != generated_total:
        raise StructuralError(
            f"{len(records)} attribution records for {generated_total} generated triples"
        )
    return MetricCounts(
        generated_total=generated_total,
        reference_total=reference_total,
        supported_ref=supported_ref,
        supported_ctx=supported_ctx,
        supported_user=supported_user,
        context_or_user=context_or_user,
        parametric_total=generated_total - context_or_user,
        parametric_fact=parametric_fact,
        any_source=any_source,
    )


def report_from_counts(
    counts: MetricCounts,
    condition: str,
    model_tag: str = "",
    scope: str = SCOPE_INSTANCE,
    instance_ids: tuple[str, ...] = (),
) -> MetricsReport:
    if condition not in CONDITIONS:
        raise StructuralError(f"unknown condition {condition!r}")
    prec = _ratio(counts.supported_ref, counts.generated_total)
    rec = _ratio(counts.supported_ref, counts.reference_total)
    # Context utilisation is meaningless when no context was offered at all,
    # regardless of what the counts would divide to.
    cu = None if condition == CONDITION_NA else _ratio(counts.supported_ctx, counts.generated_total)
    return MetricsReport(
        model_tag=model_tag,
        condition=condition,
        scope=scope,
        counts=counts,
        prec_ref=prec,
        rec_ref=rec,
        f1_ref=harmonic_f1(prec, rec),
        cu=cu,
        uu=_ratio(counts.supported_user, counts.generated_total),
        pr=_ratio(counts.parametric_total, counts.generated_total),
        pkp=_ratio(counts.parametric_fact, counts.parametric_total),
        sk=_ratio(counts.parametric_fact, counts.generated_total),
        any_source_rate=_ratio(counts.any_source, counts.generated_total),
        instance_ids=instance_ids,
    )


def instance_metrics(
    records: Sequence[AttributionRecord],
    generated_total: int,
    reference_total: int,
    condition: str,
    model_tag: str = "",
    instance_id: str = "",
) -> MetricsReport:
    """Compute the full metric set for one judged instance.

    ``reference_total`` must be positive: an instance without any reference
    triples cannot anchor recall and is a data problem upstream.
    """
    if reference_total <= 0:
        raise DataError(f"instance {instance_id or '?'} has no reference triples")
    counts = counts_from_records(records, generated_total, reference_total)
    ids = (instance_id,) if instance_id else ()
    return report_from_counts(counts, condition, model_tag, SCOPE_INSTANCE, ids)


def aggregate(reports: Sequence[MetricsReport]) -> MetricsReport:
    """Micro-average instance reports within one (model, condition) cell.

    Counts are summed and every ratio recomputed from the sums, so the
    multiplicative sk identity survives aggregation. Instances where a
    ratio was undefined simply contribute zero to its denominator.
    """
    if not reports:
        raise StructuralError("cannot aggregate zero reports")
    cells = {(r.model_tag, r.condition) for r in reports}
    if len(cells) > 1:
        raise StructuralError(f"aggregate spans multiple cells: {sorted(cells)}")
    model_tag, condition = next(iter(cells))
    totals = {name: 0 for name in (
        "generated_total", "reference_total", "supported_ref", "supported_ctx",
        "supported_user", "context_or_user", "parametric_total", "parametric_fact",
        "any_source",
    )}
    instance_ids: list[str] = []
    for report in reports:
        for name in totals:
            totals[name] += getattr(report.counts, name)
        instance_ids.extend(report.instance_ids)
    counts = MetricCounts(**totals)
    return report_from_counts(
        counts, condition, model_tag, SCOPE_AGGREGATE, tuple(instance_ids)
    )


def group_into_cells(reports: Iterable[MetricsReport]) -> list[MetricsReport]:
    """Aggregate a mixed bag of instance reports into per-cell reports."""
    by_cell: dict[tuple[str, str], list[MetricsReport]] = {}
    for report in reports:
        by_cell.setdefault((report.model_tag, report.condition), []).append(report)
    ordered = sorted(by_cell, key=lambda mc: (mc[0], CONDITIONS.index(mc[1])))
    return [aggregate(by_cell[cell]) for cell in ordered]


def format_cell_value(value: float | None) -> str:
    """Render one table value in percentage points, or n/a when undefined."""
    if value is None:
        return "n/a"
    return f"{100.0 * value:.2f}"


def write_cells_csv(cells: Sequence[MetricsReport], path: Path) -> None:
    """Write the wide per-cell table: one row per model and condition."""
    rows = sorted(cells, key=lambda c: (c.model_tag, CONDITIONS.index(c.condition)))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("model", "condition") + TABLE_COLUMNS)
        for cell in rows:
            writer.writerow(
                [cell.model_tag, cell.condition]
                + [format_cell_value(cell.value(name)) for name in TABLE_COLUMNS]
            )


def write_reports_jsonl(reports: Sequence[MetricsReport], path: Path) -> None:
    with path.open("w") as fh:
        for report in reports:
            fh.write(json.dumps(report.to_dict(), sort_keys=True) + "\n")
