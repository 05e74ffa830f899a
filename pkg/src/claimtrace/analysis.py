"""Cross-condition analysis of attribution metric cells.

Works on per-cell (model x condition) metric values: stability of each
metric across retrieval conditions, a log-space variance decomposition of
sk into its pkp and pr factors, and Venn-region deltas between models.

Variance conventions: population variance throughout (these cells are the
whole population of interest, not a sample), natural log for the
decomposition, and cells where a factor is zero or undefined are excluded
and counted rather than fudged with epsilons.

``data/reported_cells.csv`` carries externally reported evaluation results
(percentage points) used as a consistency fixture; ``load_reported_cells``
converts them to fractions.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import CONDITIONS, SourcePartition, VENN_REGIONS
from .errors import DataError, StructuralError
from .metrics import TABLE_COLUMNS, MetricsReport, format_cell_value

_VAR_TOLERANCE = 1e-12


@dataclass(frozen=True)
class MetricCell:
    """One (model, condition) cell of metric values, fractions in [0, 1]."""

    model: str
    condition: str
    values: Mapping[str, float | None]
    family: str = ""

    def get(self, metric: str) -> float | None:
        return self.values.get(metric)


@dataclass(frozen=True)
class VarianceDecomposition:
    """Var(log sk) split into factor variances and the covariance term."""

    var_log_sk: float
    var_log_pkp: float
    var_log_pr: float
    covariance_term: float
    share_pkp: float
    share_pr: float
    share_covariance: float
    cell_count: int
    excluded_cells: int

    def to_dict(self) -> dict:
        return {
            "var_log_sk": self.var_log_sk,
            "var_log_pkp": self.var_log_pkp,
            "var_log_pr": self.var_log_pr,
            "covariance_term": self.covariance_term,
            "share_pkp": self.share_pkp,
            "share_pr": self.share_pr,
            "share_covariance": self.share_covariance,
            "cell_count": self.cell_count,
            "excluded_cells": self.excluded_cells,
        }


def _mean(values: Sequence[float]) -> float:
    return sum(values) / len(values)


def _population_variance(values: Sequence[float]) -> float:
    mu = _mean(values)
    return sum((v - mu) ** 2 for v in values) / len(values)


def _population_covariance(xs: Sequence[float], ys: Sequence[float]) -> float:
    mx, my = _mean(xs), _mean(ys)
    return sum((x - mx) * (y - my) for x, y in zip(xs, ys)) / len(xs)


def coefficient_of_variation(values: Sequence[float]) -> float:
    """Population standard deviation over the mean.

    Requires at least two values and a positive mean; a CV of a
    non-positive series has no sensible reading here.
    """
    if len(values) < 2:
        raise StructuralError("coefficient of variation needs at least two values")
    mu = _mean(values)
    if mu <= 0:
        raise StructuralError(f"coefficient of variation needs a positive mean, got {mu}")
    return math.sqrt(_population_variance(values)) / mu


def decompose_sk_variance(
    pkp_values: Sequence[float | None], pr_values: Sequence[float | None]
) -> VarianceDecomposition:
    """Split Var(log sk) into Var(log pkp) + Var(log pr) + 2 Cov.

    The identity is exact because log sk = log pkp + log pr cell by cell.
    Cells where either factor is undefined or not strictly positive cannot
    enter log space; they are dropped and reported in ``excluded_cells``.
    """
    if len(pkp_values) != len(pr_values):
        raise StructuralError("pkp and pr series must be aligned")
    log_pkp: list[float] = []
    log_pr: list[float] = []
    excluded = 0
    for pkp, pr in zip(pkp_values, pr_values):
        if pkp is None or pr is None or pkp <= 0 or pr <= 0:
            excluded += 1
            continue
        log_pkp.append(math.log(pkp))
        log_pr.append(math.log(pr))
    if len(log_pkp) < 2:
        raise DataError(f"variance decomposition needs >= 2 usable cells, have {len(log_pkp)}")
    log_sk = [a + b for a, b in zip(log_pkp, log_pr)]
    var_sk = _population_variance(log_sk)
    var_pkp = _population_variance(log_pkp)
    var_pr = _population_variance(log_pr)
    cov_term = 2.0 * _population_covariance(log_pkp, log_pr)
    if var_sk <= 0:
        raise DataError("log sk series is constant; shares are undefined")
    return VarianceDecomposition(
        var_log_sk=var_sk,
        var_log_pkp=var_pkp,
        var_log_pr=var_pr,
        covariance_term=cov_term,
        share_pkp=var_pkp / var_sk,
        share_pr=var_pr / var_sk,
        share_covariance=cov_term / var_sk,
        cell_count=len(log_pkp),
        excluded_cells=excluded,
    )


def venn_delta(model: SourcePartition, baseline: SourcePartition) -> dict[str, float]:
    """Per-region share difference (model minus baseline) in percentage points."""
    model_props = model.proportions()
    base_props = baseline.proportions()
    return {
        region: 100.0 * (model_props[region] - base_props[region])
        for region in VENN_REGIONS
    }


def _series_by_model(
    cells: Sequence[MetricCell], metric: str
) -> dict[str, list[float]]:
    by_model: dict[str, list[float]] = {}
    for cell in sorted(cells, key=lambda c: (c.model, CONDITIONS.index(c.condition))):
        value = cell.get(metric)
        if value is None:
            continue
        by_model.setdefault(cell.model, []).append(value)
    return by_model


def cross_condition_stability(
    cells: Sequence[MetricCell], metrics: Sequence[str] = ("pkp", "pr", "sk")
) -> dict[str, dict[str, float]]:
    """How much each metric moves when only the retrieval condition changes.

    For every model, the CV of the metric across its conditions; reported
    as the mean of those per-model CVs plus the pooled CV over all cells.
    The per-model mean is the interesting number: pooling would mostly
    measure the gap between models, not condition sensitivity.
    """
    out: dict[str, dict[str, float]] = {}
    for metric in metrics:
        by_model = _series_by_model(cells, metric)
        per_model = {
            model: coefficient_of_variation(series)
            for model, series in by_model.items()
            if len(series) >= 2
        }
        if not per_model:
            raise DataError(f"no model has >= 2 defined cells for {metric!r}")
        pooled = [v for series in by_model.values() for v in series]
        out[metric] = {
            "mean_per_model_cv": _mean(list(per_model.values())),
            "pooled_cv": coefficient_of_variation(pooled),
            "models": len(per_model),
        }
    return out


def load_reported_cells(path: Path | None = None) -> list[MetricCell]:
    """Load the packaged externally-reported results as fraction-valued cells."""
    if path is None:
        ref = resources.files("claimtrace.data").joinpath("reported_cells.csv")
        text = ref.read_text()
    else:
        text = Path(path).read_text()
    cells: list[MetricCell] = []
    reader = csv.DictReader(text.splitlines())
    for row in reader:
        values: dict[str, float | None] = {}
        for metric in TABLE_COLUMNS:
            raw = row[metric].strip()
            values[metric] = None if raw == "n/a" else float(raw) / 100.0
        if row["condition"] not in CONDITIONS:
            raise DataError(f"reported cells: unknown condition {row['condition']!r}")
        cells.append(
            MetricCell(
                model=row["model"],
                condition=row["condition"],
                values=values,
                family=row.get("family", ""),
            )
        )
    if not cells:
        raise DataError("reported cells file is empty")
    return cells


def cells_from_reports(reports: Iterable[MetricsReport]) -> list[MetricCell]:
    return [
        MetricCell(
            model=report.model_tag,
            condition=report.condition,
            values={name: report.value(name) for name in TABLE_COLUMNS},
        )
        for report in reports
    ]


def write_metric_deltas_csv(
    cells: Sequence[MetricCell], baseline_model: str, path: Path
) -> None:
    """Per-metric deltas against a baseline model, x100 (percentage points)."""
    baseline = {c.condition: c for c in cells if c.model == baseline_model}
    if not baseline:
        raise DataError(f"baseline model {baseline_model!r} has no cells")
    ordered = sorted(
        (c for c in cells),
        key=lambda c: (c.model, CONDITIONS.index(c.condition)),
    )
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("metric", "model", "condition", "delta_pp"))
        for metric in TABLE_COLUMNS:
            for cell in ordered:
                base_cell = baseline.get(cell.condition)
                if base_cell is None:
                    continue
                value, base = cell.get(metric), base_cell.get(metric)
                delta = "n/a" if value is None or base is None else f"{100.0 * (value - base):.2f}"
                writer.writerow((metric, cell.model, cell.condition, delta))


def write_venn_csv(
    partitions: Mapping[tuple[str, str], SourcePartition],
    baseline_model: str,
    path: Path,
) -> None:
    """Region counts and shares per (model, condition), with baseline deltas."""
    baseline_parts = {
        condition: part
        for (model, condition), part in partitions.items()
        if model == baseline_model
    }
    ordered = sorted(partitions, key=lambda mc: (mc[0], CONDITIONS.index(mc[1])))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("model", "condition", "region", "count", "share", "delta_pp_vs_baseline"))
        for model, condition in ordered:
            part = partitions[(model, condition)]
            shares = part.proportions()
            base = baseline_parts.get(condition)
            deltas = venn_delta(part, base) if base is not None else None
            for region in VENN_REGIONS:
                delta = "n/a" if deltas is None else f"{deltas[region]:.2f}"
                writer.writerow(
                    (model, condition, region, part.region_counts[region],
                     f"{shares[region]:.4f}", delta)
                )


def write_summary_json(
    stability: Mapping[str, Mapping[str, float]],
    decomposition: VarianceDecomposition | None,
    path: Path,
) -> None:
    payload: dict = {"stability": {k: dict(v) for k, v in stability.items()}}
    payload["decomposition"] = decomposition.to_dict() if decomposition else None
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_cells_table_csv(cells: Sequence[MetricCell], path: Path) -> None:
    """Same wide table shape as the metrics stage, from plain cells."""
    ordered = sorted(cells, key=lambda c: (c.model, CONDITIONS.index(c.condition)))
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("model", "condition") + TABLE_COLUMNS)
        for cell in ordered:
            writer.writerow(
                [cell.model, cell.condition]
                + [format_cell_value(cell.get(name)) for name in TABLE_COLUMNS]
            )
