"""Surface-overlap baselines and external score import.

These scores exist so attribution metrics can be compared against the
n-gram overlap family on the same instances. Tokenisation is deliberately
blunt: lowercase, split on non-alphanumeric runs, no stemming, no stopword
list. Anything cleverer belongs to the model under test, not the ruler.
"""
from __future__ import annotations

import csv
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

from .errors import DataError
from .metrics import harmonic_f1

_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class RougeScore:
    variant: str
    precision: float
    recall: float
    f1: float


def _score(variant: str, overlap: int, candidate_len: int, reference_len: int) -> RougeScore:
    precision = overlap / candidate_len if candidate_len else 0.0
    recall = overlap / reference_len if reference_len else 0.0
    f1 = harmonic_f1(precision, recall) or 0.0
    return RougeScore(variant=variant, precision=precision, recall=recall, f1=f1)


def rouge1(candidate: str, reference: str) -> RougeScore:
    """Unigram overlap with clipped counts (each reference token matches once)."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    ref_counts = Counter(ref)
    cand_counts = Counter(cand)
    overlap = sum(min(cand_counts[tok], ref_counts[tok]) for tok in cand_counts)
    return _score("rouge1", overlap, len(cand), len(ref))


def _lcs_length(a: list[str], b: list[str]) -> int:
    # Classic O(len(a) * len(b)) dynamic program over one rolling row.
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for tok_a in a:
        current = [0] * (len(b) + 1)
        for j, tok_b in enumerate(b, start=1):
            if tok_a == tok_b:
                current[j] = previous[j - 1] + 1
            else:
                current[j] = max(previous[j], current[j - 1])
        previous = current
    return previous[-1]


def rougeL(candidate: str, reference: str) -> RougeScore:
    """Longest-common-subsequence overlap over the same tokenisation."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    lcs = _lcs_length(cand, ref)
    return _score("rougeL", lcs, len(cand), len(ref))


def import_external_scores(path: Path) -> dict[tuple[str, str], float]:
    """Read externally computed per-instance scores.

    Expected CSV columns: instance_id, metric_name, value. Duplicate
    (instance, metric) rows are a data error rather than a silent overwrite.
    """
    scores: dict[tuple[str, str], float] = {}
    with Path(path).open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"instance_id", "metric_name", "value"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise DataError(f"{path}: expected columns {sorted(required)}")
        for line_no, row in enumerate(reader, start=2):
            key = (row["instance_id"], row["metric_name"])
            if key in scores:
                raise DataError(f"{path}:{line_no}: duplicate score for {key}")
            try:
                scores[key] = float(row["value"])
            except ValueError:
                raise DataError(f"{path}:{line_no}: non-numeric value {row['value']!r}")
    return scores
