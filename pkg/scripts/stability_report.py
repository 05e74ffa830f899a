#!/usr/bin/env python3
"""Stability analysis over a table of (model, condition) metric cells.

Defaults to the packaged externally-reported cells; pass --csv to analyze
a table produced by the metrics stage instead (same column layout, with
a leading family column being optional). Prints per-metric coefficients
of variation across retrieval conditions and the log-space variance
split of sk into its pkp and pr components.

    python3 scripts/stability_report.py
    python3 scripts/stability_report.py --csv runs/myrun/metrics_table.csv
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from claimtrace.analysis import (  # noqa: E402
    cross_condition_stability,
    decompose_sk_variance,
    load_reported_cells,
)
from claimtrace.errors import DataError  # noqa: E402


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--csv", type=Path, default=None,
                        help="cell table to analyze (default: packaged reported cells)")
    parser.add_argument("--family", default=None,
                        help="restrict the variance split to one model family")
    args = parser.parse_args()

    cells = load_reported_cells(args.csv)
    source = args.csv or "packaged reported cells"
    print(f"{len(cells)} cells from {source}\n")

    stability = cross_condition_stability(cells)
    print(f"{'metric':<8} {'mean per-model cv':>18} {'pooled cv':>10} {'models':>7}")
    for metric, stats in stability.items():
        print(f"{metric:<8} {stats['mean_per_model_cv']:>18.4f} "
              f"{stats['pooled_cv']:>10.4f} {stats['models']:>7d}")

    split_cells = cells
    if args.family is not None:
        split_cells = [c for c in cells if c.family == args.family]
        if not split_cells:
            print(f"\nno cells with family {args.family!r}", file=sys.stderr)
            return 1
    try:
        parts = decompose_sk_variance(
            [c.get("pkp") for c in split_cells], [c.get("pr") for c in split_cells]
        )
    except DataError as exc:
        print(f"\nvariance split unavailable: {exc}", file=sys.stderr)
        return 1
    label = args.family or "all"
    print(f"\nvar(log sk) split over {parts.cell_count} cells (family: {label})")
    print(f"  share from pkp        {parts.share_pkp:>7.1%}")
    print(f"  share from pr         {parts.share_pr:>7.1%}")
    print(f"  share from covariance {parts.share_covariance:>7.1%}")
    if parts.excluded_cells:
        print(f"  ({parts.excluded_cells} cells excluded: undefined or nonpositive factors)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
