from __future__ import annotations

import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from claimtrace.analysis import (
    MetricCell,
    coefficient_of_variation,
    cross_condition_stability,
    decompose_sk_variance,
    load_reported_cells,
    venn_delta,
    write_cells_table_csv,
    write_metric_deltas_csv,
)
from claimtrace.core import SourcePartition
from claimtrace.errors import DataError, StructuralError

from oracles import population_variance


# ---------------------------------------------------------------- cv

def test_cv_of_two_point_series():
    # mean 0.3, population std 0.1
    assert coefficient_of_variation([0.2, 0.4]) == pytest.approx(1 / 3)


def test_cv_of_constant_series_is_zero():
    assert coefficient_of_variation([0.5, 0.5, 0.5]) == 0.0


def test_cv_requires_two_values():
    with pytest.raises(StructuralError):
        coefficient_of_variation([0.5])


def test_cv_requires_positive_mean():
    with pytest.raises(StructuralError):
        coefficient_of_variation([0.5, -0.5])


@given(st.lists(st.floats(0.01, 10.0), min_size=2, max_size=20), st.floats(0.1, 100.0))
def test_cv_is_scale_invariant(values, scale):
    base = coefficient_of_variation(values)
    scaled = coefficient_of_variation([scale * v for v in values])
    assert scaled == pytest.approx(base, rel=1e-9)


# ---------------------------------------------------------------- decomposition

def test_decomposition_with_constant_pkp():
    # pkp never moves, so all sk variance must come from pr.
    result = decompose_sk_variance([0.5, 0.5], [0.4, 0.6])
    assert result.var_log_pkp == 0.0
    assert result.covariance_term == pytest.approx(0.0, abs=1e-15)
    assert result.share_pr == pytest.approx(1.0)
    assert result.var_log_sk == pytest.approx(population_variance([math.log(0.4), math.log(0.6)]))


def test_decomposition_excludes_unusable_cells():
    result = decompose_sk_variance([0.5, None, 0.0, 0.6], [0.4, 0.5, 0.5, 0.5])
    assert result.cell_count == 2
    assert result.excluded_cells == 2


def test_decomposition_needs_two_usable_cells():
    with pytest.raises(DataError):
        decompose_sk_variance([0.5, None], [0.4, 0.5])


def test_decomposition_rejects_misaligned_series():
    with pytest.raises(StructuralError):
        decompose_sk_variance([0.5], [0.4, 0.5])


def test_decomposition_of_constant_sk_rejected():
    # pkp and pr move in perfect opposition; log sk never changes.
    with pytest.raises(DataError):
        decompose_sk_variance([0.2, 0.4], [0.4, 0.2])


@given(
    st.lists(
        st.tuples(st.floats(0.01, 1.0), st.floats(0.01, 1.0)),
        min_size=2,
        max_size=30,
    )
)
@settings(max_examples=120)
def test_decomposition_identity(pairs):
    pkp = [p for p, _ in pairs]
    pr = [r for _, r in pairs]
    sk_logs = [math.log(p * r) for p, r in pairs]
    if population_variance(sk_logs) <= 0:
        return
    result = decompose_sk_variance(pkp, pr)
    total = result.var_log_pkp + result.var_log_pr + result.covariance_term
    assert total == pytest.approx(result.var_log_sk, abs=1e-12)
    assert result.share_pkp + result.share_pr + result.share_covariance == pytest.approx(1.0, abs=1e-9)


# ---------------------------------------------------------------- venn deltas

def _part(r, c, u, rc, none):
    total = r + c + u + rc + none
    return SourcePartition(region_counts={"r": r, "c": c, "u": u, "rc": rc, "none": none}, total=total)


def test_venn_delta_in_percentage_points():
    model = _part(r=4, c=2, u=0, rc=2, none=2)      # shares .4 .2 .0 .2 .2
    baseline = _part(r=2, c=2, u=2, rc=2, none=2)   # shares .2 .2 .2 .2 .2
    deltas = venn_delta(model, baseline)
    assert deltas["r"] == pytest.approx(20.0)
    assert deltas["u"] == pytest.approx(-20.0)
    assert deltas["c"] == pytest.approx(0.0)
    assert sum(deltas.values()) == pytest.approx(0.0, abs=1e-9)


def test_venn_delta_of_identical_partitions_is_zero():
    part = _part(r=1, c=1, u=1, rc=1, none=1)
    assert all(v == 0.0 for v in venn_delta(part, part).values())


# ---------------------------------------------------------------- reported cells

def test_reported_cells_load_and_shape():
    cells = load_reported_cells()
    assert len(cells) == 28  # seven models under four conditions
    models = {c.model for c in cells}
    assert len(models) == 7
    na_cells = [c for c in cells if c.condition == "na"]
    assert all(c.get("cu") is None for c in na_cells)
    assert all(c.get("cu") is not None for c in cells if c.condition != "na")


def test_reported_cells_are_internally_consistent():
    # Each published sk must equal pkp * pr up to rounding of the inputs.
    for cell in load_reported_cells():
        sk, pkp, pr = cell.get("sk"), cell.get("pkp"), cell.get("pr")
        assert abs(sk - pkp * pr) < 5e-4, (cell.model, cell.condition)


def test_reported_stability_ordering():
    cells = load_reported_cells()
    stability = cross_condition_stability(cells, metrics=("pkp", "pr", "sk"))
    cv_pkp = stability["pkp"]["mean_per_model_cv"]
    cv_pr = stability["pr"]["mean_per_model_cv"]
    cv_sk = stability["sk"]["mean_per_model_cv"]
    assert cv_pkp < cv_pr < cv_sk
    assert cv_pkp < 0.10


def test_reported_adapter_decomposition_shares():
    adapter_cells = [c for c in load_reported_cells() if c.family == "adapter"]
    assert len(adapter_cells) == 20
    result = decompose_sk_variance(
        [c.get("pkp") for c in adapter_cells],
        [c.get("pr") for c in adapter_cells],
    )
    assert 0.65 <= result.share_pr <= 0.85
    assert 0.09 <= result.share_pkp <= 0.29


# ---------------------------------------------------------------- emitters

def test_write_cells_table_csv(tmp_path):
    cells = [
        MetricCell("m", "na", {"f1_ref": 0.5, "prec_ref": 0.5, "rec_ref": 0.5,
                               "sk": 0.25, "pkp": 0.5, "pr": 0.5, "cu": None, "uu": 0.1}),
    ]
    out = tmp_path / "table.csv"
    write_cells_table_csv(cells, out)
    lines = out.read_text().splitlines()
    assert lines[0].startswith("model,condition,")
    assert lines[1] == "m,na,50.00,50.00,50.00,25.00,50.00,50.00,n/a,10.00"


def test_write_metric_deltas_csv(tmp_path):
    cells = [
        MetricCell("base", "na", {m: 0.5 for m in ("f1_ref", "prec_ref", "rec_ref", "sk", "pkp", "pr", "cu", "uu")}),
        MetricCell("tuned", "na", {m: 0.6 for m in ("f1_ref", "prec_ref", "rec_ref", "sk", "pkp", "pr", "cu", "uu")}),
    ]
    out = tmp_path / "deltas.csv"
    write_metric_deltas_csv(cells, "base", out)
    lines = out.read_text().splitlines()
    assert lines[0] == "metric,model,condition,delta_pp"
    tuned_rows = [l for l in lines[1:] if ",tuned," in l]
    assert all(l.endswith("10.00") for l in tuned_rows)
    base_rows = [l for l in lines[1:] if ",base," in l]
    assert all(l.endswith("0.00") for l in base_rows)


def test_write_metric_deltas_requires_known_baseline(tmp_path):
    cells = [MetricCell("m", "na", {})]
    with pytest.raises(DataError):
        write_metric_deltas_csv(cells, "missing", tmp_path / "d.csv")
