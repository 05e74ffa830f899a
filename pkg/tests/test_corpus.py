from __future__ import annotations

import json

import pytest

from claimtrace.corpus import (
    Chunk,
    Datapoint,
    assemble_condition,
    build_chunk_pool,
    build_test_matrix,
    chunk_seed,
    read_datapoints,
    read_instances,
    whitespace_tokenizer,
    write_instances,
    write_variant_manifests,
)
from claimtrace.errors import DataError, StructuralError


def _dp(i: int, split: str = "test", seed_tokens: int = 300) -> Datapoint:
    # Distinct vocabulary per datapoint so chunk texts never collide.
    seed = " ".join(f"seedword{i}n{j}" for j in range(seed_tokens))
    return Datapoint(
        instance_id=f"dp-{i:03d}",
        user_query=f"Design project {i} with target {i * 3} W.",
        reference=f"Project {i} delivers {i * 3} W as specified.",
        truth_seed=seed,
        split=split,
    )


# ---------------------------------------------------------------- chunking

def test_chunking_packs_whole_tokens_greedily():
    # 300 tokens at 128 per chunk: 128 + 128 + 44.
    chunks = chunk_seed(" ".join(f"t{i}" for i in range(300)), "dp-1")
    assert [c.token_count for c in chunks] == [128, 128, 44]
    assert chunks[0].text.split()[0] == "t0"
    assert chunks[1].text.split()[0] == "t128"
    assert chunks[2].text.split()[-1] == "t299"
    assert [c.index for c in chunks] == [0, 1, 2]


def test_chunking_short_seed_single_chunk():
    chunks = chunk_seed(" ".join(f"t{i}" for i in range(50)), "dp-1")
    assert [c.token_count for c in chunks] == [50]


def test_chunking_drops_overflow_beyond_chunk_allowance():
    # 500 tokens: three full chunks, 116 tokens dropped.
    chunks = chunk_seed(" ".join(f"t{i}" for i in range(500)), "dp-1")
    assert [c.token_count for c in chunks] == [128, 128, 128]
    assert chunks[-1].text.split()[-1] == "t383"


def test_chunking_respects_custom_budget():
    chunks = chunk_seed("a b c d e", "dp-1", chunk_tokens=2, max_chunks=2)
    assert [c.text for c in chunks] == ["a b", "c d"]


def test_chunking_rejects_nonpositive_budget():
    with pytest.raises(StructuralError):
        chunk_seed("a", "dp-1", chunk_tokens=0)


# ---------------------------------------------------------------- conditions

@pytest.fixture
def small_corpus():
    datapoints = [_dp(i) for i in range(4)]
    pool = build_chunk_pool(datapoints)
    return datapoints, pool


def test_na_condition_has_no_context(small_corpus):
    datapoints, pool = small_corpus
    instance, selected = assemble_condition(datapoints[0], "na", pool, global_seed=7)
    assert instance.context_chunks == ()
    assert selected == []
    assert instance.condition == "na"
    assert instance.instance_id == "dp-000--na"


def test_relevant_condition_uses_own_chunks_in_order(small_corpus):
    datapoints, pool = small_corpus
    instance, selected = assemble_condition(datapoints[0], "relevant", pool, global_seed=7)
    own = chunk_seed(datapoints[0].truth_seed, datapoints[0].instance_id)
    assert [c.text for c in selected] == [c.text for c in own]
    assert instance.context_chunks == tuple(c.text for c in own)


def test_irrelevant_condition_excludes_own_chunks(small_corpus):
    datapoints, pool = small_corpus
    for seed in range(20):
        _, selected = assemble_condition(datapoints[0], "irrelevant", pool, global_seed=seed)
        assert len(selected) == 3
        assert all(c.origin_instance_id != "dp-000" for c in selected)
        keys = {(c.origin_instance_id, c.index) for c in selected}
        assert len(keys) == 3  # no duplicate chunks


def test_noisy_condition_mixes_three_distinct_chunks(small_corpus):
    datapoints, pool = small_corpus
    saw_own = False
    for seed in range(40):
        _, selected = assemble_condition(datapoints[0], "noisy", pool, global_seed=seed)
        assert len(selected) == 3
        keys = {(c.origin_instance_id, c.index) for c in selected}
        assert len(keys) == 3
        own_count = sum(1 for c in selected if c.origin_instance_id == "dp-000")
        assert own_count <= 2  # at most the mixed slots can be relevant
        saw_own = saw_own or own_count > 0
    assert saw_own  # the relevant arm of the coin does fire across seeds


def test_assembly_is_deterministic(small_corpus):
    datapoints, pool = small_corpus
    for condition in ("irrelevant", "noisy"):
        first, sel_a = assemble_condition(datapoints[1], condition, pool, global_seed=13)
        second, sel_b = assemble_condition(datapoints[1], condition, pool, global_seed=13)
        assert first == second
        assert sel_a == sel_b


def test_assembly_differs_across_datapoints_under_one_seed(small_corpus):
    # Streams are derived per datapoint; two datapoints under the same
    # global seed must not mirror each other's draws.
    datapoints, pool = small_corpus
    _, sel_a = assemble_condition(datapoints[0], "irrelevant", pool, global_seed=13)
    _, sel_b = assemble_condition(datapoints[1], "irrelevant", pool, global_seed=13)
    assert [c.text for c in sel_a] != [c.text for c in sel_b]


def test_small_pool_is_a_data_error():
    datapoints = [_dp(0), _dp(1, seed_tokens=40)]  # one foreign chunk only
    pool = build_chunk_pool(datapoints)
    with pytest.raises(DataError):
        assemble_condition(datapoints[0], "irrelevant", pool, global_seed=0)


# ---------------------------------------------------------------- matrix

def test_matrix_size_is_datapoints_times_conditions():
    datapoints = [_dp(i, seed_tokens=60) for i in range(10)]
    instances, provenance = build_test_matrix(datapoints, global_seed=3)
    assert len(instances) == 40
    assert len(provenance) == 40
    assert len({i.instance_id for i in instances}) == 40


def test_matrix_subsample_applies_all_conditions_to_one_draw():
    datapoints = [_dp(i, seed_tokens=60) for i in range(10)]
    instances, _ = build_test_matrix(
        datapoints, global_seed=3, subsample_per_condition=4
    )
    assert len(instances) == 16
    by_condition: dict[str, set[str]] = {}
    for inst in instances:
        base_id = inst.instance_id.rsplit("--", 1)[0]
        by_condition.setdefault(inst.condition, set()).add(base_id)
    # Paired design: every condition covers the same subsampled datapoints.
    assert len(set(map(frozenset, by_condition.values()))) == 1


def test_matrix_subsample_larger_than_corpus_rejected():
    datapoints = [_dp(i, seed_tokens=60) for i in range(3)]
    with pytest.raises(DataError):
        build_test_matrix(datapoints, subsample_per_condition=5)


def test_matrix_rejects_duplicate_ids():
    dp = _dp(0, seed_tokens=60)
    with pytest.raises(DataError):
        build_test_matrix([dp, dp])


def test_matrix_serialization_is_byte_identical(tmp_path):
    datapoints = [_dp(i) for i in range(5)]
    paths = []
    for run in ("one", "two"):
        instances, _ = build_test_matrix(datapoints, global_seed=11)
        path = tmp_path / f"instances_{run}.jsonl"
        write_instances(instances, path)
        paths.append(path)
    assert paths[0].read_bytes() == paths[1].read_bytes()
    # And the file round-trips losslessly.
    assert read_instances(paths[0]) == build_test_matrix(datapoints, global_seed=11)[0]


def test_matrix_changes_with_seed():
    datapoints = [_dp(i) for i in range(5)]
    a, _ = build_test_matrix(datapoints, global_seed=1)
    b, _ = build_test_matrix(datapoints, global_seed=2)
    assert a != b


# ---------------------------------------------------------------- io

def test_read_datapoints_roundtrip(tmp_path):
    path = tmp_path / "corpus.jsonl"
    rows = [
        {"id": "dp-1", "user_query": "q1", "reference": "r1", "context_seed": "s1", "split": "test"},
        {"id": "dp-2", "user_query": "q2", "reference": "r2", "context_seed": "s2", "split": "train"},
    ]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    datapoints = read_datapoints(path)
    assert [dp.instance_id for dp in datapoints] == ["dp-1", "dp-2"]
    assert datapoints[1].split == "train"


def test_read_datapoints_rejects_duplicates(tmp_path):
    path = tmp_path / "corpus.jsonl"
    row = {"id": "dp-1", "user_query": "q", "reference": "r", "context_seed": "s", "split": "test"}
    path.write_text(json.dumps(row) + "\n" + json.dumps(row) + "\n")
    with pytest.raises(DataError):
        read_datapoints(path)


def test_read_datapoints_rejects_bad_json(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text("{not json\n")
    with pytest.raises(DataError):
        read_datapoints(path)


def test_read_datapoints_rejects_missing_keys(tmp_path):
    path = tmp_path / "corpus.jsonl"
    path.write_text(json.dumps({"id": "dp-1", "user_query": "q"}) + "\n")
    with pytest.raises(DataError):
        read_datapoints(path)


def test_variant_manifests_cover_train_split_only(tmp_path):
    datapoints = [_dp(0, split="train"), _dp(1, split="train"), _dp(2, split="test")]
    written = write_variant_manifests(datapoints, tmp_path, global_seed=5)
    names = sorted(p.name for p in written)
    assert names == [
        "variant_pa_rag.json", "variant_raft.json", "variant_w_all.json",
        "variant_w_relevant.json", "variant_wo_context.json",
    ]
    raft = json.loads((tmp_path / "variant_raft.json").read_text())
    assert raft["conditions"] == ["noisy", "irrelevant"]
    assert len(raft["entries"]) == 4  # two train datapoints x two conditions
    assert all(e["datapoint_id"] != "dp-002" for e in raft["entries"])
    w_all = json.loads((tmp_path / "variant_w_all.json").read_text())
    assert len(w_all["entries"]) == 8
