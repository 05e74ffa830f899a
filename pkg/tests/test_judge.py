"""Grounding prompt rendering, verdict parsing, and the batch retry ladder."""
from __future__ import annotations

import json

import pytest

from claimtrace.config import EndpointConfig
from claimtrace.core import SourceKind, Triple
from claimtrace.errors import JudgeError, StructuralError
from claimtrace.gateway import ChatResult, LLMClient
from claimtrace.judge import (
    AttributionRow,
    BatchItem,
    MicroBatch,
    attribute_instance,
    build_micro_batches,
    parse_verdicts,
    read_attributions,
    render_grounding_prompt,
    verdicts_to_records,
    write_attributions,
)
from claimtrace.mockserver import MockFixture, MockLLMServer
from claimtrace.promptstore import prompt_text
from claimtrace.retriever import Candidate, CandidateSet

from oracles import supported_by_exact_match

U = SourceKind.USER_QUERY
C = SourceKind.CONTEXT
R = SourceKind.REFERENCE

HEADER = prompt_text("grounding_header.txt")
FORMAT = prompt_text("grounding_format.txt")

INSTANCE = "inst--relevant"


def triple(subject: str, predicate: str, obj: str, source: SourceKind) -> Triple:
    return Triple.make(subject, predicate, obj, source, INSTANCE)


def candidate_set(generated: Triple, entries) -> CandidateSet:
    """entries: (source, triple, similarity); ranks assigned per source block."""
    ranks = {U: 0, C: 0, R: 0}
    candidates = []
    for source in (U, C, R):
        for entry_source, entry_triple, similarity in entries:
            if entry_source is source:
                ranks[source] += 1
                candidates.append(
                    Candidate(source, entry_triple.id, similarity, ranks[source])
                )
    return CandidateSet(generated.id, tuple(candidates))


# fixed cast used across tests
G1 = triple("system", "shall deliver", "20 W", SourceKind.GENERATED)
G2 = triple("adc", "shall sample at", "1.6 GSPS", SourceKind.GENERATED)
G3 = triple("user need", "asks for", "efficiency data", SourceKind.GENERATED)
G4 = triple("cooling loop", "uses", "glycol", SourceKind.GENERATED)
U1 = triple("user need", "asks for", "efficiency data", U)
C1 = triple("system", "shall deliver", "20 W", C)
R1 = triple("system", "shall deliver", "20 W", R)
R2 = triple("adc", "shall sample at", "1.6 GSPS", R)

ALL_TRIPLES = {t.id: t for t in (G1, G2, G3, G4, U1, C1, R1, R2)}

CS1 = candidate_set(G1, [(U, U1, 0.30), (C, C1, 0.99), (R, R1, 0.99), (R, R2, 0.20)])
CS2 = candidate_set(G2, [(C, C1, 0.40), (R, R2, 0.95), (R, R1, 0.30)])
CS3 = candidate_set(G3, [(U, U1, 0.90)])
CS4 = candidate_set(G4, [(U, U1, 0.20), (C, C1, 0.10), (R, R1, 0.05)])

ITEMS = [(G1, CS1), (G2, CS2), (G3, CS3), (G4, CS4)]


def one_batch(items=None) -> MicroBatch:
    built = build_micro_batches(
        items if items is not None else ITEMS, ALL_TRIPLES, HEADER, FORMAT, batch_size=8
    )
    assert len(built) == 1
    return built[0]


# -------------------------------------------------------------- rendering


def test_prompt_enumerates_every_candidate_line():
    batch = one_batch()
    prompt = batch.rendered_prompt
    assert prompt.count("--- GENERATED index:") == 4
    # CS1 shows 4 candidates, enumerated from 0
    block = prompt.split("--- GENERATED index: 0 ---")[1].split("--- GENERATED")[0]
    for i in range(4):
        assert f"[{i}] (" in block
    assert "[4] (" not in block
    assert "(user#1, s='user need', p='asks for', o='efficiency data')" in prompt
    assert "(reference#2, s='adc', p='shall sample at', o='1.6 GSPS')" in prompt


def test_prompt_contains_the_verbatim_output_example():
    assert (
        '[{"index": 12, "evidence": [0, 2]}, {"index": 13, "evidence": []}]'
        in one_batch().rendered_prompt
    )


def test_prompt_sections_come_in_order():
    prompt = one_batch().rendered_prompt
    head = prompt.index("fact-checking assistant")
    marker = prompt.index("=== MICRO-BATCH ===")
    first_item = prompt.index("--- GENERATED index: 0 ---")
    fmt = prompt.index("=== OUTPUT FORMAT ===")
    assert head < marker < first_item < fmt


def test_item_without_context_candidates_shows_no_context_lines():
    batch = one_batch([(G3, CS3)])
    assert "(context#" not in batch.rendered_prompt
    assert "(user#1" in batch.rendered_prompt


def test_batches_slice_at_batch_size():
    batches = build_micro_batches(ITEMS, ALL_TRIPLES, HEADER, FORMAT, batch_size=3)
    assert [len(b.items) for b in batches] == [3, 1]
    assert [item.index for item in batches[0].items] == [0, 1, 2]
    assert [item.index for item in batches[1].items] == [3]
    assert batches[0].batch_id != batches[1].batch_id


def test_build_rejects_unknown_candidate_ids():
    orphan = candidate_set(G1, [(R, triple("x", "y", "z", R), 0.5)])
    with pytest.raises(StructuralError):
        build_micro_batches([(G1, orphan)], {G1.id: G1}, HEADER, FORMAT)


def test_batch_item_checks_candidate_linkage():
    with pytest.raises(StructuralError):
        BatchItem(index=0, triple=G1, candidates=CS2)


# ---------------------------------------------------------------- parsing


def test_worked_example_maps_to_sources():
    g = triple("amp", "shall amplify", "bridge voltage", SourceKind.GENERATED)
    cs = candidate_set(g, [(U, U1, 0.9), (C, C1, 0.8), (R, R1, 0.7)])
    lookup = dict(ALL_TRIPLES)
    lookup[g.id] = g
    batches = build_micro_batches([(g, cs)], lookup, HEADER, FORMAT)
    batch = MicroBatch(
        batch_id=batches[0].batch_id,
        items=tuple(
            BatchItem(index=12, triple=i.triple, candidates=i.candidates)
            for i in batches[0].items
        ),
    )
    verdicts, dropped = parse_verdicts('[{"index": 12, "evidence": [0, 2]}]', batch)
    assert dropped == 0
    records = verdicts_to_records(batch, verdicts)
    assert records[0].supported_by == frozenset({U, R})
    assert records[0].evidence == ((U, 1), (R, 1))

    verdicts, _ = parse_verdicts('[{"index": 12, "evidence": []}]', batch)
    records = verdicts_to_records(batch, verdicts)
    assert records[0].supported_by == frozenset()


def test_out_of_range_evidence_is_dropped_and_counted():
    batch = one_batch([(G1, CS1)])  # 4 candidates shown
    verdicts, dropped = parse_verdicts('[{"index": 0, "evidence": [1, 9, -1, 3]}]', batch)
    assert dropped == 2
    assert verdicts[0].evidence == (1, 3)


def test_duplicate_evidence_indices_are_removed():
    batch = one_batch([(G1, CS1)])
    verdicts, dropped = parse_verdicts('[{"index": 0, "evidence": [2, 2, 1, 2]}]', batch)
    assert verdicts[0].evidence == (2, 1)
    assert dropped == 0


@pytest.mark.parametrize("raw", [
    "not json at all",
    '{"index": 0, "evidence": []}',              # object, not array
    "[]",                                        # missing verdict
    '[{"index": 0, "evidence": []}, {"index": 0, "evidence": []}]',  # duplicate
    '[{"index": 7, "evidence": []}]',            # unknown index
    '[{"index": 0, "evidence": 3}]',             # evidence not a list
    '[{"index": 0, "evidence": ["2"]}]',         # non-integer evidence
    '[{"index": true, "evidence": []}]',         # boolean index
    '[42]',                                      # entry not an object
])
def test_strict_parse_failures(raw):
    batch = one_batch([(G1, CS1)])
    with pytest.raises(JudgeError):
        parse_verdicts(raw, batch)


def test_parse_requires_verdicts_for_all_items():
    batch = one_batch(ITEMS[:2])
    with pytest.raises(JudgeError) as excinfo:
        parse_verdicts('[{"index": 0, "evidence": []}]', batch)
    assert "no verdict" in str(excinfo.value)


def test_reparsing_the_same_raw_gives_identical_records():
    batch = one_batch()
    raw = json.dumps([{"index": i, "evidence": [0]} for i in range(4)])
    first = verdicts_to_records(batch, parse_verdicts(raw, batch)[0])
    second = verdicts_to_records(batch, parse_verdicts(raw, batch)[0])
    assert first == second


# ------------------------------------------------------------ judge loop


class ScriptedJudge:
    def __init__(self, responses):
        self.responses = list(responses)
        self.prompts = []

    def chat_complete(self, request):
        self.prompts.append(request.messages[-1][1])
        return ChatResult(text=self.responses.pop(0), finish_reason="stop", from_cache=False)


def verdict_json(indices, evidence=None):
    return json.dumps([{"index": i, "evidence": evidence or []} for i in indices])


def test_attribute_instance_happy_path_batches():
    client = ScriptedJudge([verdict_json([0, 1]), verdict_json([2, 3])])
    outcome = attribute_instance(
        client, ITEMS, ALL_TRIPLES, HEADER, FORMAT, batch_size=2, id_prefix="t-"
    )
    assert outcome.batches == 2
    assert outcome.repairs == 0
    assert len(outcome.rows) == 4
    assert [row.record.triple_id for row in outcome.rows] == [t.id for t, _ in ITEMS]
    assert {row.batch_id for row in outcome.rows} == {"t-b000", "t-b001"}
    assert all(len(row.response_sha) == 16 for row in outcome.rows)


def test_attribute_instance_repairs_then_succeeds():
    client = ScriptedJudge(["mumble", verdict_json([0, 1, 2, 3])])
    outcome = attribute_instance(client, ITEMS, ALL_TRIPLES, HEADER, FORMAT)
    assert outcome.repairs == 1
    assert outcome.half_retries == 0
    assert len(outcome.rows) == 4
    assert "could not be used" in client.prompts[1]
    assert "mumble" in client.prompts[1]


def test_attribute_instance_half_size_retry():
    client = ScriptedJudge([
        "bad", "still bad",            # full batch, then repair
        verdict_json([0, 1]),          # first half
        verdict_json([2, 3]),          # second half
    ])
    outcome = attribute_instance(client, ITEMS, ALL_TRIPLES, HEADER, FORMAT)
    assert outcome.repairs == 1
    assert outcome.half_retries == 1
    assert len(outcome.rows) == 4
    assert {row.batch_id for row in outcome.rows} == {"b000-h0", "b000-h1"}


def test_attribute_instance_fails_when_half_also_fails():
    client = ScriptedJudge(["bad", "bad", "bad"])
    with pytest.raises(JudgeError) as excinfo:
        attribute_instance(client, ITEMS, ALL_TRIPLES, HEADER, FORMAT)
    assert "half-size retry" in str(excinfo.value)


def test_single_item_batch_cannot_split():
    client = ScriptedJudge(["bad", "bad"])
    with pytest.raises(JudgeError) as excinfo:
        attribute_instance(client, [(G3, CS3)], ALL_TRIPLES, HEADER, FORMAT)
    assert "cannot be split" in str(excinfo.value)


def test_attribute_instance_empty_items():
    outcome = attribute_instance(ScriptedJudge([]), [], ALL_TRIPLES, HEADER, FORMAT)
    assert outcome.rows == ()
    assert outcome.batches == 0


def test_mismatched_pairs_are_rejected():
    with pytest.raises(StructuralError):
        attribute_instance(ScriptedJudge([]), [(G1, CS2)], ALL_TRIPLES, HEADER, FORMAT)


def test_dropped_evidence_is_summed_across_batches():
    client = ScriptedJudge([
        '[{"index": 0, "evidence": [0, 99]}, {"index": 1, "evidence": [50]}]',
        verdict_json([2, 3]),
    ])
    outcome = attribute_instance(client, ITEMS, ALL_TRIPLES, HEADER, FORMAT, batch_size=2)
    assert outcome.dropped_evidence == 2


# ------------------------------------------- exact-match mock equivalence


def test_mock_judge_matches_exact_match_oracle():
    fixture = MockFixture.from_dict({})
    with MockLLMServer(fixture) as server:
        client = LLMClient("judge", EndpointConfig(url=server.base_url, model="mock-model"))
        outcome = attribute_instance(
            client, ITEMS, ALL_TRIPLES, HEADER, FORMAT, batch_size=2
        )
        client.close()

    assert outcome.repairs == 0
    by_id = {row.record.triple_id: row.record for row in outcome.rows}
    for generated, candidates in ITEMS:
        oracle = supported_by_exact_match(
            (generated.subject, generated.predicate, generated.object),
            [
                (
                    c.source,
                    (
                        ALL_TRIPLES[c.triple_id].subject,
                        ALL_TRIPLES[c.triple_id].predicate,
                        ALL_TRIPLES[c.triple_id].object,
                    ),
                )
                for c in candidates.candidates
            ],
        )
        assert by_id[generated.id].supported_by == frozenset(oracle)

    assert by_id[G1.id].supported_by == frozenset({C, R})
    assert by_id[G2.id].supported_by == frozenset({R})
    assert by_id[G3.id].supported_by == frozenset({U})
    assert by_id[G4.id].supported_by == frozenset()


# ------------------------------------------------------------ persistence


def test_attribution_rows_round_trip(tmp_path):
    client = ScriptedJudge([verdict_json([0, 1, 2, 3], evidence=[0])])
    outcome = attribute_instance(client, ITEMS, ALL_TRIPLES, HEADER, FORMAT)
    path = tmp_path / "attributions.jsonl"
    write_attributions(path, outcome.rows)
    loaded = read_attributions(path)
    assert loaded == list(outcome.rows)
    assert len(path.read_text().splitlines()) == 4
