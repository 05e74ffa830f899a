#!/usr/bin/env python3
"""Build the offline test corpus and its matching mock-server fixture.

Two test datapoints (a power supply and a grid-tie inverter) plus one
train-split datapoint. Each seed text is sized past 300 whitespace tokens so
the chunker yields three chunks (128, 128, 44), and each chunk carries a
marker phrase the mock extractor keys on. The triples are authored so the
generated answers overlap reference, context, and user-query sources in
known ways; the expected attribution per condition is then a paper-and-
pencil exercise over exact matches.

Run from the repository root:

    python3 scripts/make_fixture.py

Output goes to tests/fixtures/. The files are committed; re-running must be
a no-op unless this script changed.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from claimtrace.corpus import chunk_seed  # noqa: E402

OUT_DIR = Path(__file__).resolve().parent.parent / "tests" / "fixtures"

FILLER_SENTENCES = (
    "The commissioning log records a nominal reading at this checkpoint.",
    "Bench technicians noted no deviation during the soak interval.",
    "Ambient conditions in the lab stayed within the usual band.",
    "The data logger captured all channels without a gap.",
    "No retest was required after the routine inspection pass.",
    "Calibration stickers on the instruments were current throughout.",
)


def _pad_to(tokens_so_far: list[str], target: int, cursor: int) -> tuple[list[str], int]:
    """Append filler sentences, then single neutral words, up to target."""
    out = list(tokens_so_far)
    while len(out) < target:
        sentence = FILLER_SENTENCES[cursor % len(FILLER_SENTENCES)].split()
        cursor += 1
        if len(out) + len(sentence) <= target:
            out.extend(sentence)
        else:
            out.extend(["and", "so", "on."][: target - len(out)])
    return out, cursor


def build_seed(sections: list[tuple[str, int]]) -> str:
    """Concatenate marker-led sections padded to exact token boundaries."""
    tokens: list[str] = []
    cursor = 0
    for lead, boundary in sections:
        lead_tokens = lead.split()
        if len(tokens) + len(lead_tokens) > boundary:
            raise SystemExit(f"section lead overruns its boundary at {boundary}")
        tokens.extend(lead_tokens)
        tokens, cursor = _pad_to(tokens, boundary, cursor)
    return " ".join(tokens)


def check_markers(seed: str, markers: list[str]) -> None:
    chunks = chunk_seed(seed, "check")
    if len(chunks) != 3:
        raise SystemExit(f"expected 3 chunks, got {len(chunks)}")
    if [c.token_count for c in chunks] != [128, 128, 44]:
        raise SystemExit(f"unexpected chunk sizes {[c.token_count for c in chunks]}")
    for chunk, marker in zip(chunks, markers):
        if marker not in chunk.text:
            raise SystemExit(f"marker {marker!r} missing from chunk {chunk.index}")
        for other in markers:
            if other != marker and other in chunk.text:
                raise SystemExit(f"marker {other!r} bleeds into chunk {chunk.index}")


def triple(s: str, p: str, o: str) -> dict:
    return {"subject": s, "predicate": p, "object": o}


# ------------------------------------------------------------ datapoint A

A_MARKERS = [
    "dual redundant feed",
    "surge clamp threshold",
    "molex connector block",
]

A_SEED = build_seed([
    (
        "The bench supply drives a dual redundant feed into the backplane. "
        "Its primary output rail shall deliver 12 V under the full rated load, "
        "and the qualified input range spans 100 to 240 VAC at the wall.",
        128,
    ),
    (
        "Transient testing exercised the surge clamp threshold repeatedly. "
        "The surge clamp activates at 15 V and shunts the excess into the "
        "bleed network, while the fan curve ramps at 45 C to keep the "
        "magnetics inside their thermal budget.",
        256,
    ),
    (
        "Field wiring terminates on a molex connector block at the rear; "
        "the connector uses molex 8981 housings throughout the harness.",
        300,
    ),
])

A_QUERY = "What holdup time does the supply guarantee after input loss?"

A_REFERENCE = (
    "The supply holds up for 20 ms after input loss. The output rail shall "
    "deliver 12 V at full load, overall efficiency shall exceed 94 %, and "
    "output ripple shall stay under 50 mV across the load range."
)

A_GENERATED = (
    "Per the datasheet summary for the bench supply: the holdup requirement "
    "equals 20 ms. The output rail shall deliver 12 V, efficiency shall "
    "exceed 94 %, the surge clamp activates at 15 V, and by our sizing the "
    "thermal margin stays below 70 C."
)

F1 = triple("output rail", "shall deliver", "12 V")
F2 = triple("efficiency", "shall exceed", "94 %")
F3 = triple("ripple", "shall stay under", "50 mV")
F4 = triple("surge clamp", "activates at", "15 V")
F5 = triple("holdup requirement", "equals", "20 ms")
F6 = triple("thermal margin", "stays below", "70 C")
A_C1 = triple("input range", "spans", "100 to 240 VAC")
A_C2 = triple("fan curve", "ramps at", "45 C")
A_C3 = triple("connector", "uses", "molex 8981")
A_U2 = triple("user need", "asks for", "supply holdup figure")

# ------------------------------------------------------------ datapoint B

B_MARKERS = [
    "grid synchronization loop",
    "islanding detection relay",
    "ip65 enclosure rating",
]

B_SEED = build_seed([
    (
        "The inverter locks its grid synchronization loop before closing the "
        "output contactor. Once synchronized the inverter shall output 230 VAC "
        "to the feed point, and the dc link holds 400 V during steady export.",
        128,
    ),
    (
        "Protection engineers timed the islanding detection relay against a "
        "simulated outage. The islanding trip occurs within 2 s of grid loss, "
        "and the relay is rated for 16 A of continuous interrupting duty in "
        "the combiner enclosure.",
        256,
    ),
    (
        "The outdoor cabinet carries an ip65 enclosure rating; the enclosure "
        "meets ip65 with the gland plate fitted.",
        300,
    ),
])

B_QUERY = "From when does the feed-in tariff apply to this inverter install?"

B_REFERENCE = (
    "The feed-in tariff applies from July. The inverter shall output 230 VAC, "
    "total harmonic distortion shall stay under 3 %, and ripple current shall "
    "stay under 2 A at the dc link."
)

B_GENERATED = (
    "For the grid-tie installation: the feed-in tariff applies from July. The "
    "inverter shall output 230 VAC, thd shall stay under 3 %, the islanding "
    "trip occurs within 2 s, and internally the mppt step equals 10 ms."
)

G1 = triple("inverter", "shall output", "230 VAC")
G2 = triple("thd", "shall stay under", "3 %")
G3 = triple("ripple current", "shall stay under", "2 A")
G4 = triple("islanding trip", "occurs within", "2 s")
G5 = triple("feed-in tariff", "applies from", "july")
G6 = triple("mppt step", "equals", "10 ms")
B_C1 = triple("dc link", "holds", "400 V")
B_C2 = triple("relay", "rated for", "16 A")
B_C3 = triple("enclosure", "meets", "ip65")
B_U2 = triple("user need", "asks for", "tariff start date")

# ------------------------------------------------------- train datapoint

TRAIN_SEED = build_seed([
    (
        "The archive rack controller polls each shelf over the service bus "
        "and mirrors its inventory ledger to both supervisors every minute.",
        128,
    ),
    ("Nightly scrub jobs walk the ledger and flag any checksum drift.", 256),
    ("A quarterly audit reconciles the ledger against the physical rack.", 300),
])


def main() -> None:
    check_markers(A_SEED, A_MARKERS)
    check_markers(B_SEED, B_MARKERS)

    OUT_DIR.mkdir(parents=True, exist_ok=True)

    datapoints = [
        {
            "id": "dp-psu",
            "user_query": A_QUERY,
            "reference": A_REFERENCE,
            "context_seed": A_SEED,
            "split": "test",
        },
        {
            "id": "dp-grid",
            "user_query": B_QUERY,
            "reference": B_REFERENCE,
            "context_seed": B_SEED,
            "split": "test",
        },
        {
            "id": "dp-rack",
            "user_query": "How often is the archive rack ledger mirrored?",
            "reference": "The rack controller mirrors its ledger every minute.",
            "context_seed": TRAIN_SEED,
            "split": "train",
        },
    ]
    corpus_path = OUT_DIR / "corpus.jsonl"
    corpus_path.write_text(
        "".join(json.dumps(dp, sort_keys=True) + "\n" for dp in datapoints)
    )

    fixture = {
        "embedding_dim": 32,
        "guided_decoding": True,
        "extract_style": "json",
        "default_response": "",
        "extract": [
            # datapoint A sources
            {"text": "What holdup time", "triples": [F5, A_U2]},
            {"text": "holds up for 20 ms after input loss", "triples": [F1, F2, F3]},
            {"text": "datasheet summary for the bench supply",
             "triples": [F5, F1, F2, F4, F6]},
            {"text": "dual redundant feed", "triples": [F1, A_C1]},
            {"text": "surge clamp threshold", "triples": [F4, A_C2]},
            {"text": "molex connector block", "triples": [A_C3]},
            # datapoint B sources
            {"text": "From when does the feed-in tariff", "triples": [G5, B_U2]},
            {"text": "ripple current shall stay under 2 A", "triples": [G1, G2, G3]},
            {"text": "For the grid-tie installation",
             "triples": [G5, G1, G2, G4, G6]},
            {"text": "grid synchronization loop", "triples": [G1, B_C1]},
            {"text": "islanding detection relay", "triples": [G4, B_C2]},
            {"text": "ip65 enclosure rating", "triples": [B_C3]},
        ],
        "generate": [
            {"query_contains": "holdup time", "response": A_GENERATED},
            {"query_contains": "feed-in tariff", "response": B_GENERATED},
        ],
    }
    fixture_path = OUT_DIR / "mock_fixture.json"
    fixture_path.write_text(json.dumps(fixture, indent=2, sort_keys=True) + "\n")

    print(f"wrote {corpus_path}")
    print(f"wrote {fixture_path}")


if __name__ == "__main__":
    main()
