from __future__ import annotations

import sys
from pathlib import Path

import pytest

from claimtrace.core import AttributionRecord, SourceKind, Triple

# Make the sibling oracle helpers importable regardless of invocation dir.
sys.path.insert(0, str(Path(__file__).parent))

_KIND_BY_LETTER = {
    "r": SourceKind.REFERENCE,
    "c": SourceKind.CONTEXT,
    "u": SourceKind.USER_QUERY,
}


def record_from_letters(triple_id: str, letters: str) -> AttributionRecord:
    """Build an attribution record from a compact membership spec like 'rc'."""
    evidence = tuple((_KIND_BY_LETTER[ch], 1) for ch in letters)
    return AttributionRecord.from_evidence(triple_id, evidence)


def membership_set(letters: str) -> set[SourceKind]:
    return {_KIND_BY_LETTER[ch] for ch in letters}


def make_triple(
    subject: str,
    predicate: str,
    obj: str,
    source: SourceKind = SourceKind.GENERATED,
    instance_id: str = "inst-1",
) -> Triple:
    return Triple.make(subject, predicate, obj, source, instance_id)


@pytest.fixture
def tmp_run_dir(tmp_path: Path) -> Path:
    run_dir = tmp_path / "run"
    run_dir.mkdir()
    return run_dir


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # The acceptance module records one verdict per gate; stdout capture
    # would swallow plain prints from passing tests, so echo them here.
    module = sys.modules.get("test_acceptance")
    results = getattr(module, "GATE_RESULTS", None)
    if not results:
        return
    terminalreporter.write_sep("-", "acceptance gate")
    for name, passed in results:
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}: {name}")
