"""Round trip through the annotation app's headless driver.

Exports tasks from a fixture run, lets the app's scripted annotator fill
every slot, and scores the resulting label file against the pipeline.
Skips when the app has not been built (`npm run build` in frontend/), so
the core suite does not depend on the node toolchain.
"""
from __future__ import annotations

import json
import shutil
import subprocess
from pathlib import Path

import pytest

from claimtrace.config import ENDPOINT_NAMES, config_from_mapping
from claimtrace.core import AttributionRecord
from claimtrace.humaneval import (
    build_validation_summary,
    read_labels,
    read_tasks,
    score_attribution,
    score_extraction,
)
from claimtrace.mockserver import MockFixture, MockLLMServer
from claimtrace.pipeline import RunPaths, run_all

FIXTURES = Path(__file__).parent / "fixtures"
HEADLESS = Path(__file__).parent.parent / "frontend" / "dist" / "headless.js"

pytestmark = pytest.mark.skipif(
    shutil.which("node") is None or not HEADLESS.exists(),
    reason="annotation app not built; run npm install && npm run build in frontend/",
)


@pytest.fixture(scope="module")
def exported(tmp_path_factory):
    srv = MockLLMServer(MockFixture.from_file(FIXTURES / "mock_fixture.json"))
    srv.start()
    try:
        tmp = tmp_path_factory.mktemp("ui")
        config = config_from_mapping(
            {
                "seed": 0,
                "runs_dir": str(tmp / "runs"),
                "cache_dir": str(tmp / "cache"),
                "corpus": {"input_path": str(FIXTURES / "corpus.jsonl")},
                "humaneval": {"n_extraction": 12, "n_attribution": 24},
                "endpoints": {
                    name: {"url": srv.base_url, "max_retries": 1, "backoff_base_s": 0.01}
                    for name in ENDPOINT_NAMES
                },
            }
        )
        run_all(config, "ui")
    finally:
        srv.stop()
    return RunPaths(root=Path(config.runs_dir) / "ui")


def run_headless(tasks: Path, out: Path) -> subprocess.CompletedProcess:
    return subprocess.run(
        ["node", str(HEADLESS), str(tasks), str(out)],
        capture_output=True, text=True, timeout=60,
    )


def test_headless_session_scores_perfectly(exported, tmp_path):
    out = tmp_path / "labels.jsonl"
    proc = run_headless(exported.humaneval_tasks, out)
    assert proc.returncode == 0, proc.stderr

    extraction_tasks, attribution_tasks = read_tasks(exported.humaneval_tasks)
    labels = read_labels(out)
    records = {}
    for line in exported.attributions.read_text().splitlines():
        payload = json.loads(line)
        records[payload["triple_id"]] = AttributionRecord.from_dict(payload)

    # scoring raises IncompleteLabelsError on any missing slot; reaching the
    # summary at all means the app labeled everything it was given
    summary = build_validation_summary(
        score_extraction(extraction_tasks, labels),
        score_attribution(attribution_tasks, labels, records),
    )
    assert summary.extraction_total == sum(len(t.triples) for t in extraction_tasks)
    assert summary.attribution_total == len(attribution_tasks)
    assert summary.extraction_precision == 1.0
    assert summary.overall_attribution_accuracy == 1.0
    assert summary.macro_attribution_accuracy == 1.0
    assert set(summary.attribution_accuracy_per_label.values()) == {1.0}


def test_headless_labels_equal_pseudo_labels(exported, tmp_path):
    # Whitespace differs between serializers, so compare parsed rows.
    out = tmp_path / "labels.jsonl"
    assert run_headless(exported.humaneval_tasks, out).returncode == 0
    parse = lambda path: sorted(
        (json.loads(line) for line in path.read_text().splitlines()),
        key=lambda row: json.dumps(row, sort_keys=True),
    )
    assert parse(out) == parse(exported.pseudo_labels)


def test_headless_reports_malformed_line(exported, tmp_path):
    broken = tmp_path / "broken.jsonl"
    lines = exported.humaneval_tasks.read_text().splitlines()
    lines[6] = '{"kind": "attribution"'
    broken.write_text("\n".join(lines) + "\n")
    proc = run_headless(broken, tmp_path / "labels.jsonl")
    assert proc.returncode == 1
    assert "line 7" in proc.stderr
