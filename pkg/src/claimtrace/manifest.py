"""Run manifests: content-addressed stage bookkeeping for resumable runs.

A manifest records, per stage, the artifacts it produced and their content
hashes. A stage may run only when everything upstream is done and every
upstream artifact still hashes to what the manifest recorded; completing a
stage with changed outputs demotes everything downstream back to pending.
Saves are atomic (write-then-rename), so a crash never leaves a torn file.
"""
from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .errors import DataError, StructuralError

STAGES: tuple[str, ...] = (
    "ingest",
    "conditions",
    "generate",
    "extract",
    "embed",
    "judge",
    "metrics",
    "analyze",
    "humaneval-export",
    "humaneval-score",
)

UPSTREAM: dict[str, tuple[str, ...]] = {
    "ingest": (),
    "conditions": ("ingest",),
    "generate": ("conditions",),
    "extract": ("generate",),
    "embed": ("extract",),
    "judge": ("embed",),
    "metrics": ("judge",),
    "analyze": ("metrics",),
    "humaneval-export": ("judge",),
    "humaneval-score": ("humaneval-export",),
}

STATUS_PENDING = "pending"
STATUS_DONE = "done"
STATUS_FAILED = "failed"

MANIFEST_NAME = "manifest.json"


def file_digest(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def downstream_of(stage: str) -> set[str]:
    """Every stage that transitively depends on ``stage``."""
    out: set[str] = set()
    frontier = {stage}
    while frontier:
        frontier = {
            name for name in STAGES
            if name not in out and frontier & set(UPSTREAM[name])
        }
        out |= frontier
    return out


@dataclass
class StageRecord:
    status: str = STATUS_PENDING
    # artifact path relative to the run root -> sha256 of its bytes
    artifacts: dict[str, str] = field(default_factory=dict)
    config_hash: str = ""
    error: str = ""

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "artifacts": dict(sorted(self.artifacts.items())),
            "config_hash": self.config_hash,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "StageRecord":
        return cls(
            status=payload.get("status", STATUS_PENDING),
            artifacts=dict(payload.get("artifacts", {})),
            config_hash=payload.get("config_hash", ""),
            error=payload.get("error", ""),
        )


@dataclass
class RunManifest:
    run_id: str
    config_hash: str
    prompt_hashes: dict[str, str]
    seed: int
    stages: dict[str, StageRecord]

    @classmethod
    def create(
        cls, run_id: str, config_hash: str, prompt_hashes: dict[str, str], seed: int
    ) -> "RunManifest":
        return cls(
            run_id=run_id,
            config_hash=config_hash,
            prompt_hashes=dict(prompt_hashes),
            seed=seed,
            stages={name: StageRecord() for name in STAGES},
        )

    # ------------------------------------------------------------- queries

    def record(self, stage: str) -> StageRecord:
        if stage not in STAGES:
            raise StructuralError(f"unknown stage {stage!r}")
        return self.stages[stage]

    def is_done(self, stage: str) -> bool:
        return self.record(stage).status == STATUS_DONE

    def ensure_ready(self, stage: str, root: Path) -> None:
        """All upstream stages done and their artifacts unchanged on disk."""
        self.record(stage)  # validates the name
        for dep in UPSTREAM[stage]:
            dep_record = self.stages[dep]
            if dep_record.status != STATUS_DONE:
                raise DataError(
                    f"stage {stage!r} needs {dep!r} done first "
                    f"(currently {dep_record.status})"
                )
            for rel_path, recorded in sorted(dep_record.artifacts.items()):
                path = Path(root) / rel_path
                if not path.exists():
                    raise DataError(
                        f"stage {dep!r} artifact {rel_path} is missing; "
                        f"re-run {dep!r}"
                    )
                if file_digest(path) != recorded:
                    raise DataError(
                        f"stage {dep!r} artifact {rel_path} changed since it "
                        f"was recorded; re-run {dep!r} (or its upstream) first"
                    )

    # ----------------------------------------------------------- mutation

    def mark_done(
        self, stage: str, root: Path, artifact_paths: list[Path], config_hash: str
    ) -> None:
        record = self.record(stage)
        digests: dict[str, str] = {}
        for path in artifact_paths:
            rel = os.path.relpath(Path(path), Path(root))
            if rel.startswith(".."):
                raise StructuralError(f"artifact {path} lies outside the run root")
            digests[rel] = file_digest(path)
        changed = record.artifacts and record.artifacts != digests
        record.status = STATUS_DONE
        record.artifacts = digests
        record.config_hash = config_hash
        record.error = ""
        if changed:
            for name in downstream_of(stage):
                self.stages[name] = StageRecord()

    def mark_failed(self, stage: str, error: str) -> None:
        record = self.record(stage)
        record.status = STATUS_FAILED
        record.error = error

    def reset(self, stage: str) -> None:
        self.stages[stage] = StageRecord()

    # -------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "prompt_hashes": dict(sorted(self.prompt_hashes.items())),
            "seed": self.seed,
            "stages": {name: self.stages[name].to_dict() for name in STAGES},
        }

    def save(self, root: Path) -> None:
        root = Path(root)
        root.mkdir(parents=True, exist_ok=True)
        payload = json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"
        fd, tmp_name = tempfile.mkstemp(dir=root, prefix=".manifest-")
        try:
            with os.fdopen(fd, "w") as fh:
                fh.write(payload)
            os.replace(tmp_name, root / MANIFEST_NAME)
        except BaseException:
            if os.path.exists(tmp_name):
                os.unlink(tmp_name)
            raise

    @classmethod
    def load(cls, root: Path) -> "RunManifest":
        path = Path(root) / MANIFEST_NAME
        if not path.exists():
            raise DataError(f"no manifest under {root}")
        try:
            payload = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: corrupt manifest ({exc})")
        stages = {
            name: StageRecord.from_dict(payload.get("stages", {}).get(name, {}))
            for name in STAGES
        }
        return cls(
            run_id=payload["run_id"],
            config_hash=payload.get("config_hash", ""),
            prompt_hashes=dict(payload.get("prompt_hashes", {})),
            seed=int(payload.get("seed", 0)),
            stages=stages,
        )
