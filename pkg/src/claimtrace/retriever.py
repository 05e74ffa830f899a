"""Triple embeddings and fixed-quota candidate selection.

Each generated triple gets at most quota candidates per evidence source,
picked by cosine similarity over unit vectors. Ties are broken by ascending
triple id so a run's candidate sets never depend on pool ordering or on
floating-point comparison order.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .core import EVIDENCE_SOURCES, SourceKind, Triple
from .errors import DataError, StructuralError
from .gateway import EmbeddingRequest, LLMClient

DEFAULT_QUOTAS: Mapping[SourceKind, int] = {
    SourceKind.USER_QUERY: 2,
    SourceKind.CONTEXT: 2,
    SourceKind.REFERENCE: 3,
}

_UNIT_TOLERANCE = 1e-6


def embedding_text(triple: Triple) -> str:
    """Serialization fed to the embedder; pipes keep field boundaries."""
    return f"{triple.subject} | {triple.predicate} | {triple.object}"


@dataclass(frozen=True, eq=False)
class TripleEmbedding:
    triple_id: str
    vector: np.ndarray

    def __post_init__(self) -> None:
        if self.vector.ndim != 1:
            raise StructuralError(f"{self.triple_id}: embedding must be a flat vector")
        norm = float(np.linalg.norm(self.vector))
        if abs(norm - 1.0) > _UNIT_TOLERANCE:
            raise StructuralError(
                f"{self.triple_id}: embedding norm {norm:.8f} is not unit length"
            )


def embed_triples(
    client: LLMClient, triples: Sequence[Triple], batch_size: int = 64
) -> list[TripleEmbedding]:
    """One unit vector per triple, in input order, batched through the gateway."""
    if not triples:
        raise StructuralError("embed_triples called with no triples")
    if batch_size < 1:
        raise StructuralError(f"batch_size {batch_size} must be positive")
    embeddings: list[TripleEmbedding] = []
    for start in range(0, len(triples), batch_size):
        batch = triples[start:start + batch_size]
        vectors = client.embed(EmbeddingRequest(texts=tuple(embedding_text(t) for t in batch)))
        embeddings.extend(
            TripleEmbedding(triple_id=t.id, vector=v) for t, v in zip(batch, vectors)
        )
    return embeddings


@dataclass(frozen=True)
class Candidate:
    source: SourceKind
    triple_id: str
    similarity: float
    rank: int  # 1-based within this candidate's source block


@dataclass(frozen=True)
class CandidateSet:
    """Ordered evidence candidates for one generated triple.

    Candidates appear in display order: the user block, then context, then
    reference. The judge sees them enumerated 0-based in exactly this order,
    so the tuple order is part of the attribution contract.
    """

    generated_triple_id: str
    candidates: tuple[Candidate, ...]

    def __post_init__(self) -> None:
        if not self.generated_triple_id:
            raise StructuralError("candidate set has no generated_triple_id")
        seen_ids = set()
        block_order = [EVIDENCE_SOURCES.index(c.source) for c in self.candidates
                       if c.source in EVIDENCE_SOURCES]
        if len(block_order) != len(self.candidates):
            raise StructuralError(
                f"{self.generated_triple_id}: generated triples cannot be candidates"
            )
        if block_order != sorted(block_order):
            raise StructuralError(
                f"{self.generated_triple_id}: candidate blocks out of display order"
            )
        for source in EVIDENCE_SOURCES:
            block = [c for c in self.candidates if c.source is source]
            if [c.rank for c in block] != list(range(1, len(block) + 1)):
                raise StructuralError(
                    f"{self.generated_triple_id}: {source.value} ranks are not 1..n"
                )
            for earlier, later in zip(block, block[1:]):
                if later.similarity > earlier.similarity:
                    raise StructuralError(
                        f"{self.generated_triple_id}: {source.value} block "
                        "not sorted by similarity"
                    )
        for candidate in self.candidates:
            if candidate.triple_id in seen_ids:
                raise StructuralError(
                    f"{self.generated_triple_id}: duplicate candidate {candidate.triple_id}"
                )
            seen_ids.add(candidate.triple_id)

    def quotas_used(self) -> dict[SourceKind, int]:
        counts = {source: 0 for source in EVIDENCE_SOURCES}
        for candidate in self.candidates:
            counts[candidate.source] += 1
        return counts

    def display_pairs(self) -> tuple[tuple[SourceKind, int], ...]:
        """(source, rank) per display index; judge evidence maps through this."""
        return tuple((c.source, c.rank) for c in self.candidates)

    def to_dict(self) -> dict:
        return {
            "generated_triple_id": self.generated_triple_id,
            "candidates": [
                [c.source.value, c.triple_id, c.similarity, c.rank]
                for c in self.candidates
            ],
        }

    @classmethod
    def from_dict(cls, payload: Mapping) -> "CandidateSet":
        return cls(
            generated_triple_id=payload["generated_triple_id"],
            candidates=tuple(
                Candidate(SourceKind(source), triple_id, float(sim), int(rank))
                for source, triple_id, sim, rank in payload["candidates"]
            ),
        )


def select_candidates(
    generated: TripleEmbedding,
    pools: Mapping[SourceKind, Sequence[TripleEmbedding]],
    quotas: Mapping[SourceKind, int] | None = None,
) -> CandidateSet:
    """Top-quota cosine neighbours per source; empty pools contribute nothing."""
    if quotas is None:
        quotas = DEFAULT_QUOTAS
    for source, quota in quotas.items():
        if source not in EVIDENCE_SOURCES:
            raise StructuralError(f"quota given for non-evidence source {source.value!r}")
        if quota < 0:
            raise StructuralError(f"{source.value} quota {quota} is negative")
    for source in pools:
        if source not in EVIDENCE_SOURCES:
            raise StructuralError(f"pool given for non-evidence source {source!r}")

    chosen: list[Candidate] = []
    for source in EVIDENCE_SOURCES:
        pool = pools.get(source, ())
        quota = quotas.get(source, 0)
        scored = sorted(
            (
                (-float(np.dot(generated.vector, entry.vector)), entry.triple_id)
                for entry in pool
            ),
        )
        for rank, (neg_similarity, triple_id) in enumerate(scored[:quota], start=1):
            chosen.append(
                Candidate(
                    source=source,
                    triple_id=triple_id,
                    similarity=-neg_similarity,
                    rank=rank,
                )
            )
    return CandidateSet(generated_triple_id=generated.triple_id, candidates=tuple(chosen))


# ------------------------------------------------------------- persistence


def write_embeddings(
    directory: Path, embeddings: Sequence[TripleEmbedding], model_tag: str
) -> None:
    """Binary sidecar (one array per triple id) plus a small text manifest."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    arrays = {e.triple_id: e.vector for e in embeddings}
    if len(arrays) != len(embeddings):
        raise StructuralError("duplicate triple ids in embedding store")
    dimensions = {e.vector.shape[0] for e in embeddings}
    if len(dimensions) > 1:
        raise StructuralError(f"mixed embedding dimensions: {sorted(dimensions)}")
    np.savez(directory / "embeddings.npz", **arrays)
    meta = {
        "model_tag": model_tag,
        "dimension": next(iter(dimensions)) if dimensions else 0,
        "count": len(embeddings),
    }
    (directory / "embeddings_meta.json").write_text(
        json.dumps(meta, sort_keys=True, indent=2) + "\n"
    )


def read_embeddings(directory: Path) -> tuple[dict[str, np.ndarray], dict]:
    directory = Path(directory)
    npz_path = directory / "embeddings.npz"
    meta_path = directory / "embeddings_meta.json"
    if not npz_path.exists() or not meta_path.exists():
        raise DataError(f"no embedding store under {directory}")
    meta = json.loads(meta_path.read_text())
    with np.load(npz_path) as payload:
        vectors = {key: payload[key] for key in payload.files}
    if len(vectors) != meta.get("count"):
        raise DataError(
            f"embedding store holds {len(vectors)} vectors, manifest says {meta.get('count')}"
        )
    for triple_id, vector in vectors.items():
        if vector.shape != (meta.get("dimension"),):
            raise DataError(f"{triple_id}: vector shape {vector.shape} does not match manifest")
        if abs(float(np.linalg.norm(vector)) - 1.0) > _UNIT_TOLERANCE:
            raise DataError(f"{triple_id}: stored vector is not unit length")
    return vectors, meta
