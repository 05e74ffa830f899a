"""Corpus ingestion and retrieval-condition assembly.

A datapoint is a (query, reference, truth seed) record. For evaluation we
expand each datapoint into one instance per retrieval condition:

* ``na``          no context at all
* ``relevant``    the datapoint's own seed, chunked
* ``irrelevant``  chunks sampled from *other* datapoints only
* ``noisy``       a 3-chunk mix: one or two slots drawn relevant-or-random
                  (a fair coin each), the rest random foreign chunks

Chunking packs whole tokens greedily left to right, a fixed budget per
chunk, and drops whatever does not fit in the chunk allowance. Randomness
is derived per (datapoint, condition) from the global seed, so rebuilding
any subset of the matrix, in any order and on any worker layout, yields
byte-identical instances.
"""
from __future__ import annotations

import hashlib
import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .core import (
    CONDITION_IRRELEVANT,
    CONDITION_NA,
    CONDITION_NOISY,
    CONDITION_RELEVANT,
    CONDITIONS,
    EvaluationInstance,
)
from .errors import DataError, StructuralError

DEFAULT_CHUNK_TOKENS = 128
DEFAULT_MAX_CHUNKS = 3
_CONTEXT_CHUNK_SLOTS = 3

SPLIT_TRAIN = "train"
SPLIT_TEST = "test"

# Training-set variants: which conditions each published recipe mixes in.
VARIANT_CONDITIONS: dict[str, tuple[str, ...]] = {
    "wo_context": (CONDITION_NA,),
    "w_relevant": (CONDITION_RELEVANT,),
    "pa_rag": (CONDITION_RELEVANT, CONDITION_IRRELEVANT),
    "raft": (CONDITION_NOISY, CONDITION_IRRELEVANT),
    "w_all": CONDITIONS,
}

Tokenizer = Callable[[str], list[str]]


def whitespace_tokenizer(text: str) -> list[str]:
    return text.split()


@dataclass(frozen=True)
class Datapoint:
    """One raw corpus record before condition assembly."""

    instance_id: str
    user_query: str
    reference: str
    truth_seed: str
    split: str

    def __post_init__(self) -> None:
        if not self.instance_id:
            raise StructuralError("datapoint has no id")
        for name in ("user_query", "reference", "truth_seed"):
            if not getattr(self, name).strip():
                raise DataError(f"datapoint {self.instance_id}: {name} is empty")
        if self.split not in (SPLIT_TRAIN, SPLIT_TEST):
            raise DataError(f"datapoint {self.instance_id}: unknown split {self.split!r}")


@dataclass(frozen=True)
class Chunk:
    """A contiguous slab of a truth seed, tagged with where it came from."""

    text: str
    origin_instance_id: str
    index: int
    token_count: int


def chunk_seed(
    seed_text: str,
    origin_instance_id: str,
    tokenizer: Tokenizer = whitespace_tokenizer,
    chunk_tokens: int = DEFAULT_CHUNK_TOKENS,
    max_chunks: int = DEFAULT_MAX_CHUNKS,
) -> list[Chunk]:
    """Greedily pack whole tokens into at most ``max_chunks`` chunks.

    Tokens beyond the last allowed chunk are dropped; a chunk never splits
    a token. The final chunk may be short.
    """
    if chunk_tokens <= 0 or max_chunks <= 0:
        raise StructuralError("chunk_tokens and max_chunks must be positive")
    tokens = tokenizer(seed_text)
    chunks: list[Chunk] = []
    for index in range(max_chunks):
        window = tokens[index * chunk_tokens : (index + 1) * chunk_tokens]
        if not window:
            break
        chunks.append(
            Chunk(
                text=" ".join(window),
                origin_instance_id=origin_instance_id,
                index=index,
                token_count=len(window),
            )
        )
    return chunks


def _derived_rng(global_seed: int, *parts: str) -> random.Random:
    """A per-stream RNG independent of execution order across streams."""
    payload = "\x1f".join((str(global_seed),) + parts)
    digest = hashlib.sha256(payload.encode("utf-8")).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def instance_id_for(datapoint_id: str, condition: str) -> str:
    return f"{datapoint_id}--{condition}"


def _draw_distinct(
    rng: random.Random,
    pool: Sequence[Chunk],
    count: int,
    used: set[tuple[str, int]],
) -> list[Chunk]:
    available = [c for c in pool if (c.origin_instance_id, c.index) not in used]
    if len(available) < count:
        raise DataError(
            f"chunk pool exhausted: need {count} distinct chunks, {len(available)} available"
        )
    drawn = rng.sample(available, count)
    used.update((c.origin_instance_id, c.index) for c in drawn)
    return drawn


def assemble_condition(
    datapoint: Datapoint,
    condition: str,
    chunk_pool: Sequence[Chunk],
    global_seed: int,
    tokenizer: Tokenizer = whitespace_tokenizer,
    chunk_tokens: int = DEFAULT_CHUNK_TOKENS,
    max_chunks: int = DEFAULT_MAX_CHUNKS,
) -> tuple[EvaluationInstance, list[Chunk]]:
    """Build one conditioned instance plus the chunks that went into it.

    ``chunk_pool`` is the full cross-datapoint pool; the function filters
    it as the condition requires. Returns the chunk objects alongside the
    instance so callers can persist provenance.
    """
    if condition not in CONDITIONS:
        raise StructuralError(f"unknown condition {condition!r}")
    rng = _derived_rng(global_seed, datapoint.instance_id, condition)
    own = chunk_seed(datapoint.truth_seed, datapoint.instance_id, tokenizer, chunk_tokens, max_chunks)
    foreign = [c for c in chunk_pool if c.origin_instance_id != datapoint.instance_id]

    if condition == CONDITION_NA:
        selected: list[Chunk] = []
    elif condition == CONDITION_RELEVANT:
        selected = list(own)
    elif condition == CONDITION_IRRELEVANT:
        used: set[tuple[str, int]] = set()
        selected = _draw_distinct(rng, foreign, _CONTEXT_CHUNK_SLOTS, used)
    else:  # noisy
        used = set()
        selected = []
        mixed_slots = rng.randint(1, 2)
        for _ in range(mixed_slots):
            use_relevant = rng.random() < 0.5
            own_left = [c for c in own if (c.origin_instance_id, c.index) not in used]
            if use_relevant and own_left:
                pick = rng.choice(own_left)
                used.add((pick.origin_instance_id, pick.index))
                selected.append(pick)
            else:
                selected.extend(_draw_distinct(rng, foreign, 1, used))
        remaining = _CONTEXT_CHUNK_SLOTS - len(selected)
        selected.extend(_draw_distinct(rng, foreign, remaining, used))
        rng.shuffle(selected)

    instance = EvaluationInstance(
        instance_id=instance_id_for(datapoint.instance_id, condition),
        user_query=datapoint.user_query,
        context_chunks=tuple(c.text for c in selected),
        reference=datapoint.reference,
        generated="",
        condition=condition,
    )
    return instance, selected


def build_chunk_pool(
    datapoints: Sequence[Datapoint],
    tokenizer: Tokenizer = whitespace_tokenizer,
    chunk_tokens: int = DEFAULT_CHUNK_TOKENS,
    max_chunks: int = DEFAULT_MAX_CHUNKS,
) -> list[Chunk]:
    pool: list[Chunk] = []
    for dp in datapoints:
        pool.extend(chunk_seed(dp.truth_seed, dp.instance_id, tokenizer, chunk_tokens, max_chunks))
    return pool


def build_test_matrix(
    datapoints: Sequence[Datapoint],
    conditions: Sequence[str] = CONDITIONS,
    global_seed: int = 0,
    subsample_per_condition: int | None = None,
    tokenizer: Tokenizer = whitespace_tokenizer,
    chunk_tokens: int = DEFAULT_CHUNK_TOKENS,
    max_chunks: int = DEFAULT_MAX_CHUNKS,
) -> tuple[list[EvaluationInstance], dict[str, list[str]]]:
    """Expand datapoints into the full condition matrix.

    With subsampling, one seeded draw picks the datapoints and every
    condition is applied to the same draw, so cross-condition comparisons
    stay paired. Returns instances plus a provenance map of instance_id to
    the origin ids of its context chunks.
    """
    ids = [dp.instance_id for dp in datapoints]
    if len(set(ids)) != len(ids):
        raise DataError("duplicate datapoint ids in corpus")
    for condition in conditions:
        if condition not in CONDITIONS:
            raise StructuralError(f"unknown condition {condition!r}")
    chosen = list(datapoints)
    if subsample_per_condition is not None:
        if subsample_per_condition <= 0:
            raise StructuralError("subsample_per_condition must be positive")
        if subsample_per_condition > len(datapoints):
            raise DataError(
                f"cannot subsample {subsample_per_condition} of {len(datapoints)} datapoints"
            )
        rng = _derived_rng(global_seed, "subsample")
        chosen = rng.sample(list(datapoints), subsample_per_condition)
        chosen.sort(key=lambda dp: dp.instance_id)
    pool = build_chunk_pool(datapoints, tokenizer, chunk_tokens, max_chunks)
    instances: list[EvaluationInstance] = []
    provenance: dict[str, list[str]] = {}
    for dp in chosen:
        for condition in conditions:
            instance, selected = assemble_condition(
                dp, condition, pool, global_seed, tokenizer, chunk_tokens, max_chunks
            )
            instances.append(instance)
            provenance[instance.instance_id] = [c.origin_instance_id for c in selected]
    return instances, provenance


# ---------------------------------------------------------------- artifacts

def read_datapoints(path: Path) -> list[Datapoint]:
    """Read the input corpus: one JSON object per line.

    Expected keys: id, user_query, reference, context_seed, split.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    datapoints: list[Datapoint] = []
    seen: set[str] = set()
    with path.open() as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                payload = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON ({exc})")
            try:
                dp = Datapoint(
                    instance_id=str(payload["id"]),
                    user_query=payload["user_query"],
                    reference=payload["reference"],
                    truth_seed=payload["context_seed"],
                    split=payload.get("split", SPLIT_TEST),
                )
            except KeyError as exc:
                raise DataError(f"{path}:{line_no}: missing key {exc}")
            if dp.instance_id in seen:
                raise DataError(f"{path}:{line_no}: duplicate datapoint id {dp.instance_id!r}")
            seen.add(dp.instance_id)
            datapoints.append(dp)
    if not datapoints:
        raise DataError(f"{path}: no datapoints")
    return datapoints


def write_datapoints(datapoints: Sequence[Datapoint], path: Path) -> None:
    with Path(path).open("w") as fh:
        for dp in datapoints:
            fh.write(json.dumps({
                "id": dp.instance_id,
                "user_query": dp.user_query,
                "reference": dp.reference,
                "context_seed": dp.truth_seed,
                "split": dp.split,
            }, sort_keys=True) + "\n")


def write_instances(instances: Sequence[EvaluationInstance], path: Path) -> None:
    with Path(path).open("w") as fh:
        for instance in instances:
            fh.write(json.dumps(instance.to_dict(), sort_keys=True) + "\n")


def read_instances(path: Path) -> list[EvaluationInstance]:
    instances: list[EvaluationInstance] = []
    with Path(path).open() as fh:
        for line in fh:
            if line.strip():
                instances.append(EvaluationInstance.from_dict(json.loads(line)))
    return instances


def write_variant_manifests(
    datapoints: Sequence[Datapoint], out_dir: Path, global_seed: int
) -> list[Path]:
    """Emit one manifest per training variant listing (datapoint, condition).

    Consumers (external trainers) assemble their own mixes from these; we
    only publish which conditioned instances belong to which recipe.
    """
    train = [dp for dp in datapoints if dp.split == SPLIT_TRAIN]
    out_dir.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []
    for variant in sorted(VARIANT_CONDITIONS):
        conditions = VARIANT_CONDITIONS[variant]
        entries = [
            {
                "datapoint_id": dp.instance_id,
                "condition": condition,
                "instance_id": instance_id_for(dp.instance_id, condition),
            }
            for dp in train
            for condition in conditions
        ]
        path = out_dir / f"variant_{variant}.json"
        path.write_text(json.dumps({
            "variant": variant,
            "conditions": list(conditions),
            "global_seed": global_seed,
            "entries": entries,
        }, indent=2, sort_keys=True) + "\n")
        written.append(path)
    return written
