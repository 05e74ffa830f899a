"""Stage implementations: everything between the CLI and the library modules.

Each stage reads only persisted artifacts from the run directory, writes its
own artifacts there, and returns their paths for the manifest to hash. The
judge stage additionally checkpoints per instance, so a failed run resumes
where it stopped instead of re-judging everything (the response cache makes
even a full redo cheap, but the checkpoint keeps partial progress visible).
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

from . import corpus, humaneval, metrics
from .analysis import (
    MetricCell,
    cross_condition_stability,
    decompose_sk_variance,
    write_metric_deltas_csv,
    write_summary_json,
    write_venn_csv,
)
from .config import PipelineConfig, config_hash
from .core import (
    EVIDENCE_SOURCES,
    AttributionRecord,
    EvaluationInstance,
    SourceKind,
    Triple,
    partition,
)
from .errors import ClaimtraceError, DataError
from .extractor import load_prompt_bundle, extract_triples
from .gateway import LLMClient, ResponseCache, generate_response
from .judge import AttributionRow, attribute_instance, read_attributions
from .manifest import STAGES, RunManifest, MANIFEST_NAME
from .metrics import group_into_cells, instance_metrics, write_cells_csv, write_reports_jsonl
from .promptstore import prompt_text
from .retriever import (
    CandidateSet,
    TripleEmbedding,
    embed_triples,
    read_embeddings,
    select_candidates,
    write_embeddings,
)
from .textmetrics import rouge1, rougeL


@dataclass(frozen=True)
class RunPaths:
    root: Path

    @property
    def datapoints(self) -> Path:
        return self.root / "datapoints.jsonl"

    @property
    def variants_dir(self) -> Path:
        return self.root / "variants"

    @property
    def instances(self) -> Path:
        return self.root / "instances.jsonl"

    @property
    def provenance(self) -> Path:
        return self.root / "provenance.json"

    @property
    def instances_generated(self) -> Path:
        return self.root / "instances_generated.jsonl"

    @property
    def triples(self) -> Path:
        return self.root / "triples.jsonl"

    @property
    def extraction_report(self) -> Path:
        return self.root / "extraction_report.json"

    @property
    def embeddings(self) -> Path:
        return self.root / "embeddings.npz"

    @property
    def embeddings_meta(self) -> Path:
        return self.root / "embeddings_meta.json"

    @property
    def candidates(self) -> Path:
        return self.root / "candidates.jsonl"

    @property
    def attributions(self) -> Path:
        return self.root / "attributions.jsonl"

    @property
    def judge_report(self) -> Path:
        return self.root / "judge_report.json"

    @property
    def metrics_instances(self) -> Path:
        return self.root / "metrics_instances.jsonl"

    @property
    def metrics_cells(self) -> Path:
        return self.root / "metrics_cells.jsonl"

    @property
    def metrics_table(self) -> Path:
        return self.root / "metrics_table.csv"

    @property
    def rouge_scores(self) -> Path:
        return self.root / "rouge_scores.jsonl"

    @property
    def deltas_csv(self) -> Path:
        return self.root / "analysis" / "metric_deltas.csv"

    @property
    def venn_csv(self) -> Path:
        return self.root / "analysis" / "venn_regions.csv"

    @property
    def analysis_summary(self) -> Path:
        return self.root / "analysis" / "summary.json"

    @property
    def humaneval_tasks(self) -> Path:
        return self.root / "humaneval" / "tasks.jsonl"

    @property
    def pseudo_labels(self) -> Path:
        return self.root / "humaneval" / "pseudo_labels.jsonl"

    @property
    def validation_summary(self) -> Path:
        return self.root / "humaneval" / "validation_summary.json"


def _client(config: PipelineConfig, name: str) -> LLMClient:
    cache = ResponseCache(Path(config.cache_dir))
    return LLMClient(name, config.endpoint(name), cache=cache)


def _write_jsonl(path: Path, payloads: Iterable[dict]) -> None:
    lines = [json.dumps(p, sort_keys=True) for p in payloads]
    path.write_text("\n".join(lines) + ("\n" if lines else ""))


def _read_triples(path: Path) -> list[Triple]:
    out = []
    for line in path.read_text().splitlines():
        if line.strip():
            out.append(Triple.from_dict(json.loads(line)))
    return out


# --------------------------------------------------------------- stages


def stage_ingest(config: PipelineConfig, paths: RunPaths, force: bool) -> list[Path]:
    datapoints = corpus.read_datapoints(Path(config.corpus.input_path))
    if not datapoints:
        raise DataError(f"{config.corpus.input_path}: no datapoints")
    corpus.write_datapoints(datapoints, paths.datapoints)
    return [paths.datapoints]


def stage_conditions(config: PipelineConfig, paths: RunPaths, force: bool) -> list[Path]:
    datapoints = corpus.read_datapoints(paths.datapoints)
    test_split = [dp for dp in datapoints if dp.split == corpus.SPLIT_TEST]
    if not test_split:
        raise DataError("corpus has no test-split datapoints")
    instances, provenance = corpus.build_test_matrix(
        test_split,
        conditions=config.corpus.conditions,
        global_seed=config.seed,
        subsample_per_condition=config.subsample_per_condition,
        chunk_tokens=config.corpus.chunk_tokens,
        max_chunks=config.corpus.max_chunks,
    )
    corpus.write_instances(instances, paths.instances)
    paths.provenance.write_text(
        json.dumps(provenance, indent=2, sort_keys=True) + "\n"
    )
    variant_paths = corpus.write_variant_manifests(
        datapoints, paths.variants_dir, config.seed
    )
    return [paths.instances, paths.provenance, *variant_paths]


def stage_generate(config: PipelineConfig, paths: RunPaths, force: bool) -> list[Path]:
    instances = corpus.read_instances(paths.instances)
    template = prompt_text("generation.txt", config.prompts_dir or None)
    client = _client(config, "generator")
    try:
        generated = [
            generate_response(client, instance, template)
            for instance in sorted(instances, key=lambda i: i.instance_id)
        ]
    finally:
        client.close()
    corpus.write_instances(generated, paths.instances_generated)
    return [paths.instances_generated]


def stage_extract(config: PipelineConfig, paths: RunPaths, force: bool) -> list[Path]:
    instances = corpus.read_instances(paths.instances_generated)
    bundle = load_prompt_bundle(config.prompts_dir or None)
    client = _client(config, "extractor")
    triples: list[Triple] = []
    report: dict[str, dict] = {}
    try:
        for instance in sorted(instances, key=lambda i: i.instance_id):
            entry = {"rejects": [], "garbage_records": 0, "repaired_sources": []}
            for source in SourceKind:
                text = instance.source_text(source)
                if not text.strip():
                    continue
                result = extract_triples(
                    client, text, source, instance.instance_id, bundle
                )
                triples.extend(result.triples)
                entry["rejects"].extend(
                    [source.value, reason, line_no]
                    for reason, line_no in result.rejects
                )
                entry["garbage_records"] += result.garbage_records
                if result.repaired:
                    entry["repaired_sources"].append(source.value)
            report[instance.instance_id] = entry
    finally:
        client.close()
    _write_jsonl(paths.triples, (t.to_dict() for t in triples))
    paths.extraction_report.write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    return [paths.triples, paths.extraction_report]


def stage_embed(config: PipelineConfig, paths: RunPaths, force: bool) -> list[Path]:
    triples = _read_triples(paths.triples)
    if not triples:
        raise DataError("no triples to embed; extraction produced nothing")
    client = _client(config, "embedder")
    try:
        embeddings = embed_triples(
            client, triples, batch_size=config.retriever.embed_batch_size
        )
    finally:
        client.close()
    write_embeddings(paths.root, embeddings, config.endpoint("embedder").model)
    return [paths.embeddings, paths.embeddings_meta]


def _judged_triple_ids(path: Path) -> set[str]:
    if not path.exists():
        return set()
    return {row.record.triple_id for row in read_attributions(path)}


def stage_judge(config: PipelineConfig, paths: RunPaths, force: bool) -> list[Path]:
    instances = corpus.read_instances(paths.instances_generated)
    triples = _read_triples(paths.triples)
    triples_by_id = {t.id: t for t in triples}
    vectors, _ = read_embeddings(paths.root)
    header_text = prompt_text("grounding_header.txt", config.prompts_dir or None)
    format_text = prompt_text("grounding_format.txt", config.prompts_dir or None)
    quotas = {
        SourceKind.USER_QUERY: config.retriever.quota_user,
        SourceKind.CONTEXT: config.retriever.quota_context,
        SourceKind.REFERENCE: config.retriever.quota_reference,
    }

    if force:
        paths.candidates.unlink(missing_ok=True)
        paths.attributions.unlink(missing_ok=True)
    already = _judged_triple_ids(paths.attributions)

    by_instance: dict[str, dict[SourceKind, list[Triple]]] = {}
    for triple in triples:
        by_instance.setdefault(triple.instance_id, {}).setdefault(
            triple.source, []
        ).append(triple)

    totals = {"batches": 0, "repairs": 0, "half_retries": 0, "dropped_evidence": 0}
    client = _client(config, "judge")
    try:
        with paths.candidates.open("a") as cand_fh, paths.attributions.open("a") as att_fh:
            for instance in sorted(instances, key=lambda i: i.instance_id):
                per_source = by_instance.get(instance.instance_id, {})
                generated = per_source.get(SourceKind.GENERATED, [])
                if not generated:
                    continue
                if all(t.id in already for t in generated):
                    continue

                def embedding_of(triple: Triple) -> TripleEmbedding:
                    try:
                        return TripleEmbedding(triple_id=triple.id, vector=vectors[triple.id])
                    except KeyError:
                        raise DataError(f"no embedding stored for triple {triple.id}")

                pools = {
                    source: [embedding_of(t) for t in per_source.get(source, [])]
                    for source in EVIDENCE_SOURCES
                }
                items: list[tuple[Triple, CandidateSet]] = [
                    (triple, select_candidates(embedding_of(triple), pools, quotas))
                    for triple in generated
                ]
                outcome = attribute_instance(
                    client,
                    items,
                    triples_by_id,
                    header_text,
                    format_text,
                    batch_size=config.judge.batch_size,
                    id_prefix=f"{instance.instance_id}:",
                )
                # checkpoint: one whole instance at a time, only on success
                cand_fh.write("".join(
                    json.dumps(cs.to_dict(), sort_keys=True) + "\n"
                    for _, cs in items
                ))
                att_fh.write("".join(
                    json.dumps(row.to_dict(), sort_keys=True) + "\n"
                    for row in outcome.rows
                ))
                cand_fh.flush()
                att_fh.flush()
                totals["batches"] += outcome.batches
                totals["repairs"] += outcome.repairs
                totals["half_retries"] += outcome.half_retries
                totals["dropped_evidence"] += outcome.dropped_evidence
    finally:
        client.close()

    for path in (paths.candidates, paths.attributions):
        if not path.exists():
            path.write_text("")
    paths.judge_report.write_text(json.dumps(totals, indent=2, sort_keys=True) + "\n")
    return [paths.candidates, paths.attributions, paths.judge_report]


def _records_by_instance(
    rows: Sequence[AttributionRow], triples_by_id: dict[str, Triple]
) -> dict[str, list[AttributionRecord]]:
    out: dict[str, list[AttributionRecord]] = {}
    for row in rows:
        triple = triples_by_id.get(row.record.triple_id)
        if triple is None:
            raise DataError(f"attribution row for unknown triple {row.record.triple_id}")
        out.setdefault(triple.instance_id, []).append(row.record)
    return out


def stage_metrics(config: PipelineConfig, paths: RunPaths, force: bool) -> list[Path]:
    instances = corpus.read_instances(paths.instances_generated)
    triples = _read_triples(paths.triples)
    triples_by_id = {t.id: t for t in triples}
    rows = read_attributions(paths.attributions)
    records = _records_by_instance(rows, triples_by_id)

    counts: dict[str, dict[SourceKind, int]] = {}
    for triple in triples:
        counts.setdefault(triple.instance_id, {}).setdefault(triple.source, 0)
        counts[triple.instance_id][triple.source] += 1

    reports = []
    rouge_rows = []
    for instance in sorted(instances, key=lambda i: i.instance_id):
        per_source = counts.get(instance.instance_id, {})
        reports.append(
            instance_metrics(
                records.get(instance.instance_id, []),
                generated_total=per_source.get(SourceKind.GENERATED, 0),
                reference_total=per_source.get(SourceKind.REFERENCE, 0),
                condition=instance.condition,
                model_tag=instance.model_tag,
                instance_id=instance.instance_id,
            )
        )
        scores = {"instance_id": instance.instance_id}
        for name, score in (
            ("rouge1", rouge1(instance.generated, instance.reference)),
            ("rougeL", rougeL(instance.generated, instance.reference)),
        ):
            scores[f"{name}_precision"] = score.precision
            scores[f"{name}_recall"] = score.recall
            scores[f"{name}_f1"] = score.f1
        rouge_rows.append(scores)

    cells = group_into_cells(reports)
    write_reports_jsonl(reports, paths.metrics_instances)
    write_reports_jsonl(cells, paths.metrics_cells)
    write_cells_csv(cells, paths.metrics_table)
    _write_jsonl(paths.rouge_scores, rouge_rows)
    return [
        paths.metrics_instances,
        paths.metrics_cells,
        paths.metrics_table,
        paths.rouge_scores,
    ]


def _cells_from_file(path: Path) -> list[MetricCell]:
    cells = []
    for line in path.read_text().splitlines():
        if not line.strip():
            continue
        payload = json.loads(line)
        cells.append(
            MetricCell(
                model=payload["model_tag"],
                condition=payload["condition"],
                values={name: payload.get(name) for name in metrics.TABLE_COLUMNS},
            )
        )
    return cells


def stage_analyze(config: PipelineConfig, paths: RunPaths, force: bool) -> list[Path]:
    cells = _cells_from_file(paths.metrics_cells)
    if not cells:
        raise DataError("no metric cells to analyze")
    triples_by_id = {t.id: t for t in _read_triples(paths.triples)}
    instances = {
        i.instance_id: i for i in corpus.read_instances(paths.instances_generated)
    }
    rows = read_attributions(paths.attributions)

    baseline = config.analysis.baseline_model or min(c.model for c in cells)
    paths.analysis_summary.parent.mkdir(parents=True, exist_ok=True)

    write_metric_deltas_csv(cells, baseline, paths.deltas_csv)

    grouped: dict[tuple[str, str], list[AttributionRecord]] = {}
    generated_totals: dict[tuple[str, str], int] = {}
    for triple in triples_by_id.values():
        if triple.source is not SourceKind.GENERATED:
            continue
        instance = instances.get(triple.instance_id)
        if instance is None:
            raise DataError(f"triple {triple.id} references unknown instance")
        key = (instance.model_tag, instance.condition)
        generated_totals[key] = generated_totals.get(key, 0) + 1
        grouped.setdefault(key, [])
    for row in rows:
        triple = triples_by_id.get(row.record.triple_id)
        instance = instances[triple.instance_id]
        grouped[(instance.model_tag, instance.condition)].append(row.record)
    partitions = {
        key: partition(records, generated_totals[key])
        for key, records in grouped.items()
    }
    write_venn_csv(partitions, baseline, paths.venn_csv)

    stability = cross_condition_stability(cells)
    try:
        decomposition = decompose_sk_variance(
            [c.get("pkp") for c in cells], [c.get("pr") for c in cells]
        )
    except DataError:
        # too few strictly positive cells; the summary records the gap
        decomposition = None
    write_summary_json(stability, decomposition, paths.analysis_summary)
    return [paths.deltas_csv, paths.venn_csv, paths.analysis_summary]


def _read_candidate_sets(path: Path) -> dict[str, CandidateSet]:
    out = {}
    for line in path.read_text().splitlines():
        if line.strip():
            cs = CandidateSet.from_dict(json.loads(line))
            out[cs.generated_triple_id] = cs
    return out


def stage_humaneval_export(
    config: PipelineConfig, paths: RunPaths, force: bool
) -> list[Path]:
    instances = corpus.read_instances(paths.instances_generated)
    triples = _read_triples(paths.triples)
    candidate_sets = _read_candidate_sets(paths.candidates)
    rows = read_attributions(paths.attributions)
    records = {row.record.triple_id: row.record for row in rows}

    ext_tasks, att_tasks = humaneval.sample_tasks(
        instances,
        triples,
        candidate_sets,
        n_extraction=config.humaneval.n_extraction,
        n_attribution=config.humaneval.n_attribution,
        triples_per_task=config.humaneval.triples_per_task,
        seed=config.seed,
    )
    paths.humaneval_tasks.parent.mkdir(parents=True, exist_ok=True)
    humaneval.write_tasks(paths.humaneval_tasks, [*ext_tasks, *att_tasks])
    humaneval.write_labels(
        paths.pseudo_labels, humaneval.make_pseudo_labels(ext_tasks, att_tasks, records)
    )
    return [paths.humaneval_tasks, paths.pseudo_labels]


def stage_humaneval_score(
    config: PipelineConfig, paths: RunPaths, force: bool
) -> list[Path]:
    ext_tasks, att_tasks = humaneval.read_tasks(paths.humaneval_tasks)
    rows = read_attributions(paths.attributions)
    records = {row.record.triple_id: row.record for row in rows}

    label_paths = []
    for configured in (
        config.humaneval.extraction_labels,
        config.humaneval.attribution_labels,
    ):
        if configured and Path(configured) not in label_paths:
            label_paths.append(Path(configured))
    if not label_paths:
        label_paths = [paths.pseudo_labels]

    extraction_labels: dict[tuple[str, int], bool] = {}
    attribution_labels: dict[tuple[str, int], bool] = {}
    for path in label_paths:
        labels = humaneval.read_labels(path)
        for store, loaded in (
            (extraction_labels, labels.extraction),
            (attribution_labels, labels.attribution),
        ):
            for key, value in loaded.items():
                if key in store and store[key] != value:
                    raise DataError(f"conflicting labels for {key} across files")
                store[key] = value
    merged = humaneval.LabelSet(
        extraction=extraction_labels, attribution=attribution_labels
    )

    summary = humaneval.build_validation_summary(
        humaneval.score_extraction(ext_tasks, merged),
        humaneval.score_attribution(att_tasks, merged, records),
    )
    paths.validation_summary.write_text(
        json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n"
    )
    return [paths.validation_summary]


STAGE_IMPLS: dict[str, Callable[[PipelineConfig, RunPaths, bool], list[Path]]] = {
    "ingest": stage_ingest,
    "conditions": stage_conditions,
    "generate": stage_generate,
    "extract": stage_extract,
    "embed": stage_embed,
    "judge": stage_judge,
    "metrics": stage_metrics,
    "analyze": stage_analyze,
    "humaneval-export": stage_humaneval_export,
    "humaneval-score": stage_humaneval_score,
}

assert set(STAGE_IMPLS) == set(STAGES)


# --------------------------------------------------------- orchestration


def _prompt_hashes(config: PipelineConfig) -> dict[str, str]:
    directory = config.prompts_dir or None
    bundle = load_prompt_bundle(directory)

    def sha(name: str) -> str:
        text = prompt_text(name, directory)
        return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]

    return {
        "extraction_bundle": bundle.content_hash(),
        "generation": sha("generation.txt"),
        "grounding_header": sha("grounding_header.txt"),
        "grounding_format": sha("grounding_format.txt"),
    }


def open_manifest(config: PipelineConfig, run_id: str) -> tuple[RunManifest, RunPaths]:
    root = Path(config.runs_dir) / run_id
    root.mkdir(parents=True, exist_ok=True)
    paths = RunPaths(root=root)
    if (root / MANIFEST_NAME).exists():
        manifest = RunManifest.load(root)
    else:
        manifest = RunManifest.create(
            run_id, config_hash(config), _prompt_hashes(config), config.seed
        )
        manifest.save(root)
    return manifest, paths


def run_stage(
    config: PipelineConfig, run_id: str, stage: str, force: bool = False
) -> RunManifest:
    """Execute one stage; a done stage is a no-op unless forced."""
    manifest, paths = open_manifest(config, run_id)
    if manifest.is_done(stage) and not force:
        return manifest
    manifest.ensure_ready(stage, paths.root)
    try:
        artifacts = STAGE_IMPLS[stage](config, paths, force)
    except ClaimtraceError as exc:
        manifest.mark_failed(stage, str(exc))
        manifest.save(paths.root)
        raise
    manifest.mark_done(stage, paths.root, artifacts, config_hash(config))
    manifest.save(paths.root)
    return manifest


def run_all(config: PipelineConfig, run_id: str, force: bool = False) -> RunManifest:
    manifest = None
    for stage in STAGES:
        manifest = run_stage(config, run_id, stage, force=force)
    return manifest
