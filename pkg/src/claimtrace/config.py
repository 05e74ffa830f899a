"""Run configuration: dataclasses, layered loading, and hashing.

Precedence is defaults < config file. Secrets never live in the file:
each endpoint names an environment variable that holds its bearer token,
and the resolved config (hashed into the run manifest) carries only the
variable name.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from .core import CONDITIONS
from .errors import ConfigError

ENDPOINT_NAMES = ("extractor", "judge", "embedder", "generator")


@dataclass(frozen=True)
class EndpointConfig:
    url: str = "http://127.0.0.1:8139/v1"
    model: str = "mock-model"
    max_concurrency: int = 4
    timeout_s: float = 60.0
    max_retries: int = 3
    backoff_base_s: float = 0.25
    auth_token_env: str = ""


@dataclass(frozen=True)
class CorpusConfig:
    input_path: str = "corpus.jsonl"
    conditions: tuple[str, ...] = CONDITIONS
    chunk_tokens: int = 128
    max_chunks: int = 3


@dataclass(frozen=True)
class RetrieverConfig:
    quota_user: int = 2
    quota_context: int = 2
    quota_reference: int = 3
    embed_batch_size: int = 64


@dataclass(frozen=True)
class JudgeConfig:
    batch_size: int = 8


@dataclass(frozen=True)
class HumanEvalConfig:
    n_extraction: int = 128
    n_attribution: int = 256
    triples_per_task: int = 8
    # Label files to score; empty means score the exported pseudo-labels
    # (a pipeline self-check that must come out at accuracy 1.0).
    extraction_labels: str = ""
    attribution_labels: str = ""


@dataclass(frozen=True)
class AnalysisConfig:
    baseline_model: str = ""


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    runs_dir: str = "runs"
    cache_dir: str = "cache"
    prompts_dir: str = ""  # empty means the packaged templates
    subsample_per_condition: int | None = None
    endpoints: Mapping[str, EndpointConfig] = field(
        default_factory=lambda: {name: EndpointConfig() for name in ENDPOINT_NAMES}
    )
    corpus: CorpusConfig = field(default_factory=CorpusConfig)
    retriever: RetrieverConfig = field(default_factory=RetrieverConfig)
    judge: JudgeConfig = field(default_factory=JudgeConfig)
    humaneval: HumanEvalConfig = field(default_factory=HumanEvalConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)

    def endpoint(self, name: str) -> EndpointConfig:
        try:
            return self.endpoints[name]
        except KeyError:
            raise ConfigError(f"no endpoint named {name!r} configured")


def _build(cls, payload: Mapping[str, Any], context: str):
    if not isinstance(payload, Mapping):
        raise ConfigError(f"{context}: expected a mapping, got {type(payload).__name__}")
    fields = {f.name for f in cls.__dataclass_fields__.values()}  # type: ignore[attr-defined]
    unknown = set(payload) - fields
    if unknown:
        raise ConfigError(f"{context}: unknown keys {sorted(unknown)}")
    return payload


def _merge_endpoint(base: EndpointConfig, payload: Mapping[str, Any], context: str) -> EndpointConfig:
    _build(EndpointConfig, payload, context)
    return replace(base, **payload)


def config_from_mapping(payload: Mapping[str, Any]) -> PipelineConfig:
    base = PipelineConfig()
    payload = dict(_build(PipelineConfig, payload, "config"))

    endpoints = dict(base.endpoints)
    for name, sub in dict(payload.pop("endpoints", {})).items():
        if name not in ENDPOINT_NAMES:
            raise ConfigError(
                f"config: unknown endpoint {name!r}; expected one of {list(ENDPOINT_NAMES)}"
            )
        endpoints[name] = _merge_endpoint(endpoints[name], sub, f"endpoints.{name}")

    sections = {
        "corpus": (CorpusConfig, base.corpus),
        "retriever": (RetrieverConfig, base.retriever),
        "judge": (JudgeConfig, base.judge),
        "humaneval": (HumanEvalConfig, base.humaneval),
        "analysis": (AnalysisConfig, base.analysis),
    }
    built: dict[str, Any] = {}
    for key, (cls, default) in sections.items():
        sub = payload.pop(key, None)
        if sub is None:
            built[key] = default
        else:
            kwargs = dict(_build(cls, sub, key))
            if key == "corpus" and "conditions" in kwargs:
                kwargs["conditions"] = tuple(kwargs["conditions"])
                unknown = set(kwargs["conditions"]) - set(CONDITIONS)
                if unknown:
                    raise ConfigError(f"corpus.conditions: unknown conditions {sorted(unknown)}")
            built[key] = replace(default, **kwargs)

    return replace(base, endpoints=endpoints, **payload, **built)


def load_config(path: Path | str | None) -> PipelineConfig:
    """Defaults merged with one YAML (or JSON) file, if given."""
    if path is None:
        return PipelineConfig()
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        payload = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})")
    if payload is None:
        return PipelineConfig()
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return config_from_mapping(payload)


def config_hash(config: PipelineConfig) -> str:
    """Stable hash of the resolved configuration."""
    def encode(value: Any) -> Any:
        if hasattr(value, "__dataclass_fields__"):
            return {k: encode(v) for k, v in asdict(value).items()}
        if isinstance(value, Mapping):
            return {k: encode(v) for k, v in sorted(value.items())}
        if isinstance(value, tuple):
            return list(value)
        return value

    payload = json.dumps(encode(config), sort_keys=True)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]
