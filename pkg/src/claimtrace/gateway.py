"""HTTP access to chat-completion and embedding endpoints.

One ``LLMClient`` wraps one endpoint: a JSON-over-HTTP server speaking the
de-facto open completion/embedding wire protocol. The client owns three
behaviours the pipeline everywhere relies on:

* a content-addressed on-disk response cache (one file per request key,
  raw response bytes), which is what makes warm reruns byte-identical
  and free;
* bounded retries with exponential backoff on 429/5xx and transport
  failures, surfacing a TransportError that names the endpoint;
* an in-process concurrency cap per endpoint via a semaphore.

Embeddings are L2-normalised here at the boundary, whatever the server
returned, so downstream cosine similarity is always a plain dot product.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import httpx
import numpy as np

from .config import EndpointConfig
from .core import EvaluationInstance
from .errors import CapabilityError, ProtocolError, StructuralError, TransportError

_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[tuple[str, str], ...]  # (role, content) pairs
    temperature: float = 0.0
    max_tokens: int = 2048
    response_schema: dict | None = None

    def body(self, model: str) -> dict:
        payload: dict = {
            "model": model,
            "messages": [{"role": role, "content": content} for role, content in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        if self.response_schema is not None:
            payload["response_format"] = {
                "type": "json_schema",
                "json_schema": {"name": "structured_output", "schema": self.response_schema},
            }
        return payload


@dataclass(frozen=True)
class EmbeddingRequest:
    texts: tuple[str, ...]

    def body(self, model: str) -> dict:
        return {"model": model, "input": list(self.texts)}


@dataclass(frozen=True)
class ChatResult:
    text: str
    finish_reason: str
    from_cache: bool


def cache_key(endpoint_kind: str, model: str, body: dict) -> str:
    payload = json.dumps(
        {"kind": endpoint_kind, "model": model, "body": body}, sort_keys=True
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


class ResponseCache:
    """One file per request key holding the raw response body."""

    def __init__(self, directory: Path) -> None:
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> bytes | None:
        with self._lock:
            path = self._path(key)
            if not path.exists():
                return None
            return path.read_bytes()

    def put(self, key: str, body: bytes) -> None:
        with self._lock:
            tmp = self._path(key).with_suffix(".tmp")
            tmp.write_bytes(body)
            tmp.replace(self._path(key))


class LLMClient:
    """One configured endpoint plus its cache, retry, and concurrency policy."""

    def __init__(self, name: str, config: EndpointConfig, cache: ResponseCache | None = None) -> None:
        self.name = name
        self.config = config
        self.cache = cache
        self._semaphore = threading.Semaphore(config.max_concurrency)
        self._http = httpx.Client(timeout=config.timeout_s)

    def close(self) -> None:
        self._http.close()

    # ------------------------------------------------------------ plumbing

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        if self.config.auth_token_env:
            token = os.environ.get(self.config.auth_token_env, "")
            if token:
                headers["Authorization"] = f"Bearer {token}"
        return headers

    def _post(self, path: str, body: dict) -> bytes:
        url = self.config.url.rstrip("/") + path
        last_error: str = "no attempts made"
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self.config.backoff_base_s * (2 ** (attempt - 1)))
            try:
                with self._semaphore:
                    response = self._http.post(url, json=body, headers=self._headers())
            except httpx.HTTPError as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                continue
            if response.status_code == 200:
                return response.content
            if response.status_code in _RETRYABLE_STATUS:
                last_error = f"HTTP {response.status_code}"
                continue
            self._raise_client_error(response)
        raise TransportError(
            f"endpoint {self.name!r} ({url}) failed after "
            f"{self.config.max_retries + 1} attempts: {last_error}"
        )

    def _raise_client_error(self, response: httpx.Response) -> None:
        detail = response.text[:500]
        if response.status_code == 400 and "response_format" in detail:
            raise CapabilityError(
                f"endpoint {self.name!r} does not support schema-guided output: {detail}"
            )
        raise ProtocolError(
            f"endpoint {self.name!r} rejected the request (HTTP {response.status_code}): {detail}"
        )

    def _request(self, kind: str, path: str, body: dict) -> tuple[bytes, bool]:
        key = cache_key(kind, self.config.model, body)
        if self.cache is not None:
            hit = self.cache.get(key)
            if hit is not None:
                return hit, True
        raw = self._post(path, body)
        if self.cache is not None:
            self.cache.put(key, raw)
        return raw, False

    # ------------------------------------------------------------ operations

    def chat_complete(self, request: ChatRequest) -> ChatResult:
        raw, cached = self._request("chat", "/chat/completions", request.body(self.config.model))
        try:
            payload = json.loads(raw)
            choice = payload["choices"][0]
            text = choice["message"]["content"]
            finish = choice.get("finish_reason", "")
        except (json.JSONDecodeError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"endpoint {self.name!r} sent a malformed chat payload: {exc}")
        if not isinstance(text, str):
            raise ProtocolError(f"endpoint {self.name!r} sent a non-text completion")
        return ChatResult(text=text, finish_reason=finish, from_cache=cached)

    def embed(self, request: EmbeddingRequest) -> list[np.ndarray]:
        if not request.texts:
            raise StructuralError("embed called with no texts")
        raw, _ = self._request("embeddings", "/embeddings", request.body(self.config.model))
        try:
            payload = json.loads(raw)
            rows = sorted(payload["data"], key=lambda r: r["index"])
            vectors = [np.asarray(row["embedding"], dtype=np.float64) for row in rows]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ProtocolError(f"endpoint {self.name!r} sent a malformed embedding payload: {exc}")
        if len(vectors) != len(request.texts):
            raise ProtocolError(
                f"endpoint {self.name!r} returned {len(vectors)} embeddings "
                f"for {len(request.texts)} inputs"
            )
        dimensions = {v.shape for v in vectors}
        if len(dimensions) > 1 or any(v.ndim != 1 for v in vectors):
            raise ProtocolError(
                f"endpoint {self.name!r} returned inconsistent embedding shapes: {dimensions}"
            )
        normalised = []
        for vector in vectors:
            norm = float(np.linalg.norm(vector))
            if norm == 0.0:
                raise ProtocolError(f"endpoint {self.name!r} returned a zero embedding")
            normalised.append(vector / norm)
        return normalised


GENERATION_CONTEXT_HEADER = "=== RETRIEVED CONTEXT ==="
GENERATION_QUERY_HEADER = "=== USER QUERY ==="


def render_generation_prompt(instance: EvaluationInstance, template: str) -> str:
    """Fill the generation template; no context block at all without chunks."""
    if instance.context_chunks:
        block = GENERATION_CONTEXT_HEADER + "\n" + "\n\n".join(instance.context_chunks) + "\n"
    else:
        block = ""
    return template.format(user_query=instance.user_query, context_block=block)


def generate_response(
    client: LLMClient, instance: EvaluationInstance, template: str
) -> EvaluationInstance:
    """Produce the model answer for one instance (greedy, temperature 0)."""
    if instance.generated:
        raise StructuralError(f"{instance.instance_id} already has generated text")
    prompt = render_generation_prompt(instance, template)
    result = client.chat_complete(ChatRequest(messages=(("user", prompt),)))
    if not result.text.strip():
        raise ProtocolError(f"endpoint {client.name!r} returned an empty completion")
    return dataclasses.replace(
        instance, generated=result.text, model_tag=client.config.model
    )
