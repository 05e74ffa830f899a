"""Deterministic stand-in for the chat and embedding endpoints.

Speaks the same wire protocol as real servers, entirely from a fixture:

* embeddings are hash-seeded from the input text, so identical texts get
  identical vectors and reruns are byte-identical;
* extraction prompts are answered with canned triples for every fixture
  text found inside the prompt (context prompts contain several chunks,
  so several entries can contribute);
* grounding prompts are answered by exact string match of the generated
  triple against the displayed candidates;
* generation prompts are answered by the canned response whose key the
  prompt contains.

The server also counts concurrent in-flight requests (`GET /stats`) and
can be told to fail upcoming requests (`POST /control`), which is how the
gateway's retry and concurrency-cap behaviour is exercised.

Prompt-kind detection keys off the section markers the packaged templates
emit; the candidate parser assumes triple fields contain no single-quote
delimiters, which holds for every fixture this server is meant to serve.
"""
from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Mapping

from .errors import DataError

EXTRACTION_MARKER = "=== SOURCE TEXT ==="
JUDGE_MARKER = "=== MICRO-BATCH ==="

_GENERATED_RE = re.compile(r"^GENERATED: s='(.*)', p='(.*)', o='(.*)'$", re.MULTILINE)
_CANDIDATE_RE = re.compile(
    r"^\[(\d+)\] \((?:user|context|reference)#\d+, s='(.*)', p='(.*)', o='(.*)'\)$",
    re.MULTILINE,
)
_BLOCK_RE = re.compile(r"--- GENERATED index: (\d+) ---")


@dataclass
class MockFixture:
    """Canned behaviour for one mock server."""

    embedding_dim: int = 32
    guided_decoding: bool = True
    extract_style: str = "json"  # or "labeled"
    default_response: str = ""
    extract: list[dict] = field(default_factory=list)
    generate: list[dict] = field(default_factory=list)

    @classmethod
    def from_dict(cls, payload: Mapping) -> "MockFixture":
        fixture = cls(
            embedding_dim=int(payload.get("embedding_dim", 32)),
            guided_decoding=bool(payload.get("guided_decoding", True)),
            extract_style=payload.get("extract_style", "json"),
            default_response=payload.get("default_response", ""),
            extract=list(payload.get("extract", [])),
            generate=list(payload.get("generate", [])),
        )
        if fixture.extract_style not in ("json", "labeled"):
            raise DataError(f"unknown extract_style {fixture.extract_style!r}")
        for entry in fixture.extract:
            if "text" not in entry or "triples" not in entry:
                raise DataError("extract entries need 'text' and 'triples'")
        for entry in fixture.generate:
            if "query_contains" not in entry or "response" not in entry:
                raise DataError("generate entries need 'query_contains' and 'response'")
        return fixture

    @classmethod
    def from_file(cls, path: Path) -> "MockFixture":
        path = Path(path)
        if not path.exists():
            raise DataError(f"fixture file not found: {path}")
        try:
            return cls.from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: fixture is not valid JSON ({exc})")


def deterministic_embedding(text: str, dim: int) -> list[float]:
    """Hash-seeded pseudo-random vector; same text, same vector, any process."""
    values = []
    for i in range(dim):
        digest = hashlib.sha256(f"{text}\x1f{i}".encode("utf-8")).digest()
        values.append(int.from_bytes(digest[:8], "big") / 2**63 - 1.0)
    return values


def _render_extraction(triples: list[dict], style: str) -> str:
    if style == "labeled":
        groups = [
            f"Subject: {t['subject']}\nPredicate: {t['predicate']}\nObject: {t['object']}"
            for t in triples
        ]
        return "\n\n".join(groups)
    return json.dumps(
        [{"subject": t["subject"], "predicate": t["predicate"], "object": t["object"]}
         for t in triples]
    )


def _judge_by_exact_match(prompt: str) -> str:
    verdicts = []
    pieces = _BLOCK_RE.split(prompt)
    # pieces: [prefix, idx, block, idx, block, ...]
    for i in range(1, len(pieces), 2):
        index = int(pieces[i])
        block = pieces[i + 1]
        generated = _GENERATED_RE.search(block)
        if generated is None:
            continue
        spo = generated.groups()
        evidence = [
            int(m.group(1))
            for m in _CANDIDATE_RE.finditer(block)
            if m.groups()[1:] == spo
        ]
        verdicts.append({"index": index, "evidence": evidence})
    return json.dumps(verdicts)


class MockLLMServer(ThreadingHTTPServer):
    """In-process HTTP server; use as a context manager in tests."""

    daemon_threads = True

    def __init__(self, fixture: MockFixture, host: str = "127.0.0.1", port: int = 0) -> None:
        super().__init__((host, port), _Handler)
        self.fixture = fixture
        self.lock = threading.Lock()
        self.stats = {"requests": 0, "chat": 0, "embeddings": 0, "in_flight": 0, "max_in_flight": 0}
        self.fail_next = 0
        self.fail_status = 429
        self.delay_s = 0.0
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}/v1"

    def start(self) -> None:
        self._thread = threading.Thread(target=self.serve_forever, daemon=True)
        self._thread.start()

    def stop(self) -> None:
        self.shutdown()
        if self._thread is not None:
            self._thread.join(timeout=5)
        self.server_close()

    def __enter__(self) -> "MockLLMServer":
        self.start()
        return self

    def __exit__(self, *exc_info) -> None:
        self.stop()


class _Handler(BaseHTTPRequestHandler):
    server: MockLLMServer

    def log_message(self, *_args) -> None:  # keep test output quiet
        pass

    def _send_json(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length) if length else b"{}"
        return json.loads(raw)

    def do_GET(self) -> None:
        if self.path == "/stats":
            with self.server.lock:
                self._send_json(200, dict(self.server.stats))
        else:
            self._send_json(404, {"error": {"message": f"no route {self.path}"}})

    def do_POST(self) -> None:
        if self.path == "/control":
            body = self._read_body()
            with self.server.lock:
                self.server.fail_next = int(body.get("fail_next", self.server.fail_next))
                self.server.fail_status = int(body.get("fail_status", self.server.fail_status))
                self.server.delay_s = float(body.get("delay_s", self.server.delay_s))
                if body.get("reset_stats"):
                    for key in self.server.stats:
                        self.server.stats[key] = 0
            self._send_json(200, {"ok": True})
            return
        if self.path.endswith("/chat/completions"):
            self._handle_llm("chat")
        elif self.path.endswith("/embeddings"):
            self._handle_llm("embeddings")
        else:
            self._send_json(404, {"error": {"message": f"no route {self.path}"}})

    # ------------------------------------------------------------ endpoints

    def _handle_llm(self, kind: str) -> None:
        server = self.server
        with server.lock:
            server.stats["requests"] += 1
            server.stats[kind] += 1
            server.stats["in_flight"] += 1
            server.stats["max_in_flight"] = max(
                server.stats["max_in_flight"], server.stats["in_flight"]
            )
            should_fail = server.fail_next > 0
            if should_fail:
                server.fail_next -= 1
            delay = server.delay_s
        try:
            if delay:
                time.sleep(delay)
            if should_fail:
                self._send_json(server.fail_status, {"error": {"message": "injected failure"}})
                return
            body = self._read_body()
            if kind == "chat":
                self._chat(body)
            else:
                self._embeddings(body)
        finally:
            with server.lock:
                server.stats["in_flight"] -= 1

    def _chat(self, body: dict) -> None:
        fixture = self.server.fixture
        if "response_format" in body and not fixture.guided_decoding:
            self._send_json(
                400,
                {"error": {"message": "response_format is not supported by this server"}},
            )
            return
        prompt = "\n".join(m.get("content", "") for m in body.get("messages", []))
        if JUDGE_MARKER in prompt:
            text = _judge_by_exact_match(prompt)
        elif EXTRACTION_MARKER in prompt:
            triples = [
                triple
                for entry in fixture.extract
                if entry["text"] in prompt
                for triple in entry["triples"]
            ]
            text = _render_extraction(triples, fixture.extract_style)
        else:
            text = fixture.default_response
            for entry in fixture.generate:
                if entry["query_contains"] in prompt:
                    text = entry["response"]
                    break
        self._send_json(200, {
            "id": "mock",
            "model": body.get("model", "mock-model"),
            "choices": [{
                "index": 0,
                "message": {"role": "assistant", "content": text},
                "finish_reason": "stop",
            }],
        })

    def _embeddings(self, body: dict) -> None:
        fixture = self.server.fixture
        inputs = body.get("input", [])
        if isinstance(inputs, str):
            inputs = [inputs]
        data = [
            {"index": i, "embedding": deterministic_embedding(text, fixture.embedding_dim)}
            for i, text in enumerate(inputs)
        ]
        self._send_json(200, {"model": body.get("model", "mock-model"), "data": data})
