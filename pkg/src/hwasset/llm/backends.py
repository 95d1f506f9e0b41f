"""Chat/embedding backends: HTTP, replay, record and scripted.

Every backend answers :class:`ChatRequest` objects with a
:class:`BackendReply`.  The replay backend never opens a socket; it reads
one JSON fixture per prompt hash and reproduces the stored token counts
and latency, so replayed runs are reproducible to the byte.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import httpx

from ..errors import GatewayError, ReplayMissError
from .ratelimit import TokenBucket

log = logging.getLogger(__name__)

RETRY_STATUS = {408, 409, 425, 429, 500, 502, 503, 504}


@dataclass(frozen=True)
class ChatRequest:
    template_id: str
    messages: tuple  # of templates.Message
    model: str
    temperature: float
    prompt_hash: str
    attempt: str = "initial"  # initial | repair | retry-N


@dataclass(frozen=True)
class BackendReply:
    text: str
    input_tokens: int
    output_tokens: int
    latency: float


def estimate_tokens(text: str) -> int:
    return max(1, len(text) // 4) if text else 0


def embedding_hash(texts, model: str) -> str:
    h = hashlib.sha256(model.encode())
    for t in texts:
        h.update(b"\x00")
        h.update(t.encode("utf-8"))
    return h.hexdigest()


class HttpBackend:
    """OpenAI-compatible ``/chat/completions`` and ``/embeddings`` client."""

    kind = "http"

    def __init__(
        self,
        base_url: str,
        api_key_env: str = "HWASSET_API_KEY",
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        rate_limit: Optional[float] = None,
        transport: Optional[httpx.BaseTransport] = None,
        sleep=time.sleep,
    ):
        url = httpx.URL(base_url)
        if url.scheme not in ("http", "https") or not url.host:
            raise GatewayError(f"invalid backend URL {base_url!r}")
        self.base_url = str(url).rstrip("/")
        self.api_key_env = api_key_env
        self.max_retries = max_retries
        self.backoff = backoff
        self.limiter = TokenBucket(rate_limit) if rate_limit else None
        self.sleep = sleep
        headers = {"Content-Type": "application/json"}
        token = os.environ.get(api_key_env)
        if token:
            headers["Authorization"] = f"Bearer {token}"
        self.client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self.calls = 0

    def _post(self, path: str, payload: dict) -> dict:
        last = None
        for attempt in range(self.max_retries + 1):
            if self.limiter is not None:
                self.limiter.acquire()
            self.calls += 1
            try:
                resp = self.client.post(self.base_url + path, json=payload)
            except httpx.HTTPError as exc:
                last = f"{type(exc).__name__}: {exc}"
            else:
                if resp.status_code == 200:
                    try:
                        return resp.json()
                    except ValueError as exc:
                        raise GatewayError(f"{path}: response is not JSON: {exc}") from exc
                last = f"HTTP {resp.status_code}: {resp.text[:200]}"
                if resp.status_code not in RETRY_STATUS:
                    raise GatewayError(f"{path}: {last}")
            if attempt < self.max_retries:
                delay = self.backoff * (2**attempt)
                log.warning("%s failed (%s); retrying in %.1fs", path, last, delay)
                self.sleep(delay)
        raise GatewayError(f"{path}: giving up after {self.max_retries + 1} attempts: {last}")

    def chat(self, req: ChatRequest) -> BackendReply:
        payload = {
            "model": req.model,
            "temperature": req.temperature,
            "messages": [m.to_json() for m in req.messages],
        }
        t0 = time.monotonic()
        data = self._post("/chat/completions", payload)
        latency = time.monotonic() - t0
        try:
            text = data["choices"][0]["message"]["content"] or ""
        except (KeyError, IndexError, TypeError) as exc:
            raise GatewayError(f"malformed chat response: {exc}") from exc
        usage = data.get("usage") or {}
        prompt_text = "".join(m.content for m in req.messages)
        return BackendReply(
            text,
            int(usage.get("prompt_tokens", estimate_tokens(prompt_text))),
            int(usage.get("completion_tokens", estimate_tokens(text))),
            latency,
        )

    def embed(self, texts, model: str) -> tuple[list, BackendReply]:
        t0 = time.monotonic()
        data = self._post("/embeddings", {"model": model, "input": list(texts)})
        latency = time.monotonic() - t0
        try:
            rows = sorted(data["data"], key=lambda r: r.get("index", 0))
            vectors = [r["embedding"] for r in rows]
        except (KeyError, TypeError) as exc:
            raise GatewayError(f"malformed embedding response: {exc}") from exc
        if len(vectors) != len(texts):
            raise GatewayError(f"expected {len(texts)} embeddings, got {len(vectors)}")
        usage = data.get("usage") or {}
        tokens = int(usage.get("prompt_tokens", sum(estimate_tokens(t) for t in texts)))
        return vectors, BackendReply("", tokens, 0, latency)

    def close(self):
        self.client.close()


def _fixture_payload(req: ChatRequest, reply: BackendReply) -> dict:
    return {
        "prompt_hash": req.prompt_hash,
        "template_id": req.template_id,
        "model": req.model,
        "attempt": req.attempt,
        "response_text": reply.text,
        "input_tokens": reply.input_tokens,
        "output_tokens": reply.output_tokens,
        "latency": reply.latency,
        "messages": [m.to_json() for m in req.messages],
    }


class ReplayBackend:
    """Serve stored responses keyed by prompt hash; never touches the network."""

    kind = "replay"

    def __init__(self, fixtures_dir):
        self.dir = Path(fixtures_dir)
        if not self.dir.is_dir():
            raise GatewayError(f"replay fixtures directory {self.dir} does not exist")
        self.calls = 0
        self.hits: set[str] = set()
        self._lock = threading.Lock()

    def _load(self, key: str) -> dict:
        path = self.dir / f"{key}.json"
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ReplayMissError(key) from None
        except (OSError, ValueError) as exc:
            raise GatewayError(f"unreadable fixture {path}: {exc}") from exc
        with self._lock:
            self.calls += 1
            self.hits.add(key)
        return data

    def chat(self, req: ChatRequest) -> BackendReply:
        d = self._load(req.prompt_hash)
        return BackendReply(d["response_text"], int(d["input_tokens"]), int(d["output_tokens"]), float(d["latency"]))

    def embed(self, texts, model: str):
        d = self._load("emb-" + embedding_hash(texts, model))
        return d["vectors"], BackendReply("", int(d["input_tokens"]), 0, float(d["latency"]))


class RecordBackend:
    """Forward to another backend and store every exchange as a fixture."""

    kind = "record"

    def __init__(self, inner, fixtures_dir):
        self.inner = inner
        self.dir = Path(fixtures_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []
        self._lock = threading.Lock()

    def _write(self, key: str, payload: dict):
        path = self.dir / f"{key}.json"
        path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n", encoding="utf-8")
        with self._lock:
            self.written.append(path)

    def chat(self, req: ChatRequest) -> BackendReply:
        reply = self.inner.chat(req)
        self._write(req.prompt_hash, _fixture_payload(req, reply))
        return reply

    def embed(self, texts, model: str):
        vectors, reply = self.inner.embed(texts, model)
        key = "emb-" + embedding_hash(texts, model)
        self._write(key, {"model": model, "vectors": vectors, "input_tokens": reply.input_tokens, "latency": reply.latency})
        return vectors, reply

    @property
    def calls(self):
        return getattr(self.inner, "calls", 0)


@dataclass
class Rule:
    """One scripted reply: selected by template id and text patterns."""

    template: str
    response: object
    match: list = field(default_factory=list)  # regexes that must all match the final user message
    attempt: Optional[str] = None
    latency: float = 0.5

    def matches(self, req: ChatRequest) -> bool:
        if self.template not in (req.template_id, "*"):
            return False
        if self.attempt is not None and not req.attempt.startswith(self.attempt):
            return False
        last = req.messages[-1].content
        return all(re.search(p, last, re.S) for p in self.match)


class ScriptedBackend:
    """Deterministic offline backend driven by a function or a rule list.

    Used to author replay fixtures and in tests.  Token counts are
    estimated from text length and latency is fixed per rule.
    """

    kind = "scripted"

    def __init__(self, responder: Optional[Callable] = None, rules=(), default=None):
        self.responder = responder
        self.rules = [r if isinstance(r, Rule) else Rule(**r) for r in rules]
        self.default = default
        self.requests: list[ChatRequest] = []
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "ScriptedBackend":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(rules=data.get("rules", ()), default=data.get("default"))

    @property
    def calls(self):
        return len(self.requests)

    def chat(self, req: ChatRequest) -> BackendReply:
        with self._lock:
            self.requests.append(req)
        latency = 0.5
        if self.responder is not None:
            out = self.responder(req)
        else:
            out = self.default
            for rule in self.rules:
                if rule.matches(req):
                    out, latency = rule.response, rule.latency
                    break
            if out is None:
                raise GatewayError(f"no scripted response for {req.template_id} ({req.attempt})")
        text = out if isinstance(out, str) else json.dumps(out)
        prompt = "".join(m.content for m in req.messages)
        return BackendReply(text, estimate_tokens(prompt), estimate_tokens(text), latency)

    def embed(self, texts, model: str):
        raise GatewayError("scripted backend has no embedding endpoint; use the hash embedder")
