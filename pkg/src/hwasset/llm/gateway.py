"""Structured completions with repair, retries and cost/latency accounting."""

from __future__ import annotations

import json
import logging
import re
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional

from ..errors import SchemaError
from .backends import ChatRequest
from .templates import Message, PromptLibrary, prompt_hash

log = logging.getLogger(__name__)

_FENCE_RE = re.compile(r"^\s*```(?:json)?\s*\n?(.*?)\n?```\s*$", re.S)


@dataclass(frozen=True)
class CompletionRecord:
    prompt_hash: str
    template_id: str
    attempt: str
    response_text: str
    latency: float
    input_tokens: int
    output_tokens: int
    cost: float
    model: str
    tag: str = ""
    kind: str = "chat"

    def to_json(self):
        return {
            "prompt_hash": self.prompt_hash,
            "template_id": self.template_id,
            "attempt": self.attempt,
            "latency": self.latency,
            "input_tokens": self.input_tokens,
            "output_tokens": self.output_tokens,
            "cost": self.cost,
            "model": self.model,
            "tag": self.tag,
            "kind": self.kind,
        }


@dataclass(frozen=True)
class Completion:
    value: object  # parsed JSON for structured templates, text otherwise
    records: tuple

    @property
    def record(self) -> CompletionRecord:
        return self.records[-1]


def load_prices(path=None) -> dict:
    """Model id -> (price per input token, price per output token)."""
    if path is None:
        text = resources.files("hwasset.data").joinpath("prices.json").read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    raw = json.loads(text)
    return {k: (float(v[0]), float(v[1])) for k, v in raw.items() if not k.startswith("_")}


def parse_json_reply(text: str):
    m = _FENCE_RE.match(text)
    body = m.group(1) if m else text
    return json.loads(body)


class Gateway:
    """Renders templates, calls a backend and validates the replies.

    Safe for concurrent callers: accounting is guarded by a lock and
    backends serialise their own dispatch.
    """

    def __init__(
        self,
        backend,
        library: Optional[PromptLibrary] = None,
        model: str = "gpt-4o",
        temperature: float = 0.0,
        max_retries: int = 2,
        prices: Optional[dict] = None,
        embed_model: str = "text-embedding-3-small",
    ):
        self.backend = backend
        self.library = library or PromptLibrary.load()
        self.model = model
        self.temperature = temperature
        self.max_retries = max_retries
        self.prices = load_prices() if prices is None else prices
        self.embed_model = embed_model
        self._records: list[CompletionRecord] = []
        self._lock = threading.Lock()
        self._warned_models: set[str] = set()

    # -- accounting -----------------------------------------------------------

    def cost(self, model: str, input_tokens: int, output_tokens: int) -> float:
        price = self.prices.get(model)
        if price is None:
            if model not in self._warned_models:
                self._warned_models.add(model)
                log.warning("no price configured for model %r; cost counted as 0", model)
            return 0.0
        return input_tokens * price[0] + output_tokens * price[1]

    def _account(self, rec: CompletionRecord) -> None:
        with self._lock:
            self._records.append(rec)

    @property
    def records(self) -> list[CompletionRecord]:
        with self._lock:
            return list(self._records)

    def totals(self, tag: Optional[str] = None) -> dict:
        recs = [r for r in self.records if tag is None or r.tag == tag]
        return {
            "calls": len(recs),
            "latency_s": sum(r.latency for r in recs),
            "cost": sum(r.cost for r in recs),
            "input_tokens": sum(r.input_tokens for r in recs),
            "output_tokens": sum(r.output_tokens for r in recs),
        }

    # -- calls ------------------------------------------------------------------

    def _call(self, template_id, messages, attempt, tag) -> tuple[str, CompletionRecord]:
        h = prompt_hash(template_id, messages, self.model)
        req = ChatRequest(template_id, tuple(messages), self.model, self.temperature, h, attempt)
        reply = self.backend.chat(req)
        rec = CompletionRecord(
            prompt_hash=h,
            template_id=template_id,
            attempt=attempt,
            response_text=reply.text,
            latency=reply.latency,
            input_tokens=reply.input_tokens,
            output_tokens=reply.output_tokens,
            cost=self.cost(self.model, reply.input_tokens, reply.output_tokens),
            model=self.model,
            tag=tag,
        )
        self._account(rec)
        return reply.text, rec

    def _validate(self, template, text):
        """Return (value, None) or (None, error message)."""
        try:
            value = parse_json_reply(text)
        except ValueError as exc:
            return None, f"reply is not valid JSON ({exc})"
        errors = sorted(template.validator.iter_errors(value), key=lambda e: list(e.path))
        if errors:
            e = errors[0]
            where = "/".join(str(p) for p in e.path) or "<root>"
            return None, f"schema violation at {where}: {e.message}"
        return value, None

    def complete(self, template_id: str, bindings: dict, tag: str = "") -> Completion:
        """Render, send and validate; one repair round then plain retries."""
        template = self.library[template_id]
        messages = template.render(bindings)
        text, rec = self._call(template_id, messages, "initial", tag)
        records = [rec]
        if not template.structured:
            return Completion(text, tuple(records))
        value, err = self._validate(template, text)
        if err is None:
            return Completion(value, tuple(records))
        log.info("%s reply invalid (%s); sending repair prompt", template_id, err)
        repair = messages + [
            Message("assistant", text),
            Message("user", f"Your reply could not be used: {err}. Reply again with only the corrected JSON document."),
        ]
        text, rec = self._call(template_id, repair, "repair", tag)
        records.append(rec)
        value, err = self._validate(template, text)
        for n in range(1, self.max_retries + 1):
            if err is None:
                break
            log.info("%s still invalid (%s); retry %d/%d", template_id, err, n, self.max_retries)
            retry = messages[:-1] + [
                Message("user", messages[-1].content + f"\n\n(Attempt {n + 1}: answer with JSON only.)")
            ]
            text, rec = self._call(template_id, retry, f"retry-{n}", tag)
            records.append(rec)
            value, err = self._validate(template, text)
        if err is not None:
            raise SchemaError(f"{template_id}: {err}", text)
        return Completion(value, tuple(records))

    def embed(self, texts, tag: str = "") -> list:
        texts = list(texts)
        if not texts:
            return []
        vectors, reply = self.backend.embed(texts, self.embed_model)
        self._account(
            CompletionRecord(
                prompt_hash="",
                template_id="embed",
                attempt="initial",
                response_text="",
                latency=reply.latency,
                input_tokens=reply.input_tokens,
                output_tokens=0,
                cost=self.cost(self.embed_model, reply.input_tokens, 0),
                model=self.embed_model,
                tag=tag,
                kind="embed",
            )
        )
        return vectors


class GatewayEmbedder:
    """Embedder interface over a gateway's embedding endpoint."""

    def __init__(self, gateway: Gateway):
        self.gateway = gateway

    @property
    def id(self) -> str:
        return f"backend:{self.gateway.embed_model}"

    def embed(self, texts):
        return self.gateway.embed(texts, tag="embed")
