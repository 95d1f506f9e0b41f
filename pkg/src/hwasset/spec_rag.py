"""Specification chunking, embedding index and per-module retrieval.

The specification is split into fixed-size character windows, each window
is embedded once, and a module-specific query pulls the most similar
windows into the summarisation prompt.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from string import Template
from typing import Optional, Sequence

import numpy as np

from .errors import GatewayError, IndexBuildError, ParameterError, StageError

log = logging.getLogger(__name__)

DEFAULT_CHUNK_SIZE = 1000
DEFAULT_OVERLAP = 200
DEFAULT_TOP_K = 20

DEFAULT_QUERY = (
    "Security-relevant integration context, data flows, privileged state and "
    "interfaces of module $module ($role). Ports: $ports"
)


@dataclass(frozen=True)
class Chunk:
    index: int
    start_offset: int
    text: str
    overlap: int = 0  # characters shared with the previous chunk

    @property
    def end_offset(self) -> int:
        return self.start_offset + len(self.text)

    @property
    def core(self) -> str:
        """The part of the chunk not already covered by its predecessor."""
        return self.text[self.overlap :] if self.index else self.text


def chunk_text(text: str, chunk_size: int = DEFAULT_CHUNK_SIZE, overlap: int = DEFAULT_OVERLAP) -> list[Chunk]:
    if chunk_size <= 0:
        raise ParameterError(f"chunk_size must be positive, got {chunk_size}")
    if overlap < 0 or overlap >= chunk_size:
        raise ParameterError(f"overlap must be in [0, chunk_size), got {overlap}")
    if not text:
        return []
    stride = chunk_size - overlap
    count = 1 + math.ceil(max(0, len(text) - chunk_size) / stride)
    out = []
    for i in range(count):
        start = i * stride
        out.append(Chunk(i, start, text[start : start + chunk_size], overlap if i else 0))
    return out


class HashEmbedder:
    """Deterministic bag-of-words embedder for tests and offline runs.

    Each lower-cased word is hashed into one of ``dim`` buckets with a
    signed count, so identical texts always get identical vectors.
    """

    def __init__(self, dim: int = 256, seed: int = 0):
        if dim <= 0:
            raise ParameterError("embedding dimension must be positive")
        self.dim = dim
        self.seed = seed
        self.calls = 0

    @property
    def id(self) -> str:
        return f"hash-bow-{self.dim}-{self.seed}"

    def _vector(self, text: str) -> list[float]:
        v = [0.0] * self.dim
        key = self.seed.to_bytes(8, "little", signed=False)
        for word in re.findall(r"\w+", text.lower()):
            h = hashlib.blake2b(word.encode("utf-8"), digest_size=8, key=key).digest()
            n = int.from_bytes(h, "little")
            v[n % self.dim] += 1.0 if (n >> 63) & 1 else -1.0
        return v

    def embed(self, texts: Sequence[str]) -> list[list[float]]:
        self.calls += 1
        return [self._vector(t) for t in texts]


@dataclass
class ChunkIndex:
    chunks: list
    vectors: np.ndarray
    embedder_id: str
    content_hash: str
    params: dict = field(default_factory=dict)
    embedder: object = field(default=None, repr=False, compare=False)
    cache_hit: bool = False

    def __post_init__(self):
        if len(self.vectors) != len(self.chunks):
            raise ValueError("one vector per chunk required")

    def __len__(self):
        return len(self.chunks)

    @property
    def dim(self) -> int:
        return int(self.vectors.shape[1]) if len(self.chunks) else 0


def content_hash(chunks: Sequence[Chunk]) -> str:
    h = hashlib.sha256()
    for c in chunks:
        h.update(f"{c.index}:{c.start_offset}:{len(c.text)}\n".encode())
        h.update(c.text.encode("utf-8"))
    return h.hexdigest()


def _cache_file(cache_dir: Path, digest: str, embedder_id: str, params: dict) -> Path:
    key = hashlib.sha256(json.dumps([digest, embedder_id, params], sort_keys=True).encode()).hexdigest()
    return Path(cache_dir) / f"index-{key[:24]}.json"


def build_index(
    chunks: Sequence[Chunk],
    embedder,
    cache_dir: Optional[Path] = None,
    params: Optional[dict] = None,
    batch_size: int = 16,
    jobs: int = 1,
) -> ChunkIndex:
    """Embed every chunk, reusing a cached index when nothing changed."""
    chunks = list(chunks)
    params = dict(params or {})
    digest = content_hash(chunks)
    cache_path = _cache_file(cache_dir, digest, embedder.id, params) if cache_dir else None
    if cache_path is not None and cache_path.is_file():
        try:
            data = json.loads(cache_path.read_text(encoding="utf-8"))
            if data.get("hash") == digest and len(data.get("vectors", ())) == len(chunks):
                log.info("embedding index cache hit: %s", cache_path.name)
                vecs = np.asarray(data["vectors"], dtype=float).reshape(len(chunks), -1)
                return ChunkIndex(chunks, vecs, embedder.id, digest, params, embedder, cache_hit=True)
        except (OSError, ValueError) as exc:
            log.warning("ignoring unreadable index cache %s: %s", cache_path, exc)

    batches = [chunks[i : i + batch_size] for i in range(0, len(chunks), batch_size)]
    failed: list[int] = []

    def run(batch):
        try:
            return batch, embedder.embed([c.text for c in batch])
        except GatewayError as exc:
            log.warning("embedding batch starting at chunk %d failed: %s", batch[0].index, exc)
            return batch, None

    vectors: dict[int, list] = {}
    if jobs > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(run, batches))
    else:
        results = [run(b) for b in batches]
    for batch, vecs in results:
        if vecs is None or len(vecs) != len(batch):
            failed.extend(c.index for c in batch)
            continue
        for c, v in zip(batch, vecs):
            vectors[c.index] = v
    if failed:
        raise IndexBuildError(sorted(failed))
    if len({len(v) for v in vectors.values()}) > 1:
        raise IndexBuildError([c.index for c in chunks], "unequal embedding dimensions")
    mat = np.asarray([vectors[c.index] for c in chunks], dtype=float) if chunks else np.zeros((0, 0))
    index = ChunkIndex(chunks, mat, embedder.id, digest, params, embedder)
    if cache_path is not None:
        cache_path.parent.mkdir(parents=True, exist_ok=True)
        payload = {"params": {**params, "embedder": embedder.id}, "hash": digest, "vectors": mat.tolist()}
        cache_path.write_text(json.dumps(payload), encoding="utf-8")
    return index


def index_spec(text: str, embedder, chunk_size=DEFAULT_CHUNK_SIZE, overlap=DEFAULT_OVERLAP, cache_dir=None, jobs=1):
    chunks = chunk_text(text, chunk_size, overlap)
    params = {"chunk_size": chunk_size, "overlap": overlap}
    return build_index(chunks, embedder, cache_dir=cache_dir, params=params, jobs=jobs)


def cosine_scores(query_vec, vectors: np.ndarray) -> np.ndarray:
    q = np.asarray(query_vec, dtype=float)
    qn = np.linalg.norm(q)
    norms = np.linalg.norm(vectors, axis=1)
    denom = norms * qn
    dots = vectors @ q
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(denom > 0, dots / np.where(denom > 0, denom, 1.0), 0.0)


def retrieve(query: str, index: ChunkIndex, k: int = DEFAULT_TOP_K, embedder=None) -> list[Chunk]:
    """Top-``k`` chunks by cosine similarity; equal scores keep index order."""
    if k <= 0:
        raise ParameterError("k must be positive")
    if not len(index):
        return []
    emb = embedder or index.embedder
    if emb is None:
        raise ParameterError("index has no embedder attached")
    [qv] = emb.embed([query])
    scores = cosine_scores(qv, index.vectors)
    order = sorted(range(len(index.chunks)), key=lambda i: (-scores[i], i))
    return [index.chunks[i] for i in order[:k]]


@dataclass(frozen=True)
class TechnicalSummary:
    module: str
    text: str
    source_chunk_indices: tuple = ()
    absent: bool = False


def module_query(module, role: str = "", template: str = DEFAULT_QUERY) -> str:
    ports = ", ".join(p.name for p in module.ports) or "none"
    return Template(template).safe_substitute(module=module.name, role=role or "role unknown", ports=ports)


def summarize_module(module, index: Optional[ChunkIndex], gateway, k: int = DEFAULT_TOP_K, role: str = "",
                     query_template: str = DEFAULT_QUERY) -> TechnicalSummary:
    """Retrieve spec context for ``module`` and ask the model for a summary.

    Without a specification the summary is marked absent and later stages
    work from the RTL alone.
    """
    if index is None or not len(index):
        return TechnicalSummary(module.name, "", (), absent=True)
    hits = retrieve(module_query(module, role, query_template), index, k)
    ports = "\n".join(f"- {p.name} ({p.direction}, {p.width_bits} bits)" for p in module.ports) or "- none"
    context = "\n\n".join(f"[chunk {c.index}]\n{c.text}" for c in hits)
    try:
        result = gateway.complete("Summarize", {"module": module.name, "ports": ports, "chunks": context}, tag=module.name)
    except GatewayError as exc:
        raise StageError("summarize", f"{module.name}: {exc}") from exc
    text = result.value if isinstance(result.value, str) else json.dumps(result.value)
    return TechnicalSummary(module.name, text.strip(), tuple(c.index for c in hits))
