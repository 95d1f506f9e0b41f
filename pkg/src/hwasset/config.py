"""Run configuration with layered sources.

Precedence, highest first: command-line flags, ``HWASSET_<KEY>``
environment variables, a TOML or JSON config file, built-in defaults.
"""

from __future__ import annotations

import json
import logging
import os
import sys
import typing
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Mapping, Optional

from .errors import ParameterError

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

log = logging.getLogger(__name__)

ENV_PREFIX = "HWASSET_"
BACKENDS = ("http", "replay", "record", "scripted")
EMBEDDERS = ("auto", "hash", "backend")
WEIGHT_TOLERANCE = 1e-9


@dataclass
class RunConfig:
    repo: Optional[str] = None
    spec: Optional[str] = None
    design: Optional[str] = None
    out: Optional[str] = None
    # model access
    backend: str = "replay"
    endpoint: str = "https://api.openai.com/v1"
    model: str = "gpt-4o"
    embed_model: str = "text-embedding-3-small"
    api_key_env: str = "HWASSET_API_KEY"
    temperature: float = 0.0
    max_retries: int = 2
    http_retries: int = 3
    rate_limit: Optional[float] = None  # requests per minute
    timeout: float = 60.0
    fixtures: Optional[str] = None
    script: Optional[str] = None
    prices: Optional[str] = None
    prompts_dir: Optional[str] = None
    icl_dir: Optional[str] = None
    # knowledge sources
    cwe: Optional[str] = None
    description_budget: int = 600
    chunk_size: int = 1000
    overlap: int = 200
    top_k: int = 20
    embedder: str = "auto"
    embed_dim: int = 256
    cache_dir: Optional[str] = None
    # RTL front end
    defines: dict = field(default_factory=dict)
    include_dirs: list = field(default_factory=list)
    parallelism: int = 4
    # utility weights
    alpha: float = 0.6
    beta: float = 0.1
    gamma: float = 0.3

    def validate(self) -> "RunConfig":
        if self.backend not in BACKENDS:
            raise ParameterError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.embedder not in EMBEDDERS:
            raise ParameterError(f"embedder must be one of {EMBEDDERS}, got {self.embedder!r}")
        if self.chunk_size <= 0 or not 0 <= self.overlap < self.chunk_size:
            raise ParameterError("need chunk_size > 0 and 0 <= overlap < chunk_size")
        if self.top_k <= 0 or self.parallelism <= 0 or self.embed_dim <= 0:
            raise ParameterError("top_k, parallelism and embed_dim must be positive")
        if self.max_retries < 0 or self.http_retries < 0:
            raise ParameterError("retry counts must be non-negative")
        if self.rate_limit is not None and self.rate_limit <= 0:
            raise ParameterError("rate_limit must be positive")
        check_weights(self.alpha, self.beta, self.gamma)
        return self

    def snapshot(self) -> dict:
        """Settings recorded in output bundles (no secrets are stored here)."""
        d = asdict(self)
        d.pop("out")
        return d


def check_weights(alpha: float, beta: float, gamma: float) -> None:
    if min(alpha, beta, gamma) < 0:
        raise ParameterError("utility weights must be non-negative")
    if abs(alpha + beta + gamma - 1.0) > WEIGHT_TOLERANCE:
        raise ParameterError(f"utility weights must sum to 1 (got {alpha + beta + gamma!r})")


_HINTS = typing.get_type_hints(RunConfig)
KEYS = tuple(f.name for f in fields(RunConfig))


def _base_type(name):
    hint = _HINTS[name]
    args = [a for a in typing.get_args(hint) if a is not type(None)]
    return args[0] if typing.get_origin(hint) is typing.Union else hint


def coerce(name: str, value):
    """Convert a raw value (often an environment string) to the field's type."""
    if value is None:
        return None
    kind = _base_type(name)
    try:
        if kind is dict:
            if isinstance(value, str):
                # NAME=VALUE pairs separated by commas, or a JSON object
                if value.lstrip().startswith("{"):
                    return dict(json.loads(value))
                pairs = [p for p in value.split(",") if p.strip()]
                return dict(p.split("=", 1) if "=" in p else (p, "1") for p in (x.strip() for x in pairs))
            return dict(value)
        if kind is list:
            if isinstance(value, str):
                return [p for p in value.split(os.pathsep) if p]
            return list(value)
        if kind is bool:
            return value if isinstance(value, bool) else str(value).lower() in ("1", "true", "yes", "on")
        if kind in (int, float):
            return kind(value)
        return str(value)
    except (TypeError, ValueError) as exc:
        raise ParameterError(f"bad value for {name}: {value!r} ({exc})") from exc


def read_config_file(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ParameterError(f"cannot read config file {path}: {exc}") from exc
    try:
        if path.suffix.lower() == ".json":
            data = json.loads(raw.decode("utf-8"))
        else:
            data = tomllib.loads(raw.decode("utf-8"))
    except (ValueError, tomllib.TOMLDecodeError) as exc:
        raise ParameterError(f"config file {path} is malformed: {exc}") from exc
    if isinstance(data.get("hwasset"), dict):
        data = data["hwasset"]
    unknown = sorted(set(data) - set(KEYS))
    for k in unknown:
        log.warning("config file %s: unknown key %r ignored", path, k)
    return {k: v for k, v in data.items() if k in KEYS}


def env_values(environ: Mapping[str, str]) -> dict:
    out = {}
    for key in KEYS:
        name = ENV_PREFIX + key.upper()
        if name in environ:
            out[key] = environ[name]
    return out


def resolve_config(flags: Optional[Mapping] = None, environ: Optional[Mapping] = None, config_file=None) -> RunConfig:
    """Merge the four layers; ``None`` flag values mean "not given"."""
    environ = os.environ if environ is None else environ
    merged: dict = {}
    if config_file is not None:
        merged.update(read_config_file(config_file))
    merged.update(env_values(environ))
    for k, v in (flags or {}).items():
        if k in KEYS and v is not None:
            merged[k] = v
    cfg = RunConfig(**{k: coerce(k, v) for k, v in merged.items()})
    return cfg.validate()
