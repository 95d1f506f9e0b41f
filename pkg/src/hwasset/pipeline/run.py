"""End-to-end asset identification over a repository."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from ..assets import AssetBundle, ModuleResult
from ..config import RunConfig
from ..cwe import load_cwe
from ..errors import GatewayError, HwAssetError, ParameterError
from ..llm.backends import HttpBackend, RecordBackend, ReplayBackend, ScriptedBackend
from ..llm.elements import parse_elements_llm
from ..llm.gateway import Gateway, GatewayEmbedder, load_prices
from ..llm.templates import PromptLibrary
from ..rtl.repo import load_design, module_source
from ..spec_rag import HashEmbedder, index_spec, summarize_module
from .stages import (
    StageLog,
    expand_secondary,
    generate_assets,
    prune_module,
    refine_attack,
    refine_cwe,
    self_critique,
)

log = logging.getLogger(__name__)

COUNT_KEYS = ("initial", "attack", "cwe", "final", "primaries", "secondaries", "generated", "elements")
LLM_KEYS = ("calls", "latency_s", "cost", "input_tokens", "output_tokens")
_GENERIC_DIRS = {"rtl", "src", "hdl", "verilog", "vhdl", "hw"}


def make_backend(cfg: RunConfig):
    def http():
        return HttpBackend(
            cfg.endpoint,
            api_key_env=cfg.api_key_env,
            timeout=cfg.timeout,
            max_retries=cfg.http_retries,
            rate_limit=cfg.rate_limit,
        )

    if cfg.backend == "http":
        return http()
    if cfg.backend in ("replay", "record") and not cfg.fixtures:
        raise ParameterError(f"the {cfg.backend} backend needs a fixtures directory")
    if cfg.backend == "replay":
        return ReplayBackend(cfg.fixtures)
    if cfg.backend == "record":
        return RecordBackend(http(), cfg.fixtures)
    if not cfg.script:
        raise ParameterError("the scripted backend needs a script file")
    inner = ScriptedBackend.from_file(cfg.script)
    return RecordBackend(inner, cfg.fixtures) if cfg.fixtures else inner


def make_gateway(cfg: RunConfig, backend=None) -> Gateway:
    return Gateway(
        backend if backend is not None else make_backend(cfg),
        library=PromptLibrary.load(cfg.prompts_dir, cfg.icl_dir),
        model=cfg.model,
        temperature=cfg.temperature,
        max_retries=cfg.max_retries,
        prices=load_prices(cfg.prices),
        embed_model=cfg.embed_model,
    )


def _innermost(backend):
    while isinstance(backend, RecordBackend):
        backend = backend.inner
    return backend


def choose_embedder(cfg: RunConfig, gateway: Gateway):
    """Hash embedder or the backend's embedding endpoint, per ``cfg.embedder``."""
    if cfg.embedder == "hash":
        return HashEmbedder(cfg.embed_dim)
    if cfg.embedder == "backend":
        return GatewayEmbedder(gateway)
    inner = _innermost(gateway.backend)
    if isinstance(inner, HttpBackend):
        return GatewayEmbedder(gateway)
    if isinstance(inner, ReplayBackend) and any(inner.dir.glob("emb-*.json")):
        return GatewayEmbedder(gateway)
    return HashEmbedder(cfg.embed_dim)


def design_name(repo) -> str:
    p = Path(repo).resolve()
    while p.name.lower() in _GENERIC_DIRS and p.parent != p:
        p = p.parent
    return p.name or "design"


@dataclass
class _Outcome:
    result: Optional[ModuleResult]
    pruned: Optional[dict] = None


def analyze_module(module, model, repo, index, db, gateway, cfg: RunConfig) -> _Outcome:
    """Run every stage on one module; stage errors are captured, not raised."""
    slog = StageLog(module.name)
    result = ModuleResult(module.name, rtl_only=index is None)
    stage = "prune"
    try:
        source = module_source(module, repo)
        decision = prune_module(module, source, gateway)
        if not decision.retained:
            log.info("pruned %s: %s", module.name, decision.rationale)
            return _Outcome(None, decision.to_json())
        stage = "summarize"
        summary = summarize_module(module, index, gateway, k=cfg.top_k)
        if not summary.absent:
            result.summary = summary.text
            result.summary_chunks = list(summary.source_chunk_indices)
        stage = "parse"
        elements = parse_elements_llm(module, source, gateway, tag=module.name)
        slog.warnings.extend(elements.warnings)
        stage = "generate"
        primaries = generate_assets(module, summary.text, elements, source, gateway, slog)
        stage = "expand"
        expanded = expand_secondary(module, primaries, elements, model, source, gateway, slog)
        stage = "attack"
        a1 = refine_attack(module, expanded, summary.text, gateway, slog)
        stage = "cwe"
        a2 = refine_cwe(module, a1, db, gateway, slog)
        stage = "critique"
        final = self_critique(module, a2, summary.text, source, model, db, gateway, slog)
    except (HwAssetError, OSError) as exc:
        log.error("module %s failed during %s: %s", module.name, stage, exc)
        result.error = {"stage": getattr(exc, "stage", stage), "message": str(exc)}
        result.stats = _module_stats(module, gateway, [], [], [], [], [])
        result.warnings = slog.warnings
        return _Outcome(result)
    result.assets = final
    result.warnings = slog.warnings
    result.stats = _module_stats(module, gateway, primaries, expanded, a1, a2, final)
    return _Outcome(result)


def _llm_totals(gateway, tag) -> dict:
    t = gateway.totals(tag)
    return {k: (round(t[k], 6) if isinstance(t[k], float) else t[k]) for k in LLM_KEYS}


def _module_stats(module, gateway, primaries, expanded, a1, a2, final) -> dict:
    return {
        "elements": module.element_count,
        "generated": len(primaries),
        "initial": len(expanded),
        "attack": len(a1),
        "cwe": len(a2),
        "final": len(final),
        "primaries": sum(1 for a in final if a.is_primary),
        "secondaries": sum(1 for a in final if not a.is_primary),
        "llm": _llm_totals(gateway, module.name),
    }


def bundle_stats(modules, pruned, gateway, module_names) -> dict:
    stats = {k: 0 for k in COUNT_KEYS}
    for m in modules:
        for k in COUNT_KEYS:
            stats[k] += m.stats.get(k, 0)
    stats["modules"] = len(module_names)
    stats["analyzed"] = len(modules)
    stats["pruned"] = len(pruned)
    stats["failed"] = sum(1 for m in modules if m.error)
    # sum per tag in a fixed order so float totals do not depend on scheduling
    llm = {k: 0 for k in LLM_KEYS}
    for tag in list(module_names) + ["embed"]:
        t = _llm_totals(gateway, tag)
        for k in LLM_KEYS:
            llm[k] += t[k]
    stats["llm"] = {k: (round(v, 6) if isinstance(v, float) else v) for k, v in llm.items()}
    return stats


def run(cfg: RunConfig, gateway: Optional[Gateway] = None, db=None) -> AssetBundle:
    """Analyse ``cfg.repo`` and return the asset bundle.

    A failing module is recorded with its error and the others continue;
    problems that affect every module (no sources, no catalogue, an
    unusable specification index) raise.
    """
    if not cfg.repo:
        raise ParameterError("no repository given")
    model = load_design(cfg.repo, cfg.defines, cfg.include_dirs, jobs=cfg.parallelism)
    if db is None:
        if not cfg.cwe:
            raise ParameterError("no CWE catalogue given")
        db = load_cwe(cfg.cwe, cfg.description_budget)
    gateway = gateway or make_gateway(cfg)
    index = None
    if cfg.spec:
        text = Path(cfg.spec).read_text(encoding="utf-8")
        embedder = choose_embedder(cfg, gateway)
        try:
            index = index_spec(text, embedder, cfg.chunk_size, cfg.overlap, cfg.cache_dir, jobs=cfg.parallelism)
        except GatewayError as exc:
            raise HwAssetError(f"specification index failed: {exc}") from exc
    modules = list(model)

    def work(module):
        return analyze_module(module, model, cfg.repo, index, db, gateway, cfg)

    with ThreadPoolExecutor(max_workers=cfg.parallelism) as pool:
        outcomes = list(pool.map(work, modules))
    results = [o.result for o in outcomes if o.result is not None]
    pruned = [o.pruned for o in outcomes if o.pruned is not None]
    config = cfg.snapshot()
    config["input"] = "spec+rtl" if index is not None else "rtl"
    config["cwe_entries"] = len(db)
    return AssetBundle(
        design=cfg.design or design_name(cfg.repo),
        modules=results,
        config=config,
        stats=bundle_stats(results, pruned, gateway, [m.name for m in modules]),
        pruned=pruned,
    )
