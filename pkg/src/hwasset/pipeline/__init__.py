"""Module-level asset identification stages and the run orchestrator."""

from .run import analyze_module, choose_embedder, make_backend, make_gateway, run
from .stages import (
    PruneDecision,
    cascade,
    check_integrity,
    expand_secondary,
    generate_assets,
    prune_module,
    prune_modules,
    refine_attack,
    refine_cwe,
    self_critique,
)

__all__ = [
    "PruneDecision", "analyze_module", "cascade", "check_integrity", "choose_embedder",
    "expand_secondary", "generate_assets", "make_backend", "make_gateway", "prune_module",
    "prune_modules", "refine_attack", "refine_cwe", "run", "self_critique",
]
