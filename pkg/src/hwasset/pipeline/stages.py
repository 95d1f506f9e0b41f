"""Per-module asset stages: prune, generate, expand and three refinements.

Every stage takes and returns plain lists of :class:`AssetAnnotation`.
Model replies are schema-checked by the gateway; this module checks them
against the design and the CWE catalogue and drops whatever does not
resolve, logging why.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field, replace

from ..assets import (
    PRIMARY,
    SECONDARY,
    AssetAnnotation,
    AttackClass,
    AttackScenario,
    Objective,
    StructuralRef,
    resolves,
)
from ..cwe import view_by_objective
from ..errors import GatewayError, StageError

log = logging.getLogger(__name__)

EXCERPT_CHARS = 4000
OBJECTIVE_ORDER = (Objective.CONFIDENTIALITY, Objective.INTEGRITY, Objective.AVAILABILITY)


@dataclass
class StageLog:
    """Warnings collected while processing one module."""

    module: str
    warnings: list = field(default_factory=list)

    def warn(self, msg: str) -> None:
        text = f"{self.module}: {msg}"
        log.warning(text)
        self.warnings.append(text)


def _complete(gateway, stage, template, bindings, tag):
    try:
        return gateway.complete(template, bindings, tag=tag).value
    except GatewayError as exc:
        raise StageError(stage, str(exc)) from exc


def _ports_text(module) -> str:
    return "\n".join(f"- {p.name} ({p.direction}, {p.width_bits} bits)" for p in module.ports) or "- none"


def _dedupe(seq):
    return tuple(dict.fromkeys(seq))


def cascade(annotations, removed_ids) -> list:
    """Drop ``removed_ids`` and every secondary whose parent was dropped."""
    removed = set(removed_ids)
    return [a for a in annotations if a.asset_id not in removed and a.parent_id not in removed]


# -- pruning ------------------------------------------------------------------


@dataclass(frozen=True)
class PruneDecision:
    module: str
    decision: str
    rationale: str

    @property
    def retained(self) -> bool:
        return self.decision != "prune"

    def to_json(self):
        return {"module": self.module, "decision": self.decision, "rationale": self.rationale}


def prune_module(module, source: str, gateway) -> PruneDecision:
    """Classify one module; anything but a clear "prune" keeps it."""
    bindings = {
        "module": module.name,
        "language": module.language.value,
        "ports": _ports_text(module),
        "instances": ", ".join(f"{i.instance_name}:{i.target}" for i in module.instances) or "none",
        "excerpt": source[:EXCERPT_CHARS],
    }
    value = _complete(gateway, "prune", "Prune", bindings, module.name)
    return PruneDecision(module.name, value["decision"], value.get("rationale", ""))


def prune_modules(modules, sources, gateway, decisions=None) -> list:
    """Modules retained by the classifier; ``sources`` maps name to text.

    Each decision is appended to ``decisions`` when a list is given.
    """
    retained = []
    for m in modules:
        d = prune_module(m, sources[m.name], gateway)
        if decisions is not None:
            decisions.append(d)
        if d.retained:
            retained.append(m)
        else:
            log.info("pruned %s: %s", m.name, d.rationale)
    return retained


# -- generation ---------------------------------------------------------------


def generate_assets(module, summary_text: str, elements, source: str, gateway, slog: StageLog) -> list:
    """Primary assets mapped onto parsed elements only."""
    if not len(elements):
        return []
    bindings = {
        "module": module.name,
        "summary": summary_text or "(no specification available; work from the RTL)",
        "elements": "\n".join(e.describe() for e in elements.all),
        "source": source,
    }
    value = _complete(gateway, "generate", "LLMasset", bindings, module.name)
    names = elements.names()
    out, seen = [], set()
    for item in value["assets"]:
        name = item["element"].strip()
        if name not in names:
            slog.warn(f"asset {item['conceptual_name']!r} names unknown element {name!r}; dropped")
            continue
        if name in seen:
            slog.warn(f"element {name!r} proposed twice as a primary asset; keeping the first")
            continue
        seen.add(name)
        out.append(
            AssetAnnotation(
                asset_id=f"P{len(out) + 1}",
                conceptual_name=item["conceptual_name"],
                structural_ref=StructuralRef(module.name, name),
                objectives=_dedupe(Objective(o) for o in item["objectives"]),
                justification=item.get("justification", ""),
                provenance=("generate",),
            )
        )
    return out


def secondary_candidates(module, elements, model) -> list[StructuralRef]:
    """Own parsed elements plus the ports of every module instantiated below."""
    refs = [StructuralRef(module.name, e.name) for e in elements.all]
    for name in model.descendants(module.name):
        sub = model[name]
        refs.extend(StructuralRef(name, p.name) for p in sub.ports)
        refs.extend(StructuralRef(name, s.name) for s in sub.signals)
    return refs


def expand_secondary(module, primaries, elements, model, source: str, gateway, slog: StageLog) -> list:
    """Primaries followed by the secondaries proposed for each of them."""
    if not primaries:
        return []
    candidates = secondary_candidates(module, elements, model)
    allowed_modules = {module.name, *model.descendants(module.name)}
    bindings = {
        "module": module.name,
        "primaries": json.dumps(
            [
                {"id": p.asset_id, "conceptual_name": p.conceptual_name, "element": p.structural_ref.name,
                 "objectives": [o.value for o in p.objectives]}
                for p in primaries
            ],
            indent=1,
        ),
        "candidates": "\n".join(f"- {r.module}.{r.name}" for r in candidates),
        "source": source,
    }
    value = _complete(gateway, "expand", "SecAsset", bindings, module.name)
    by_id = {p.asset_id: p for p in primaries}
    counters = {p.asset_id: 0 for p in primaries}
    seen = set()
    secondaries = []
    for item in value["secondaries"]:
        parent = by_id.get(item["parent_id"])
        ref = StructuralRef(item["module"].strip(), item["element"].strip())
        if parent is None:
            slog.warn(f"secondary {ref} names unknown primary {item['parent_id']!r}; dropped")
            continue
        if ref.module not in allowed_modules or not resolves(ref, model):
            slog.warn(f"secondary {ref} does not resolve below {module.name}; dropped")
            continue
        if (parent.asset_id, ref) in seen:
            continue
        if ref == parent.structural_ref:
            log.info("%s: secondary %s coincides with its primary %s", module.name, ref, parent.asset_id)
        seen.add((parent.asset_id, ref))
        counters[parent.asset_id] += 1
        secondaries.append(
            AssetAnnotation(
                asset_id=f"{parent.asset_id}.S{counters[parent.asset_id]}",
                conceptual_name=item.get("conceptual_name") or ref.name,
                structural_ref=ref,
                objectives=parent.objectives,
                classification=SECONDARY,
                parent_primary=parent.structural_ref,
                parent_id=parent.asset_id,
                justification=item.get("justification", ""),
                provenance=("expand",),
            )
        )
    ordered = []
    for p in primaries:
        ordered.append(p)
        ordered.extend(s for s in secondaries if s.parent_id == p.asset_id)
    return ordered


# -- refinement ---------------------------------------------------------------


def _asset_rows(annotations, with_attacks=False):
    rows = []
    for a in annotations:
        row = {
            "id": a.asset_id,
            "classification": a.classification,
            "conceptual_name": a.conceptual_name,
            "module": a.structural_ref.module,
            "element": a.structural_ref.name,
            "objectives": [o.value for o in a.objectives],
        }
        if a.parent_id:
            row["parent_id"] = a.parent_id
        if with_attacks:
            row["attack_scenarios"] = [s.to_json() for s in a.attack_scenarios]
            row["cwe_ids"] = list(a.cwe_ids)
        rows.append(row)
    return json.dumps(rows, indent=1)


def refine_attack(module, annotations, summary_text: str, gateway, slog: StageLog) -> list:
    """Keep primaries that have at least one attack scenario."""
    primaries = [a for a in annotations if a.is_primary]
    if not primaries:
        return []
    bindings = {
        "module": module.name,
        "summary": summary_text or "(no specification available)",
        "assets": _asset_rows(annotations),
    }
    value = _complete(gateway, "attack", "LLMattack", bindings, module.name)
    scenarios: dict[str, list] = {}
    ids = {a.asset_id for a in primaries}
    for item in value["assets"]:
        if item["id"] not in ids:
            slog.warn(f"attack reply mentions unknown asset id {item['id']!r}; ignored")
            continue
        lst = scenarios.setdefault(item["id"], [])
        for s in item["attack_scenarios"]:
            sc = AttackScenario(AttackClass(s["attack_class"]), s["narrative"])
            if sc not in lst:
                lst.append(sc)
    removed = [p.asset_id for p in primaries if not scenarios.get(p.asset_id)]
    for rid in removed:
        slog.warn(f"primary {rid} has no attack scenario; removed with its secondaries")
    out = []
    for a in cascade(annotations, removed):
        if a.is_primary:
            out.append(a.with_stage("attack", attack_scenarios=tuple(scenarios[a.asset_id])))
        else:
            out.append(a.with_stage("attack"))
    return out


def refine_cwe(module, annotations, db, gateway, slog: StageLog) -> list:
    """Map assets to catalogue CWEs one objective view at a time."""
    if not any(a.is_primary for a in annotations):
        return []
    mapped: dict[str, list] = {a.asset_id: [] for a in annotations}
    rows = _asset_rows(annotations)
    for objective in OBJECTIVE_ORDER:
        view = view_by_objective(db, objective)
        if not view:
            continue
        bindings = {
            "module": module.name,
            "objective": objective.value,
            "assets": rows,
            "catalog": "\n".join(e.catalog_line() for e in view),
        }
        value = _complete(gateway, "cwe", "LLMcwe", bindings, module.name)
        for item in value["mappings"]:
            if item["id"] not in mapped:
                slog.warn(f"CWE reply mentions unknown asset id {item['id']!r}; ignored")
                continue
            for cid in item["cwe_ids"]:
                if cid not in db:
                    slog.warn(f"CWE-{cid} cited for {item['id']} is not in the catalogue; dropped")
                    continue
                if cid not in mapped[item["id"]]:
                    mapped[item["id"]].append(cid)
    removed = [a.asset_id for a in annotations if a.is_primary and not mapped[a.asset_id]]
    for rid in removed:
        slog.warn(f"primary {rid} has no mappable CWE; removed with its secondaries")
    return [a.with_stage("cwe", cwe_ids=tuple(mapped[a.asset_id])) for a in cascade(annotations, removed)]


def _apply_revision(a: AssetAnnotation, rev: dict, model, db, slog: StageLog) -> AssetAnnotation:
    changes = {}
    if rev.get("conceptual_name"):
        changes["conceptual_name"] = rev["conceptual_name"]
    if rev.get("element") and rev["element"] != a.structural_ref.name:
        ref = StructuralRef(a.structural_ref.module, rev["element"].strip())
        if resolves(ref, model):
            changes["structural_ref"] = ref
        else:
            slog.warn(f"critique revision of {a.asset_id} to {ref} does not resolve; original kept")
    if rev.get("objectives"):
        changes["objectives"] = _dedupe(Objective(o) for o in rev["objectives"])
    if "cwe_ids" in rev:
        ids = [c for c in rev["cwe_ids"] if c in db]
        if len(ids) != len(rev["cwe_ids"]):
            slog.warn(f"critique cited CWE ids missing from the catalogue for {a.asset_id}; dropped")
        if ids or not a.is_primary:
            changes["cwe_ids"] = _dedupe(ids)
        else:
            slog.warn(f"critique would leave primary {a.asset_id} without CWEs; CWE revision rejected")
    tag = "critique:revise" if changes else "critique:confirm"
    return a.with_stage(tag, **changes)


def self_critique(module, annotations, summary_text: str, source: str, model, db, gateway, slog: StageLog) -> list:
    """Confirm, revise or remove each asset; revisions are re-validated."""
    if not annotations:
        return []
    bindings = {
        "module": module.name,
        "summary": summary_text or "(no specification available)",
        "source": source,
        "assets": _asset_rows(annotations, with_attacks=True),
    }
    value = _complete(gateway, "critique", "LLMref", bindings, module.name)
    verdicts = {}
    ids = {a.asset_id for a in annotations}
    for v in value["verdicts"]:
        if v["id"] not in ids:
            slog.warn(f"critique mentions unknown asset id {v['id']!r}; ignored")
            continue
        verdicts.setdefault(v["id"], v)
    removed = [i for i, v in verdicts.items() if v["verdict"] == "remove"]
    out = []
    for a in cascade(annotations, removed):
        v = verdicts.get(a.asset_id)
        if v is not None and v["verdict"] == "revise":
            out.append(_apply_revision(a, v.get("revision") or {}, model, db, slog))
        else:
            out.append(a.with_stage("critique:confirm"))
    # keep parent links consistent with revised primaries
    new_refs = {a.asset_id: a.structural_ref for a in out if a.is_primary}
    return [
        replace(a, parent_primary=new_refs[a.parent_id]) if not a.is_primary and a.parent_primary != new_refs[a.parent_id] else a
        for a in out
    ]


def check_integrity(annotations, model, db) -> list[str]:
    """Problems with references, parents and CWE ids (empty when sound)."""
    problems = []
    prim = {a.asset_id: a for a in annotations if a.classification == PRIMARY}
    for a in annotations:
        if not resolves(a.structural_ref, model):
            problems.append(f"{a.asset_id}: {a.structural_ref} does not resolve")
        if not a.is_primary:
            p = prim.get(a.parent_id)
            if p is None or p.structural_ref != a.parent_primary:
                problems.append(f"{a.asset_id}: parent {a.parent_id} missing or inconsistent")
        problems.extend(f"{a.asset_id}: CWE-{c} not in catalogue" for c in a.cwe_ids if c not in db)
    return problems
