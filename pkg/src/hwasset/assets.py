"""Asset annotations and the JSON asset bundle."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Optional


class Objective(str, Enum):
    CONFIDENTIALITY = "Confidentiality"
    INTEGRITY = "Integrity"
    AVAILABILITY = "Availability"


class AttackClass(str, Enum):
    SIDE_CHANNEL = "side_channel"
    FAULT_INJECTION = "fault_injection"
    S2NS_LEAKAGE = "s2ns_leakage"
    UNAUTHORIZED_ACCESS = "unauthorized_access"
    PRIVILEGE_ESCALATION = "privilege_escalation"
    HARDWARE_TROJAN = "hardware_trojan"
    DENIAL_OF_SERVICE = "denial_of_service"


PRIMARY = "primary"
SECONDARY = "secondary"

_CONCAT_RE = re.compile(r"^\{\s*([\w$]+(?:\s*,\s*[\w$]+)*)\s*\}$")


@dataclass(frozen=True, order=True)
class StructuralRef:
    """An RTL element: ``name`` is an identifier or a ``{a, b}`` group."""

    module: str
    name: str

    @property
    def members(self) -> list[str]:
        m = _CONCAT_RE.match(self.name.strip())
        if m:
            return [x.strip() for x in m.group(1).split(",")]
        return [self.name]

    def to_json(self):
        return {"module": self.module, "name": self.name}

    @classmethod
    def from_json(cls, d):
        if isinstance(d, str):
            mod, _, name = d.partition(".")
            return cls(mod, name)
        return cls(d["module"], d["name"])

    def __str__(self):
        return f"{self.name} ({self.module})"


def resolves(ref: StructuralRef, model) -> bool:
    mod = model.get(ref.module)
    if mod is None:
        return False
    return all(mod.element(n) is not None for n in ref.members)


def ref_width(ref: StructuralRef, model) -> int:
    mod = model[ref.module]
    return sum(mod.element(n).width_bits for n in ref.members)


@dataclass(frozen=True)
class AttackScenario:
    attack_class: AttackClass
    narrative: str

    def to_json(self):
        return {"attack_class": self.attack_class.value, "narrative": self.narrative}


@dataclass(frozen=True)
class AssetAnnotation:
    asset_id: str
    conceptual_name: str
    structural_ref: StructuralRef
    objectives: tuple
    classification: str = PRIMARY
    parent_primary: Optional[StructuralRef] = None
    parent_id: Optional[str] = None
    attack_scenarios: tuple = ()
    cwe_ids: tuple = ()
    provenance: tuple = ()
    justification: str = ""

    def __post_init__(self):
        if self.classification not in (PRIMARY, SECONDARY):
            raise ValueError(f"bad classification {self.classification!r}")
        if self.classification == SECONDARY and (self.parent_primary is None or self.parent_id is None):
            raise ValueError(f"secondary asset {self.asset_id} has no parent primary")
        if self.classification == PRIMARY and self.parent_primary is not None:
            raise ValueError(f"primary asset {self.asset_id} must not have a parent")

    @property
    def is_primary(self) -> bool:
        return self.classification == PRIMARY

    def with_stage(self, tag: str, **changes) -> "AssetAnnotation":
        return replace(self, provenance=self.provenance + (tag,), **changes)

    def to_json(self):
        return {
            "id": self.asset_id,
            "conceptual_name": self.conceptual_name,
            "structural_ref": self.structural_ref.to_json(),
            "objectives": [o.value for o in self.objectives],
            "classification": self.classification,
            "parent_primary": self.parent_primary.to_json() if self.parent_primary else None,
            "parent_id": self.parent_id,
            "attack_scenarios": [s.to_json() for s in self.attack_scenarios],
            "cwe_ids": list(self.cwe_ids),
            "provenance": list(self.provenance),
            "justification": self.justification,
        }

    @classmethod
    def from_json(cls, d) -> "AssetAnnotation":
        parent = d.get("parent_primary")
        return cls(
            asset_id=d.get("id", ""),
            conceptual_name=d.get("conceptual_name", ""),
            structural_ref=StructuralRef.from_json(d["structural_ref"]),
            objectives=tuple(Objective(o) for o in d.get("objectives", ())),
            classification=d.get("classification", PRIMARY),
            parent_primary=StructuralRef.from_json(parent) if parent else None,
            parent_id=d.get("parent_id") or (None if not parent else "?"),
            attack_scenarios=tuple(
                AttackScenario(AttackClass(s["attack_class"]), s.get("narrative", ""))
                for s in d.get("attack_scenarios", ())
            ),
            cwe_ids=tuple(int(c) for c in d.get("cwe_ids", ())),
            provenance=tuple(d.get("provenance", ())),
            justification=d.get("justification", ""),
        )


STAGES = ("initial", "attack", "cwe", "final")


@dataclass
class ModuleResult:
    name: str
    assets: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)
    summary: Optional[str] = None
    summary_chunks: list = field(default_factory=list)
    rtl_only: bool = False
    error: Optional[dict] = None
    warnings: list = field(default_factory=list)

    def to_json(self):
        return {
            "name": self.name,
            "assets": [a.to_json() for a in self.assets],
            "stats": dict(self.stats),
            "summary": self.summary,
            "summary_chunks": list(self.summary_chunks),
            "rtl_only": self.rtl_only,
            "error": self.error,
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_json(cls, d):
        return cls(
            name=d["name"],
            assets=[AssetAnnotation.from_json(a) for a in d.get("assets", ())],
            stats=dict(d.get("stats", {})),
            summary=d.get("summary"),
            summary_chunks=list(d.get("summary_chunks", ())),
            rtl_only=d.get("rtl_only", False),
            error=d.get("error"),
            warnings=list(d.get("warnings", ())),
        )


@dataclass
class AssetBundle:
    design: str
    modules: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)
    pruned: list = field(default_factory=list)

    def annotations(self):
        for m in self.modules:
            yield from m.assets

    def primaries(self):
        return [a for a in self.annotations() if a.is_primary]

    def secondaries(self):
        return [a for a in self.annotations() if not a.is_primary]

    def to_json(self):
        return {
            "design": self.design,
            "config": self.config,
            "modules": [m.to_json() for m in self.modules],
            "pruned": list(self.pruned),
            "stats": self.stats,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=False) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")

    @classmethod
    def from_json(cls, d) -> "AssetBundle":
        return cls(
            design=d.get("design", ""),
            modules=[ModuleResult.from_json(m) for m in d.get("modules", ())],
            config=d.get("config", {}),
            stats=d.get("stats", {}),
            pruned=list(d.get("pruned", ())),
        )

    @classmethod
    def load(cls, path) -> "AssetBundle":
        return cls.from_json(json.loads(Path(path).read_text(encoding="utf-8")))
