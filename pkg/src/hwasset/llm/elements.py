"""LLM element parsing cross-checked against the structural parse."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

from ..rtl.model import ModuleDecl

log = logging.getLogger(__name__)

BOTH = "llm+structural"
STRUCTURAL_ONLY = "structural-only"


@dataclass(frozen=True)
class ParsedElement:
    name: str
    category: str  # "port" | "signal"
    width: int
    direction: str = ""
    kind: str = ""
    source: str = BOTH

    def describe(self) -> str:
        extra = self.direction or self.kind
        return f"- {self.name} ({self.category}, {extra}, {self.width})"


@dataclass
class ParsedElements:
    ports: list = field(default_factory=list)
    signals: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    @property
    def all(self) -> list:
        return self.ports + self.signals

    def names(self) -> set:
        return {e.name for e in self.all}

    def __len__(self):
        return len(self.ports) + len(self.signals)


def _merge(module, category, structural, llm_items, result):
    """Keep structural order; flag elements the model missed, drop inventions."""
    got = {}
    for item in llm_items:
        got.setdefault(item["name"], item)
    known = {s.name for s in structural}
    for name in got:
        if name not in known:
            msg = f"{module.name}: model listed {category} {name!r} that is not declared; dropped"
            log.warning(msg)
            result.warnings.append(msg)
    out = []
    for s in structural:
        src = BOTH if s.name in got else STRUCTURAL_ONLY
        if src == STRUCTURAL_ONLY:
            result.warnings.append(f"{module.name}: {category} {s.name!r} missed by model; re-inserted")
        if category == "port":
            out.append(ParsedElement(s.name, "port", s.width_bits, direction=s.direction, source=src))
        else:
            out.append(ParsedElement(s.name, "signal", s.width_bits, kind=s.kind, source=src))
    return out


def parse_elements_llm(module: ModuleDecl, source: str, gateway, tag: str = "") -> ParsedElements:
    """Ask for ports and signals separately and reconcile with the RTL parse."""
    result = ParsedElements()
    bindings = {"module": module.name, "source": source}
    ports = gateway.complete("LLMparse_ports", bindings, tag=tag).value["ports"]
    signals = gateway.complete("LLMparse_signals", bindings, tag=tag).value["signals"]
    result.ports = _merge(module, "port", module.ports, ports, result)
    result.signals = _merge(module, "signal", module.signals, signals, result)
    return result


def structural_elements(module: ModuleDecl) -> ParsedElements:
    """The structural parse alone, for runs that skip the model parsers."""
    return ParsedElements(
        ports=[ParsedElement(p.name, "port", p.width_bits, direction=p.direction, source=STRUCTURAL_ONLY) for p in module.ports],
        signals=[ParsedElement(s.name, "signal", s.width_bits, kind=s.kind, source=STRUCTURAL_ONLY) for s in module.signals],
    )
