"""Degree of influence of secondary assets on their primary asset."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from ..assets import AssetAnnotation, StructuralRef
from ..rtl.model import DesignModel, HierarchyPath, hierarchy_paths
from .graph import InfluenceGraph

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Hop:
    module: str
    targets: tuple  # names of the elements counted in the denominator
    reached: int
    width: int

    @property
    def fraction(self) -> Fraction:
        return Fraction(self.reached, self.width) if self.width else Fraction(0)

    def to_json(self):
        f = self.fraction
        return {
            "module": self.module,
            "targets": list(self.targets),
            "reached_bits": self.reached,
            "width": self.width,
            "fraction": f"{f.numerator}/{f.denominator}",
        }


@dataclass(frozen=True)
class DoIRecord:
    path: HierarchyPath
    primary: StructuralRef
    secondary: StructuralRef
    hops: tuple
    connected_bits: int
    primary_width: int
    exact: bool
    tie_broken: bool = False
    notes: tuple = field(default=())

    @property
    def doi(self) -> Fraction:
        out = Fraction(100)
        for h in self.hops:
            out *= h.fraction
        return out

    @property
    def doi_percent(self) -> str:
        return f"{float(self.doi):.2f}"

    @property
    def hop_fractions(self) -> list[Fraction]:
        return [h.fraction for h in self.hops]

    def to_json(self):
        return {
            "path": str(self.path),
            "primary": self.primary.to_json(),
            "secondary": self.secondary.to_json(),
            "doi_percent": self.doi_percent,
            "connected_bits": self.connected_bits,
            "primary_width": self.primary_width,
            "hops": [h.to_json() for h in self.hops],
            "exact": self.exact,
            "tie_broken": self.tie_broken,
            "notes": list(self.notes),
        }


def unroll_assets(path: HierarchyPath, annotations) -> list[AssetAnnotation]:
    """Annotations whose module lies on ``path``, ordered root to leaf."""
    order = {m: i for i, m in enumerate(path.modules)}
    hits = [a for a in annotations if a.structural_ref.module in order]
    return sorted(hits, key=lambda a: order[a.structural_ref.module])


def select_primary(path_assets) -> tuple[Optional[AssetAnnotation], bool]:
    """Pick the primary with most CWEs, then most attack scenarios.

    Remaining ties go to the lexicographically largest element name; the
    boolean reports whether that last rule decided.
    """
    prims = [a for a in path_assets if a.is_primary]
    if not prims:
        return None, False

    def score(a):
        return (len(a.cwe_ids), len(a.attack_scenarios))

    best = max(score(a) for a in prims)
    leaders = [a for a in prims if score(a) == best]
    chosen = max(leaders, key=lambda a: (a.structural_ref.name, a.structural_ref.module))
    return chosen, len({(a.structural_ref.name, a.structural_ref.module) for a in leaders}) > 1


def _bits(graph: InfluenceGraph, ref: StructuralRef) -> list:
    out = []
    for name in ref.members:
        out.extend(graph.signal_bits(ref.module, name))
    return out


def _port_groups(model: DesignModel, module: str, directions) -> list:
    """(port name, bit keys) of ``module`` with a direction in ``directions``."""
    mod = model[module]
    return [(p.name, p.width_bits) for p in mod.ports if p.direction in directions]


def compute_doi(
    graph: InfluenceGraph,
    primary: StructuralRef,
    secondary: StructuralRef,
    path: HierarchyPath,
    tie_broken: bool = False,
) -> DoIRecord:
    dp = path.depth_of(primary.module)
    ds = path.depth_of(secondary.module)
    if dp is None or ds is None:
        raise ValueError(f"{primary} / {secondary} not both on path {path}")
    model = graph.model
    mods = path.modules
    insts = [inst for inst, _ in path.segments]
    prim_bits = _bits(graph, primary)
    sec_bits = _bits(graph, secondary)
    notes = []
    exact = True

    # Per-hop region, local sources -> target groups in that region.  Each
    # target group is (element name, keys in the region, keys as the next
    # region's sources).
    if ds == dp:
        plan = []
    elif ds > dp:
        plan = []
        for k in range(ds, dp, -1):
            groups = []
            for pname, w in _port_groups(model, mods[k], ("out", "inout")):
                here = [("s", pname, b) for b in range(w)]
                there = [("c", insts[k], pname, b) for b in range(w)]
                groups.append((pname, here, there))
            plan.append((k, k - 1, groups))
    else:
        plan = []
        for k in range(ds, dp):
            groups = []
            for pname, w in _port_groups(model, mods[k + 1], ("in", "inout")):
                here = [("c", insts[k + 1], pname, b) for b in range(w)]
                there = [("s", pname, b) for b in range(w)]
                groups.append((pname, here, there))
            plan.append((k, k + 1, groups))

    # Backward pass: keep only groups from which the primary is reachable.
    wanted = list(prim_bits)
    kept: list = [None] * len(plan)
    for idx in range(len(plan) - 1, -1, -1):
        k, nxt, groups = plan[idx]
        sel = []
        for pname, here, there in groups:
            reached, _ = graph.reach(mods[nxt], there, wanted)
            if reached:
                sel.append((pname, here, there))
        kept[idx] = sel
        wanted = [key for _, here, _ in sel for key in here]

    hops = []
    sources = sec_bits
    end_sources = sec_bits  # only the bits actually reached, for the end-to-end count
    for idx, (k, nxt, _) in enumerate(plan):
        sel = kept[idx]
        targets = [key for _, here, _ in sel for key in here]
        width = len(targets)
        reached, ex = graph.reach(mods[k], sources, targets) if targets else (set(), True)
        exact = exact and ex
        hops.append(Hop(mods[k], tuple(p for p, _, _ in sel), len(reached), width))
        if not targets:
            notes.append(f"no boundary port of {mods[k]} leads towards {primary}")
        end_reached, _ = graph.reach(mods[k], end_sources, targets) if targets else (set(), True)
        forward = {}
        for _, here, there in sel:
            forward.update(zip(here, there))
        sources = [key for _, _, there in sel for key in there]
        end_sources = [forward[t] for t in targets if t in end_reached]
    reached, ex = graph.reach(mods[dp], sources, prim_bits)
    exact = exact and ex
    hops.append(Hop(mods[dp], tuple(primary.members), len(reached), len(prim_bits)))
    end, _ = graph.reach(mods[dp], end_sources, prim_bits)
    return DoIRecord(
        path=path,
        primary=primary,
        secondary=secondary,
        hops=tuple(hops),
        connected_bits=len(end),
        primary_width=len(prim_bits),
        exact=exact,
        tie_broken=tie_broken,
        notes=tuple(notes),
    )


def doi_for_design(model: DesignModel, annotations, paths=None) -> list[DoIRecord]:
    """DoI of every secondary against the selected primary on each path."""
    graph = InfluenceGraph(model)
    annotations = list(annotations)
    records = []
    for path in paths if paths is not None else hierarchy_paths(model):
        on_path = unroll_assets(path, annotations)
        prim, tie = select_primary(on_path)
        if prim is None:
            continue
        if tie:
            log.info("primary on %s chosen by name tie-break: %s", path, prim.structural_ref)
        for a in on_path:
            if a.is_primary:
                continue
            try:
                records.append(compute_doi(graph, prim.structural_ref, a.structural_ref, path, tie))
            except KeyError as exc:
                log.warning("skipping %s on %s: %s", a.structural_ref, path, exc)
    return records
