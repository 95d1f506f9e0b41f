"""Immutable design-model types produced by the HDL front ends."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Optional

from ..errors import HierarchyError


class Language(str, Enum):
    VERILOG = "Verilog"
    SYSTEMVERILOG = "SystemVerilog"
    VHDL = "VHDL"


def _width(msb: int, lsb: int) -> int:
    return abs(msb - lsb) + 1


def bit_offset(msb: int, lsb: int, index: int) -> int:
    """Offset of ``index`` from the least significant end of ``[msb:lsb]``."""
    return index - lsb if msb >= lsb else lsb - index


@dataclass(frozen=True)
class PortDecl:
    name: str
    direction: str  # "in" | "out" | "inout"
    msb: int = 0
    lsb: int = 0
    net_type: str = "wire"

    def __post_init__(self):
        if self.direction not in ("in", "out", "inout"):
            raise ValueError(f"bad port direction {self.direction!r}")

    @property
    def range(self) -> tuple[int, int]:
        return (self.msb, self.lsb)

    @property
    def width_bits(self) -> int:
        return _width(self.msb, self.lsb)


@dataclass(frozen=True)
class SignalDecl:
    name: str
    kind: str  # "wire" | "reg" | "other"
    msb: int = 0
    lsb: int = 0
    depth: int = 1  # product of unpacked dimensions; 1 for plain vectors

    @property
    def range(self) -> tuple[int, int]:
        return (self.msb, self.lsb)

    @property
    def element_width(self) -> int:
        return _width(self.msb, self.lsb)

    @property
    def width_bits(self) -> int:
        return self.element_width * self.depth


@dataclass(frozen=True)
class InstanceDecl:
    instance_name: str
    target: str
    port_map: tuple  # tuple of (formal, actual_text)
    connections: tuple = field(default=(), compare=False, repr=False)  # (formal, Expr|None)
    param_overrides: tuple = ()
    line: int = 0

    def __post_init__(self):
        formals = [f for f, _ in self.port_map]
        if len(formals) != len(set(formals)):
            raise ValueError(f"duplicate formal in instance {self.instance_name}")


@dataclass(frozen=True)
class Assignment:
    """A driver of ``lhs`` by ``rhs``; ``controls`` are enclosing branch conditions."""

    lhs: object
    rhs: object
    controls: tuple = ()
    procedural: bool = False
    line: int = 0


@dataclass(frozen=True)
class ModuleDecl:
    name: str
    file: str
    language: Language
    ports: tuple = ()
    signals: tuple = ()
    parameters: tuple = ()  # (name, default text)
    instances: tuple = ()
    assignments: tuple = field(default=(), compare=False, repr=False)
    param_values: tuple = field(default=(), compare=False, repr=False)
    notes: tuple = ()
    line: int = 0

    def __post_init__(self):
        pnames = [p.name for p in self.ports]
        if len(pnames) != len(set(pnames)):
            raise ValueError(f"{self.name}: duplicate port names")
        snames = [s.name for s in self.signals]
        if len(snames) != len(set(snames)):
            raise ValueError(f"{self.name}: duplicate signal names")
        if set(pnames) & set(snames):
            raise ValueError(f"{self.name}: signal names overlap port names")

    @property
    def element_count(self) -> int:
        return len(self.ports) + len(self.signals)

    def port(self, name: str) -> Optional[PortDecl]:
        for p in self.ports:
            if p.name == name:
                return p
        return None

    def signal(self, name: str) -> Optional[SignalDecl]:
        for s in self.signals:
            if s.name == name:
                return s
        return None

    def element(self, name: str):
        return self.port(name) or self.signal(name)

    def element_names(self) -> list[str]:
        return [p.name for p in self.ports] + [s.name for s in self.signals]


@dataclass(frozen=True)
class HierarchyPath:
    segments: tuple  # ((instance_name, module_name), ...)

    def __post_init__(self):
        if not self.segments:
            raise ValueError("hierarchy path must be non-empty")

    @property
    def modules(self) -> list[str]:
        return [m for _, m in self.segments]

    def instance_path(self, depth: int) -> tuple:
        """Instance names below the root down to ``depth`` (root is depth 0)."""
        return tuple(inst for inst, _ in self.segments[1 : depth + 1])

    def depth_of(self, module: str) -> Optional[int]:
        for i, (_, m) in enumerate(self.segments):
            if m == module:
                return i
        return None

    def __len__(self):
        return len(self.segments)

    def __str__(self):
        return " -> ".join(
            m if i == 0 else f"{inst}:{m}" for i, (inst, m) in enumerate(self.segments)
        )


@dataclass(frozen=True)
class DesignModel:
    modules: tuple
    warnings: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "_by_name", {m.name: m for m in self.modules})

    def __iter__(self) -> Iterator[ModuleDecl]:
        return iter(self.modules)

    def __len__(self):
        return len(self.modules)

    def __contains__(self, name):
        return name in self._by_name

    def get(self, name: str) -> Optional[ModuleDecl]:
        return self._by_name.get(name)

    def __getitem__(self, name: str) -> ModuleDecl:
        return self._by_name[name]

    @property
    def element_count(self) -> int:
        return sum(m.element_count for m in self.modules)

    def external_targets(self) -> set[str]:
        return {
            inst.target
            for m in self.modules
            for inst in m.instances
            if inst.target not in self._by_name
        }

    def roots(self) -> list[str]:
        instantiated = {
            inst.target for m in self.modules for inst in m.instances if inst.target != m.name
        }
        return [m.name for m in self.modules if m.name not in instantiated]

    def descendants(self, name: str) -> list[str]:
        """Modules reachable through instantiation below ``name`` (not including it)."""
        seen: list[str] = []
        stack = [name]
        while stack:
            cur = self.get(stack.pop())
            if cur is None:
                continue
            for inst in cur.instances:
                if inst.target in self._by_name and inst.target not in seen and inst.target != name:
                    seen.append(inst.target)
                    stack.append(inst.target)
        return seen


def hierarchy_paths(model: DesignModel, roots=None) -> list[HierarchyPath]:
    """Every root-to-leaf instantiation chain, once each.

    External (unresolved) instance targets do not appear as segments.
    """
    _check_cycles(model)
    if roots is None:
        roots = model.roots()
    out: list[HierarchyPath] = []

    def walk(segments):
        mod = model[segments[-1][1]]
        children = [i for i in mod.instances if i.target in model]
        if not children:
            out.append(HierarchyPath(tuple(segments)))
            return
        for inst in children:
            walk(segments + [(inst.instance_name, inst.target)])

    for r in roots:
        if r not in model:
            raise KeyError(f"unknown root module {r!r}")
        walk([(r, r)])
    return out


def _check_cycles(model: DesignModel) -> None:
    state: dict[str, int] = {}
    stack: list[str] = []

    def visit(name):
        state[name] = 1
        stack.append(name)
        for inst in model[name].instances:
            t = inst.target
            if t not in model:
                continue
            if state.get(t) == 1:
                i = stack.index(t)
                raise HierarchyError(stack[i:] + [t])
            if t not in state:
                visit(t)
        stack.pop()
        state[name] = 2

    for m in model.modules:
        if m.name not in state:
            visit(m.name)
