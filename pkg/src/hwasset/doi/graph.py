"""Bit-level influence graph over a parsed design.

Each module gets a local graph whose nodes are signal bits, the port bits
of its child instances and anonymous hub nodes.  Exact wiring (plain
identifiers, constant selects, concatenations) produces bit-aligned edges;
any other expression routes every referenced source bit through a hub to
every destination bit and is marked inexact.  Branch conditions of
procedural code feed the same way into every bit they guard.

Children are represented by a memoised per-module summary (which input
bits reach which output bits), so a query inside one module never has to
flatten the whole hierarchy below it.  Reachability is computed with a
strongly-connected-component pass and integer bitsets over the requested
target bits.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Optional

from ..rtl.expr import Call, Concat, Id, Index, Num, Repl, Slice, Str, Ternary, Unary, Binary, try_const
from ..rtl.model import DesignModel, ModuleDecl, bit_offset

log = logging.getLogger(__name__)

Key = tuple  # ("s", signal, bit) | ("c", instance, formal, bit) | ("h", n)

_EMPTY: frozenset = frozenset()
_CMP_OPS = {"==", "!=", "===", "!==", "<", "<=", ">", ">=", "&&", "||", "==?", "!=?"}
_SHIFT_OPS = {"<<", ">>", "<<<", ">>>", "**"}
_REDUCE_OPS = {"&", "|", "^", "~&", "~|", "~^", "^~", "!"}


@dataclass(frozen=True)
class BitEdge:
    src: tuple  # (instance_path, signal, bit)
    dst: tuple
    exact: bool


def _sig(name: str, bit: int) -> Key:
    return ("s", name, bit)


class ModuleNet:
    """Local influence graph of one module."""

    def __init__(self, module: ModuleDecl, graph: "InfluenceGraph"):
        self.module = module
        self.graph = graph
        self.env = dict(module.param_values)
        self.decl = {}
        for p in module.ports:
            self.decl[p.name] = (p.msb, p.lsb, 1)
        for s in module.signals:
            self.decl[s.name] = (s.msb, s.lsb, s.depth)
        self.index: dict[Key, int] = {}
        self.keys: list[Key] = []
        self.succ: list[list] = []
        self.warnings: list[str] = []
        self._hubs = 0
        self._build()

    # -- node bookkeeping -------------------------------------------------

    def node(self, key: Key) -> int:
        i = self.index.get(key)
        if i is None:
            i = len(self.keys)
            self.index[key] = i
            self.keys.append(key)
            self.succ.append([])
        return i

    def edge(self, a: Key, b: Key, exact: bool) -> None:
        self.succ[self.node(a)].append((self.node(b), exact))

    def hub(self) -> Key:
        self._hubs += 1
        return ("h", self._hubs)

    def warn(self, msg: str) -> None:
        self.warnings.append(f"{self.module.name}: {msg}")

    def width(self, name: str) -> int:
        msb, lsb, depth = self.decl[name]
        return (abs(msb - lsb) + 1) * depth

    def bits_of(self, name: str) -> list[Key]:
        if name not in self.decl:
            self.decl[name] = (0, 0, 1)
            self.warn(f"implicit 1-bit net {name!r}")
        return [_sig(name, b) for b in range(self.width(name))]

    # -- expression analysis ----------------------------------------------

    def _inexact(self, parts: Iterable[list], width: int) -> list:
        refs = set()
        for p in parts:
            for srcs, _ in p:
                refs |= srcs
        fs = frozenset(refs)
        return [(fs, False)] * max(width, 0)

    def _select(self, base, lo_idx: Optional[int], hi_idx: Optional[int]) -> Optional[list]:
        """Bits of ``base[hi:lo]`` as exact single-source entries, or None."""
        if not isinstance(base, Id) or base.name not in self.decl or lo_idx is None or hi_idx is None:
            return None
        msb, lsb, depth = self.decl[base.name]
        if depth > 1:
            return None
        lo, hi = sorted((bit_offset(msb, lsb, lo_idx), bit_offset(msb, lsb, hi_idx)))
        w = self.width(base.name)
        if lo < 0 or hi >= w:
            self.warn(f"select {base.name}[{hi_idx}:{lo_idx}] outside declared range")
            lo, hi = max(lo, 0), min(hi, w - 1)
        return [(frozenset({_sig(base.name, b)}), True) for b in range(lo, hi + 1)]

    def rv(self, e) -> list:
        """Per-bit (sources, exact) list, least significant bit first."""
        if isinstance(e, Num):
            return [(_EMPTY, True)] * (e.width or 32)
        if isinstance(e, Str):
            return [(_EMPTY, True)] * (8 * len(e.value))
        if isinstance(e, Id):
            if e.name not in self.decl and (e.name in self.env or e.name.split("::")[-1] in self.env):
                return [(_EMPTY, True)] * 32
            return [(frozenset({k}), True) for k in self.bits_of(e.name)]
        if isinstance(e, Index):
            k = try_const(e.index, self.env)
            if isinstance(e.base, Id) and e.base.name in self.decl:
                name = e.base.name
                msb, lsb, depth = self.decl[name]
                ew = abs(msb - lsb) + 1
                if depth > 1:
                    if k is not None and 0 <= k < depth:
                        return [(frozenset({_sig(name, k * ew + b)}), True) for b in range(ew)]
                    return self._inexact([self.rv(e.base), self.rv(e.index)], ew)
                sel = self._select(e.base, k, k) if k is not None else None
                if sel is not None:
                    return sel
                return self._inexact([self.rv(e.base), self.rv(e.index)], 1)
            inner = self.rv(e.base)
            if k is not None and 0 <= k < len(inner) and isinstance(e.base, Index):
                return [inner[k]]
            return self._inexact([inner, self.rv(e.index)], 1)
        if isinstance(e, Slice):
            if e.mode == ":":
                l, r = try_const(e.left, self.env), try_const(e.right, self.env)
                sel = self._select(e.base, r, l)
                if sel is not None:
                    return sel
                inner = self.rv(e.base)
                if l is not None and r is not None and isinstance(e.base, Index):
                    lo, hi = sorted((l, r))
                    if 0 <= lo and hi < len(inner):
                        return inner[lo : hi + 1]
                w = abs(l - r) + 1 if l is not None and r is not None else len(inner)
                return self._inexact([inner, self.rv(e.left), self.rv(e.right)], w)
            start, w = try_const(e.left, self.env), try_const(e.right, self.env)
            if start is not None and w is not None:
                lo_i, hi_i = (start, start + w - 1) if e.mode == "+:" else (start - w + 1, start)
                sel = self._select(e.base, lo_i, hi_i)
                if sel is not None:
                    return sel
            refs = [self.rv(e.base), self.rv(e.left)]
            return self._inexact(refs, w if w is not None else 1)
        if isinstance(e, Concat):
            out = []
            for item in reversed(e.items):
                out.extend(self.rv(item))
            return out
        if isinstance(e, Repl):
            n = try_const(e.count, self.env)
            inner = self.rv(Concat(e.items))
            if n is not None and n >= 0:
                return inner * n
            return self._inexact([inner], len(inner))
        if isinstance(e, Call):
            args = [self.rv(a) for a in e.args]
            if e.name in ("$signed", "$unsigned") and len(args) == 1:
                return args[0]
            return self._inexact(args, 32)
        if isinstance(e, Unary):
            inner = self.rv(e.operand)
            w = 1 if e.op in _REDUCE_OPS else len(inner)
            return self._inexact([inner], w)
        if isinstance(e, Binary):
            a, b = self.rv(e.left), self.rv(e.right)
            if e.op in _CMP_OPS:
                w = 1
            elif e.op in _SHIFT_OPS:
                w = len(a)
            else:
                w = max(len(a), len(b))
            return self._inexact([a, b], w)
        if isinstance(e, Ternary):
            c, t, o = self.rv(e.cond), self.rv(e.then), self.rv(e.other)
            return self._inexact([c, t, o], max(len(t), len(o)))
        self.warn(f"unsupported expression {type(e).__name__}")
        return []

    def lv(self, e) -> tuple[list, bool]:
        """Destination bits (LSB first) and whether the mapping is exact."""
        if isinstance(e, Id):
            return self.bits_of(e.name), True
        if isinstance(e, Concat):
            out, exact = [], True
            for item in reversed(e.items):
                bits, ex = self.lv(item)
                out.extend(bits)
                exact = exact and ex
            return out, exact
        if isinstance(e, (Index, Slice)):
            root = e.base
            while isinstance(root, (Index, Slice)):
                root = root.base
            sel = self.rv(e)
            if sel and all(ex and len(s) == 1 for s, ex in sel):
                return [next(iter(s)) for s, _ in sel], True
            if isinstance(root, Id):
                return self.bits_of(root.name), False
        self.warn(f"unsupported assignment target {type(e).__name__}")
        return [], False

    # -- construction -------------------------------------------------------

    def _connect(self, src: list, dst: list, exact_dst: bool, controls: list, where: str) -> None:
        if exact_dst and src and dst and len(src) != len(dst):
            if any(s for s, _ in src):
                self.warn(f"width mismatch at {where}: {len(src)} source bits, {len(dst)} destination bits")
        hubs: dict[int, Key] = {}
        if not exact_dst:
            refs = set()
            for s, _ in src:
                refs |= s
            for c in controls:
                refs |= c
            if refs and dst:
                h = self.hub()
                for r in refs:
                    self.edge(r, h, False)
                for d in dst:
                    self.edge(h, d, False)
            return
        for i, d in enumerate(dst):
            if i >= len(src):
                break
            srcs, ex = src[i]
            if ex:
                for s in srcs:
                    self.edge(s, d, True)
            elif srcs:
                h = hubs.get(id(srcs))
                if h is None:
                    h = hubs[id(srcs)] = self.hub()
                    for s in srcs:
                        self.edge(s, h, False)
                self.edge(h, d, False)
        ctrl = set()
        for c in controls:
            ctrl |= c
        if ctrl and dst:
            h = self.hub()
            for r in ctrl:
                self.edge(r, h, False)
            for d in dst:
                self.edge(h, d, False)

    def _build(self) -> None:
        for name in self.decl:
            for k in self.bits_of(name):
                self.node(k)
        for a in self.module.assignments:
            dst, exact = self.lv(a.lhs)
            src = self.rv(a.rhs)
            controls = []
            for c in a.controls:
                refs = set()
                for s, _ in self.rv(c):
                    refs |= s
                controls.append(refs)
            self._connect(src, dst, exact, controls, f"line {a.line}")
        for inst in self.module.instances:
            child = self.graph.model.get(inst.target)
            if child is None:
                continue
            for formal, actual in inst.connections:
                if actual is None or formal.startswith("#"):
                    continue
                port = child.port(formal)
                if port is None:
                    self.warn(f"{inst.instance_name}: {inst.target} has no port {formal!r}")
                    continue
                fbits = [("c", inst.instance_name, formal, b) for b in range(port.width_bits)]
                where = f"{inst.instance_name}.{formal}"
                if port.direction in ("in", "inout"):
                    self._connect(self.rv(actual), fbits, True, [], where)
                if port.direction in ("out", "inout"):
                    dst, exact = self.lv(actual)
                    self._connect([(frozenset({f}), True) for f in fbits], dst, exact, [], where)
            self._add_summary(inst.instance_name, child)

    def _add_summary(self, inst: str, child: ModuleDecl) -> None:
        summ = self.graph.summary(child.name)
        outs = summ.outputs
        groups: dict[tuple, Key] = {}
        for (pname, bit), (reach, exact) in summ.transfer.items():
            if not reach:
                continue
            src = ("c", inst, pname, bit)
            h = groups.get((reach, exact))
            if h is None:
                h = groups[(reach, exact)] = self.hub()
                r = reach
                while r:
                    low = r & -r
                    j = low.bit_length() - 1
                    opn, ob = outs[j]
                    self.edge(h, ("c", inst, opn, ob), bool(exact & low))
                    r ^= low
            self.edge(src, h, True)

    # -- queries ------------------------------------------------------------

    def reach_table(self, targets: tuple) -> tuple[list[int], list[int]]:
        """For every node, bitsets of ``targets`` reachable (all / exact-only)."""
        tindex = {}
        for j, t in enumerate(targets):
            tindex.setdefault(self.node(t), 0)
            tindex[self.node(t)] |= 1 << j
        full = _propagate(self.succ, tindex, exact_only=False)
        exact = _propagate(self.succ, tindex, exact_only=True)
        return full, exact

    def edges(self) -> list[tuple[Key, Key, bool]]:
        """Local edges with hubs expanded into direct bit-to-bit pairs."""
        out = []
        for i, key in enumerate(self.keys):
            if key[0] == "h":
                continue
            seen: dict[int, bool] = {}
            hubs_seen = set()
            stack = list(self.succ[i])
            while stack:
                j, ex = stack.pop()
                if self.keys[j][0] == "h":
                    if (j, ex) not in hubs_seen:
                        hubs_seen.add((j, ex))
                        stack.extend((k, ex and ex2) for k, ex2 in self.succ[j])
                    continue
                seen[j] = seen.get(j, False) or ex
            for j, ex in seen.items():
                out.append((key, self.keys[j], ex))
        return out


def _propagate(succ: list[list], own: dict[int, int], exact_only: bool) -> list[int]:
    """Reachable-target bitset per node (iterative Tarjan SCC + DP)."""
    n = len(succ)
    index = [-1] * n
    low = [0] * n
    on_stack = [False] * n
    comp = [-1] * n
    comp_val: list[int] = []
    stack: list[int] = []
    counter = 0
    for root in range(n):
        if index[root] != -1:
            continue
        work = [(root, 0)]
        while work:
            v, pi = work[-1]
            if pi == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            edges = succ[v]
            advanced = False
            while pi < len(edges):
                w, ex = edges[pi]
                pi += 1
                if exact_only and not ex:
                    continue
                if index[w] == -1:
                    work[-1] = (v, pi)
                    work.append((w, 0))
                    advanced = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                members = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp[w] = len(comp_val)
                    members.append(w)
                    if w == v:
                        break
                cid = len(comp_val)
                val = 0
                for m in members:
                    val |= own.get(m, 0)
                    for w, ex in succ[m]:
                        if exact_only and not ex:
                            continue
                        c = comp[w]
                        if c != cid:
                            val |= comp_val[c]
                comp_val.append(val)
    return [comp_val[comp[v]] for v in range(n)]


@dataclass
class Summary:
    outputs: list  # [(port, bit)] indexed by bitset position
    transfer: dict  # (input port, bit) -> (reach bitset, exact bitset)


class InfluenceGraph:
    """Lazily built influence graph for a whole design."""

    def __init__(self, model: DesignModel):
        self.model = model
        self._nets: dict[str, ModuleNet] = {}
        self._summaries: dict[str, Summary] = {}
        self._tables: dict[tuple, tuple] = {}
        self._building: set[str] = set()

    @property
    def warnings(self) -> list[str]:
        out = []
        for n in self._nets.values():
            out.extend(n.warnings)
        return out

    def net(self, module: str) -> ModuleNet:
        n = self._nets.get(module)
        if n is None:
            if module in self._building:
                raise RuntimeError(f"recursive instantiation of {module}")
            self._building.add(module)
            try:
                n = ModuleNet(self.model[module], self)
            finally:
                self._building.discard(module)
            self._nets[module] = n
        return n

    def summary(self, module: str) -> Summary:
        s = self._summaries.get(module)
        if s is not None:
            return s
        mod = self.model[module]
        net = self.net(module)
        outputs = [(p.name, b) for p in mod.ports if p.direction in ("out", "inout") for b in range(p.width_bits)]
        full, exact = net.reach_table(tuple(_sig(p, b) for p, b in outputs))
        transfer = {}
        for p in mod.ports:
            if p.direction in ("in", "inout"):
                for b in range(p.width_bits):
                    i = net.index[_sig(p.name, b)]
                    transfer[(p.name, b)] = (full[i], exact[i])
        s = Summary(outputs, transfer)
        self._summaries[module] = s
        return s

    def reach(self, module: str, sources: Iterable[Key], targets: Iterable[Key]) -> tuple[set, bool]:
        """Targets reachable from any source inside ``module`` and its subtree.

        Returns the reached target keys and whether every contributing
        connection is exact.
        """
        targets = tuple(dict.fromkeys(targets))
        net = self.net(module)
        key = (module, targets)
        table = self._tables.get(key)
        if table is None:
            table = self._tables[key] = net.reach_table(targets)
        full, exact = table
        r = e = 0
        tpos = {t: j for j, t in enumerate(targets)}
        for s in sources:
            i = net.index.get(s)
            if i is None:
                j = tpos.get(s)
                if j is not None:
                    r |= 1 << j
                    e |= 1 << j
                continue
            r |= full[i]
            e |= exact[i]
        reached = {targets[j] for j in range(len(targets)) if r >> j & 1}
        return reached, r == e

    def signal_bits(self, module: str, name: str) -> list[Key]:
        mod = self.model[module]
        el = mod.element(name)
        if el is None:
            raise KeyError(f"{module} has no element {name!r}")
        return [_sig(name, b) for b in range(el.width_bits)]

    def edges(self, root: str, _prefix: tuple = ()) -> Iterable[BitEdge]:
        """Bit edges of the flattened subtree under ``root``.

        Instance port bits appear as the child's own signal bits, so two
        edges meet at every module boundary.  Intended for small designs.
        """
        net = self.net(root)

        def conv(k):
            if k[0] == "s":
                return (_prefix, k[1], k[2])
            return (_prefix + (k[1],), k[2], k[3])

        for a, b, ex in net.edges():
            if a[0] == "c" and b[0] == "c" and a[1] == b[1]:
                continue  # summary edge, expanded by recursing below
            yield BitEdge(conv(a), conv(b), ex)
        for inst in self.model[root].instances:
            if inst.target in self.model:
                yield from self.edges(inst.target, _prefix + (inst.instance_name,))
