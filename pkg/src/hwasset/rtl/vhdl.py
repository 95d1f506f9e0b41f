"""VHDL entity header extraction (ports and generics only).

Architecture bodies are not analysed; the resulting module carries a note
saying so.
"""

from __future__ import annotations

import re

from ..errors import ParseError
from .expr import NotConstant, const_eval, parse_expr_text
from .model import Language, ModuleDecl, PortDecl

_DIRS = {"in": "in", "out": "out", "inout": "inout", "buffer": "out", "linkage": "inout"}
_SCALAR_TYPES = {"std_logic", "std_ulogic", "bit", "boolean"}
_ENTITY_RE = re.compile(r"\bentity\s+(\w+)\s+is\b", re.I)


def strip_vhdl_comments(text: str) -> str:
    return re.sub(r"--[^\n]*", "", text)


def _find_clause(body: str, keyword: str):
    """Text inside ``keyword ( ... )`` with balanced parentheses, or None."""
    m = re.search(rf"\b{keyword}\s*\(", body, re.I)
    if not m:
        return None, None
    depth = 1
    i = m.end()
    while i < len(body) and depth:
        if body[i] == "(":
            depth += 1
        elif body[i] == ")":
            depth -= 1
        i += 1
    if depth:
        return None, None
    return body[m.end() : i - 1], m.start()


def _split_top(text: str, sep: str = ";"):
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == sep and depth == 0:
            parts.append("".join(cur))
            cur = []
        else:
            cur.append(ch)
    if "".join(cur).strip():
        parts.append("".join(cur))
    return [p.strip() for p in parts if p.strip()]


def _vhdl_expr_value(text: str, env: dict) -> int:
    t = text.strip().lower()
    t = re.sub(r"(\w+)'length", r"\1_length", t)
    return const_eval(parse_expr_text(t), env)


def _type_width(typ: str, env: dict, notes: list, name: str):
    t = typ.strip().lower()
    t = re.split(r":=", t)[0].strip()
    base = re.match(r"[\w.]+", t)
    base_name = base.group().split(".")[-1] if base else t
    if base_name in _SCALAR_TYPES:
        return 0, 0
    rm = re.search(r"\((.*)\)", t, re.S)
    if rm:
        inner = rm.group(1)
        dm = re.match(r"(.+?)\s+(downto|to)\s+(.+)", inner.strip(), re.S)
        if dm:
            try:
                left = _vhdl_expr_value(dm.group(1), env)
                right = _vhdl_expr_value(dm.group(3), env)
                return left, right
            except (NotConstant, ParseError) as exc:
                notes.append(f"port {name}: range {inner.strip()!r} not constant ({exc}); width taken as 1")
                return 0, 0
    rm = re.search(r"\brange\s+(.+?)\s+(downto|to)\s+(.+)", t)
    if base_name in ("integer", "natural", "positive"):
        if rm:
            try:
                lo = _vhdl_expr_value(rm.group(1), env)
                hi = _vhdl_expr_value(rm.group(3), env)
                span = abs(hi - lo) + 1
                w = max(1, (span - 1).bit_length())
                notes.append(f"port {name}: integer range encoded in {w} bits")
                return w - 1, 0
            except (NotConstant, ParseError):
                pass
        notes.append(f"port {name}: integer port taken as 32 bits")
        return 31, 0
    notes.append(f"port {name}: type {typ.strip()!r} not understood; width taken as 1")
    return 0, 0


def parse_vhdl_entities(text: str, file: str | None = None) -> list[ModuleDecl]:
    clean = strip_vhdl_comments(text)
    out = []
    for m in _ENTITY_RE.finditer(clean):
        name = m.group(1)
        line = clean.count("\n", 0, m.start()) + 1
        end_m = re.compile(rf"\bend(\s+entity)?(\s+{re.escape(name)})?\s*;", re.I).search(clean, m.end())
        if not end_m:
            raise ParseError(f"entity {name}: missing end", file, line)
        body = clean[m.end() : end_m.start()]
        notes = ["VHDL architecture bodies are not analysed"]
        env: dict[str, int] = {}
        params = []
        gen_text, gpos = _find_clause(body, "generic")
        port_text, ppos = _find_clause(body, "port")
        if gen_text is not None and (ppos is None or gpos < ppos):
            for decl in _split_top(gen_text):
                gm = re.match(r"([\w\s,]+):\s*([^:]+?)(?::=\s*(.+))?$", decl, re.S)
                if not gm:
                    notes.append(f"generic {decl!r} not understood")
                    continue
                default = (gm.group(3) or "").strip()
                for g in [x.strip() for x in gm.group(1).split(",") if x.strip()]:
                    params.append((g, default))
                    if default:
                        try:
                            env[g.lower()] = _vhdl_expr_value(default, env)
                        except (NotConstant, ParseError):
                            pass
        ports = []
        if port_text is not None:
            for decl in _split_top(port_text):
                pm = re.match(r"([\w\s,]+):\s*(in|out|inout|buffer|linkage)\b\s*(.+)$", decl, re.S | re.I)
                if not pm:
                    raise ParseError(f"entity {name}: malformed port declaration {decl!r}", file, line)
                direction = _DIRS[pm.group(2).lower()]
                for pname in [x.strip() for x in pm.group(1).split(",") if x.strip()]:
                    msb, lsb = _type_width(pm.group(3), env, notes, pname)
                    ports.append(PortDecl(pname, direction, msb, lsb, "wire"))
        out.append(
            ModuleDecl(
                name=name,
                file=file or "",
                language=Language.VHDL,
                ports=tuple(ports),
                parameters=tuple(params),
                param_values=tuple(sorted(env.items())),
                notes=tuple(notes),
                line=line,
            )
        )
    return out
