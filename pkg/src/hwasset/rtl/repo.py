"""Repository scanning and design-model assembly."""

from __future__ import annotations

import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

from ..errors import EmptyModelError, ParseError
from .expr import Id, render, tokenize
from .model import DesignModel, Language, ModuleDecl
from .preprocess import Preprocessor
from .verilog import ModuleParser, find_module_spans, parse_verilog_modules
from .vhdl import parse_vhdl_entities

log = logging.getLogger(__name__)

HDL_SUFFIXES = {".v": Language.VERILOG, ".sv": Language.SYSTEMVERILOG, ".vhd": Language.VHDL, ".vhdl": Language.VHDL}
HEADER_SUFFIXES = {".vh", ".svh", ".h", ".inc"}


def hdl_files(repo) -> list[Path]:
    root = Path(repo)
    files = [p for p in root.rglob("*") if p.is_file() and p.suffix.lower() in HDL_SUFFIXES]
    return sorted(files, key=lambda p: p.relative_to(root).as_posix())


def parse_module(source_text: str, language=Language.VERILOG, file: str = "") -> ModuleDecl:
    """Parse text holding exactly one module (or VHDL entity)."""
    language = Language(language)
    if language is Language.VHDL:
        mods = parse_vhdl_entities(source_text, file)
    else:
        text = Preprocessor().run(source_text)
        mods = parse_verilog_modules(text, file, language)
    if len(mods) != 1:
        raise ParseError(f"expected exactly one module declaration, found {len(mods)}", file or None)
    return mods[0]


def _parse_file(path: Path, root: Path, pre_args):
    rel = path.relative_to(root).as_posix()
    warnings: list[str] = []
    try:
        raw = path.read_text(encoding="utf-8", errors="replace")
    except OSError as exc:
        warnings.append(f"{rel}: unreadable ({exc}); skipped")
        return [], warnings
    lang = HDL_SUFFIXES[path.suffix.lower()]
    if lang is Language.VHDL:
        try:
            return parse_vhdl_entities(raw, rel), warnings
        except ParseError as exc:
            warnings.append(f"{rel}: {exc}; skipped")
            return [], warnings
    pre = Preprocessor(*pre_args)
    text = pre.run(raw, path)
    warnings.extend(pre.warnings)
    try:
        toks = tokenize(text)
        spans = find_module_spans(toks)
    except ParseError as exc:
        warnings.append(f"{rel}:{exc.line}: {exc}; file skipped")
        return [], warnings
    mods = []
    for start, _ in spans:
        try:
            mods.append(ModuleParser(toks, start, rel, lang).parse())
        except ParseError as exc:
            warnings.append(f"{rel}: {exc}; module skipped")
    return mods, warnings


def list_modules(repo, defines=None, include_dirs=None, jobs: int = 1, _warnings=None) -> list[ModuleDecl]:
    """One ModuleDecl per declaration, ordered by path then declaration order.

    Returns an empty list for a directory without HDL sources; raises
    :class:`EmptyModelError` when sources exist but none yields a module.
    """
    root = Path(repo)
    if not root.is_dir():
        raise FileNotFoundError(f"repository {root} is not a directory")
    files = hdl_files(root)
    if not files:
        return []
    if include_dirs is None:
        include_dirs = sorted({p.parent for p in root.rglob("*") if p.suffix.lower() in HEADER_SUFFIXES | set(HDL_SUFFIXES)})
    pre_args = (include_dirs, defines)
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as ex:
            results = list(ex.map(lambda f: _parse_file(f, root, pre_args), files))
    else:
        results = [_parse_file(f, root, pre_args) for f in files]
    modules, warnings = [], []
    for mods, w in results:
        modules.extend(mods)
        warnings.extend(w)
    for w in warnings:
        log.warning(w)
    if _warnings is not None:
        _warnings.extend(warnings)
    if not modules:
        raise EmptyModelError(f"no parseable modules under {root}")
    return modules


def resolve_connections(modules) -> tuple[list[ModuleDecl], list[str]]:
    """Map positional and wildcard connections onto formal port names."""
    by_name: dict[str, ModuleDecl] = {}
    warnings = []
    unique = []
    for m in modules:
        if m.name in by_name:
            warnings.append(f"duplicate module {m.name} in {m.file}; first definition ({by_name[m.name].file}) kept")
            continue
        by_name[m.name] = m
        unique.append(m)
    out = []
    for m in unique:
        new_insts = []
        changed = False
        for inst in m.instances:
            child = by_name.get(inst.target)
            conns = list(inst.connections)
            needs = any(f.startswith("#") or f == ".*" for f, _ in conns)
            if not needs:
                new_insts.append(inst)
                continue
            changed = True
            resolved = []
            for f, e in conns:
                if f == ".*":
                    if child is None:
                        continue
                    named = {x for x, _ in conns}
                    for p in child.ports:
                        if p.name not in named:
                            resolved.append((p.name, Id(p.name)))
                elif f.startswith("#"):
                    idx = int(f[1:])
                    if child is None or idx >= len(child.ports):
                        if child is not None:
                            warnings.append(f"{m.name}.{inst.instance_name}: positional connection {idx} beyond {child.name} ports")
                        resolved.append((f, e))
                    else:
                        resolved.append((child.ports[idx].name, e))
                else:
                    resolved.append((f, e))
            seen = set()
            dedup = []
            for f, e in resolved:
                if f in seen:
                    continue
                seen.add(f)
                dedup.append((f, e))
            pm = tuple((f, render(e) if e is not None else "") for f, e in dedup)
            new_insts.append(replace(inst, port_map=pm, connections=tuple(dedup)))
        out.append(replace(m, instances=tuple(new_insts)) if changed else m)
    return out, warnings


def load_design(repo, defines=None, include_dirs=None, jobs: int = 1) -> DesignModel:
    """Parse ``repo`` into an immutable :class:`DesignModel`."""
    warnings: list[str] = []
    modules = list_modules(repo, defines, include_dirs, jobs, warnings)
    if not modules:
        raise EmptyModelError(f"no HDL sources under {repo}")
    modules, w2 = resolve_connections(modules)
    warnings.extend(w2)
    model = DesignModel(tuple(modules), tuple(warnings))
    for t in sorted(model.external_targets()):
        warnings.append(f"instance target {t} not found in repository; treated as external")
    return DesignModel(tuple(modules), tuple(warnings))


def module_source(module, repo) -> str:
    """Source text of ``module``: from its declaration to its end keyword.

    Falls back to the whole file when the boundaries cannot be located.
    """
    text = (Path(repo) / module.file).read_text(encoding="utf-8", errors="replace")
    lines = text.split("\n")
    start = max(0, module.line - 1)
    if module.language is Language.VHDL:
        end_re = re.compile(rf"^\s*end\s+(entity\s+)?{re.escape(module.name)}\s*;", re.I)
    else:
        end_re = re.compile(r"\bendmodule\b")
    for i in range(start, len(lines)):
        if end_re.search(lines[i]):
            return "\n".join(lines[start : i + 1]) + "\n"
    return text
