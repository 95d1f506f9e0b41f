"""Comment stripping and a light Verilog preprocessor.

Supports ``include``, object-like ``define`` and ``ifdef``/``ifndef``/
``elsif``/``else``/``endif``.  Newlines are preserved wherever possible so
that line numbers in later diagnostics still point at the source.
"""

from __future__ import annotations

import logging
import re
from pathlib import Path

log = logging.getLogger(__name__)

_IGNORED = {
    "timescale", "default_nettype", "resetall", "celldefine", "endcelldefine",
    "unconnected_drive", "nounconnected_drive", "pragma", "line", "begin_keywords",
    "end_keywords", "undefineall",
}


def strip_comments(text: str) -> str:
    """Remove // and /* */ comments, keeping string literals and newlines."""
    out = []
    i = 0
    n = len(text)
    while i < n:
        c = text[i]
        if c == '"':
            j = i + 1
            while j < n and text[j] != '"' and text[j] != "\n":
                j += 2 if text[j] == "\\" else 1
            out.append(text[i : j + 1])
            i = j + 1
        elif text.startswith("//", i):
            j = text.find("\n", i)
            i = n if j < 0 else j
        elif text.startswith("/*", i):
            j = text.find("*/", i + 2)
            chunk = text[i : n if j < 0 else j + 2]
            out.append("\n" * chunk.count("\n"))
            i = n if j < 0 else j + 2
        else:
            out.append(c)
            i += 1
    return "".join(out)


_ATTR_RE = re.compile(r"\(\*\s*[A-Za-z_][^*]*?\*\)")
_DIRECTIVE_RE = re.compile(r"`([A-Za-z_]\w*)")


class Preprocessor:
    def __init__(self, include_dirs=(), defines=None):
        self.include_dirs = [Path(d) for d in include_dirs]
        self.defines: dict[str, str] = dict(defines or {})
        self.warnings: list[str] = []

    def _warn(self, msg):
        self.warnings.append(msg)
        log.warning(msg)

    def run(self, text: str, path: Path | None = None, _depth: int = 0) -> str:
        text = strip_comments(text)
        text = _ATTR_RE.sub("", text)
        lines = text.split("\n")
        out: list[str] = []
        # stack of [emitting, branch_taken]
        stack: list[list[bool]] = []

        def emitting():
            return all(s[0] for s in stack)

        i = 0
        while i < len(lines):
            line = lines[i]
            stripped = line.strip()
            if stripped.startswith("`"):
                m = _DIRECTIVE_RE.match(stripped)
                name = m.group(1) if m else ""
                rest = stripped[m.end():].strip() if m else ""
                consumed = 1
                if name == "define":
                    while rest.endswith("\\") and i + consumed < len(lines):
                        rest = rest[:-1] + " " + lines[i + consumed].strip()
                        consumed += 1
                if name in ("ifdef", "ifndef"):
                    macro = rest.split()[0] if rest else ""
                    cond = (macro in self.defines) == (name == "ifdef")
                    stack.append([cond, cond])
                    self._warn(f"{path or '<text>'}:{i + 1}: conditional `{name} {macro}` resolved to {'taken' if cond else 'skipped'} branch")
                    out.append("")
                    i += 1
                    continue
                if name == "elsif":
                    if stack:
                        macro = rest.split()[0] if rest else ""
                        top = stack[-1]
                        cond = (not top[1]) and macro in self.defines
                        top[0] = cond
                        top[1] = top[1] or cond
                    out.append("")
                    i += 1
                    continue
                if name == "else":
                    if stack:
                        top = stack[-1]
                        top[0] = not top[1]
                        top[1] = True
                    out.append("")
                    i += 1
                    continue
                if name == "endif":
                    if stack:
                        stack.pop()
                    out.append("")
                    i += 1
                    continue
                if not emitting():
                    out.extend([""] * consumed)
                    i += consumed
                    continue
                if name == "define":
                    dm = re.match(r"([A-Za-z_]\w*)(\([^)]*\))?\s*(.*)", rest)
                    if dm:
                        if dm.group(2):
                            self._warn(f"{path or '<text>'}:{i + 1}: function-like macro `{dm.group(1)} not supported; expanded without arguments")
                        self.defines[dm.group(1)] = dm.group(3).strip()
                    out.extend([""] * consumed)
                    i += consumed
                    continue
                if name == "undef":
                    self.defines.pop(rest.split()[0] if rest else "", None)
                    out.append("")
                    i += 1
                    continue
                if name == "include":
                    fm = re.match(r'["<]([^">]+)[">]', rest)
                    if fm:
                        out.append(self._include(fm.group(1), path, _depth).replace("\n", " "))
                    else:
                        out.append("")
                    i += 1
                    continue
                if name in _IGNORED:
                    out.append("")
                    i += 1
                    continue
            if not emitting():
                out.append("")
            else:
                out.append(self._expand(line))
            i += 1
        if stack:
            self._warn(f"{path or '<text>'}: unterminated conditional block")
        return "\n".join(out)

    def _include(self, name: str, path: Path | None, depth: int) -> str:
        if depth > 16:
            self._warn(f"include depth exceeded at {name}")
            return ""
        candidates = []
        if path is not None:
            candidates.append(path.parent / name)
        candidates += [d / name for d in self.include_dirs]
        for c in candidates:
            if c.is_file():
                try:
                    return self.run(c.read_text(encoding="utf-8", errors="replace"), c, depth + 1)
                except OSError as exc:
                    self._warn(f"cannot read include {c}: {exc}")
                    return ""
        self._warn(f"include file {name!r} not found")
        return ""

    def _expand(self, line: str, depth: int = 0) -> str:
        if "`" not in line or depth > 16:
            return line

        def repl(m):
            name = m.group(1)
            if name in self.defines:
                return self.defines[name]
            if name in _IGNORED:
                return ""
            self._warn(f"undefined macro `{name}")
            return ""

        new = _DIRECTIVE_RE.sub(repl, line)
        return self._expand(new, depth + 1) if new != line else new
