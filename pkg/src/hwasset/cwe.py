"""MITRE CWE catalogue: loading and per-objective views."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path

from .assets import Objective
from .errors import CweLoadError

log = logging.getLogger(__name__)

DEFAULT_DESCRIPTION_BUDGET = 600

_FIELD_RE = re.compile(r"(SCOPE|IMPACT|NOTE|LIKELIHOOD):")


@dataclass(frozen=True)
class Consequence:
    scopes: tuple
    impacts: tuple

    def line(self) -> str:
        return f"Scope: {', '.join(self.scopes) or '-'}; Impact: {', '.join(self.impacts) or '-'}"


@dataclass(frozen=True)
class CweEntry:
    id: int
    name: str
    description: str
    objectives: frozenset
    consequences: tuple = ()

    def to_json(self):
        return {
            "id": self.id,
            "name": self.name,
            "description": self.description,
            "objectives": sorted(o.value for o in self.objectives),
            "consequences": [{"scopes": list(c.scopes), "impacts": list(c.impacts)} for c in self.consequences],
        }

    def catalog_line(self) -> str:
        return f"CWE-{self.id}: {self.name}. {self.description}"


def parse_consequences(text: str) -> tuple:
    """Parse MITRE's ``::SCOPE:x:IMPACT:y:NOTE:z::`` consequence encoding."""
    out = []
    for block in (text or "").split("::"):
        block = block.strip()
        if not block:
            continue
        parts = _FIELD_RE.split(block)
        scopes, impacts = [], []
        # parts = [prefix, key, value, key, value, ...]
        for key, value in zip(parts[1::2], parts[2::2]):
            value = value.strip().strip(":").strip()
            if key == "SCOPE" and value:
                scopes.append(value)
            elif key == "IMPACT" and value:
                impacts.append(value)
        if scopes or impacts:
            out.append(Consequence(tuple(scopes), tuple(impacts)))
    return tuple(out)


def objectives_from(consequences) -> frozenset:
    """C from Confidentiality or Read-*, I from Integrity or Modify-*, A from Availability or DoS-*."""
    objs = set()
    for c in consequences:
        for s in c.scopes:
            if s == "Confidentiality":
                objs.add(Objective.CONFIDENTIALITY)
            elif s == "Integrity":
                objs.add(Objective.INTEGRITY)
            elif s == "Availability":
                objs.add(Objective.AVAILABILITY)
        for i in c.impacts:
            if i.startswith("Read"):
                objs.add(Objective.CONFIDENTIALITY)
            elif i.startswith("Modify"):
                objs.add(Objective.INTEGRITY)
            elif i.startswith("DoS"):
                objs.add(Objective.AVAILABILITY)
    return frozenset(objs)


def description_extract(description: str, consequences, budget: int = DEFAULT_DESCRIPTION_BUDGET) -> str:
    first = re.split(r"\n\s*\n", (description or "").strip(), maxsplit=1)[0]
    first = " ".join(first.split())
    lines = [first] + [c.line() for c in consequences]
    text = " ".join(x for x in lines if x)
    if len(text) > budget:
        text = text[: max(0, budget - 3)].rstrip() + "..."
    return text


class CweDatabase:
    def __init__(self, entries, source: str = ""):
        self.entries = {e.id: e for e in entries}
        self.source = source

    def __len__(self):
        return len(self.entries)

    def __contains__(self, cwe_id):
        return cwe_id in self.entries

    def __iter__(self):
        return iter(sorted(self.entries.values(), key=lambda e: e.id))

    def get(self, cwe_id):
        return self.entries.get(cwe_id)

    def ids(self) -> set:
        return set(self.entries)

    def to_json(self):
        return {"source": self.source, "entries": [e.to_json() for e in self]}

    def save_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_json(), indent=1) + "\n", encoding="utf-8")


def view_by_objective(db: CweDatabase, objective: Objective) -> list[CweEntry]:
    objective = Objective(objective)
    return [e for e in db if objective in e.objectives]


def _parse_id(raw) -> int:
    s = str(raw).strip()
    if s.upper().startswith("CWE-"):
        s = s[4:]
    v = int(s)
    if v <= 0:
        raise ValueError("CWE id must be positive")
    return v


def _add(entries, seen, entry, where):
    if entry.id in seen:
        log.warning("%s: duplicate CWE-%d ignored (first occurrence kept)", where, entry.id)
        return
    seen.add(entry.id)
    entries.append(entry)


def _load_csv(text: str, where: str, budget: int) -> list[CweEntry]:
    reader = csv.DictReader(io.StringIO(text))
    if not reader.fieldnames or "CWE-ID" not in [f.strip() for f in reader.fieldnames]:
        raise CweLoadError(f"{where}: not a MITRE CWE CSV export (no CWE-ID column)")
    entries, seen = [], set()
    for lineno, row in enumerate(reader, start=2):
        row = {(k or "").strip(): v for k, v in row.items()}
        try:
            cid = _parse_id(row.get("CWE-ID"))
            name = (row.get("Name") or "").strip()
            if not name:
                raise ValueError("missing name")
        except (TypeError, ValueError) as exc:
            log.warning("%s:%d: malformed CWE row skipped (%s)", where, lineno, exc)
            continue
        cons = parse_consequences(row.get("Common Consequences", ""))
        desc = description_extract(row.get("Description", ""), cons, budget)
        _add(entries, seen, CweEntry(cid, name, desc, objectives_from(cons), cons), f"{where}:{lineno}")
    return entries


def _load_json(text: str, where: str, budget: int) -> list[CweEntry]:
    data = json.loads(text)
    rows = data.get("entries", data) if isinstance(data, dict) else data
    entries, seen = [], set()
    for n, row in enumerate(rows):
        try:
            cid = _parse_id(row["id"])
            cons = tuple(Consequence(tuple(c.get("scopes", ())), tuple(c.get("impacts", ()))) for c in row.get("consequences", ()))
            objs = frozenset(Objective(o) for o in row.get("objectives", ())) or objectives_from(cons)
            desc = row.get("description", "")
            if len(desc) > budget:
                desc = desc[: max(0, budget - 3)].rstrip() + "..."
            entry = CweEntry(cid, row["name"], desc, objs, cons)
        except (KeyError, TypeError, ValueError) as exc:
            log.warning("%s: entry %d malformed, skipped (%s)", where, n, exc)
            continue
        _add(entries, seen, entry, where)
    return entries


def load_cwe(path, description_budget: int = DEFAULT_DESCRIPTION_BUDGET) -> CweDatabase:
    """Load a MITRE CSV export or the normalised JSON form."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise CweLoadError(f"cannot read CWE catalogue {path}: {exc}") from exc
    if not text.strip():
        raise CweLoadError(f"CWE catalogue {path} is empty")
    try:
        if path.suffix.lower() == ".json" or text.lstrip()[:1] in "[{":
            entries = _load_json(text, str(path), description_budget)
        else:
            entries = _load_csv(text, str(path), description_budget)
    except ValueError as exc:
        raise CweLoadError(f"{path}: {exc}") from exc
    if not entries:
        raise CweLoadError(f"CWE catalogue {path} has no usable entries")
    return CweDatabase(entries, source=path.name)
