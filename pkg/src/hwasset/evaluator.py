"""Scoring predicted assets against golden lists, plus the utility score."""

from __future__ import annotations

import csv
import io
import json
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .assets import StructuralRef
from .config import check_weights
from .errors import ParameterError

log = logging.getLogger(__name__)

DEFAULT_WEIGHTS = (0.6, 0.1, 0.3)
_NON_ALNUM = re.compile(r"[^0-9a-z]+")


def normalize(name: str) -> str:
    return _NON_ALNUM.sub("", name.casefold())


def key_of(module: str, name: str) -> tuple[str, str]:
    return (normalize(module), normalize(name))


@dataclass(frozen=True)
class GoldenEntry:
    module: str
    name: str
    classification: Optional[str] = None


@dataclass(frozen=True)
class EvalCounts:
    tp: int
    fn: int
    fp: int
    tn: Optional[int] = None
    golden_size: int = 0
    predicted_size: int = 0
    element_count: Optional[int] = None

    def __post_init__(self):
        if min(self.tp, self.fn, self.fp) < 0 or (self.tn is not None and self.tn < 0):
            raise ParameterError(f"confusion counts must be non-negative: {self}")

    def to_json(self):
        return {
            "tp": self.tp, "fn": self.fn, "fp": self.fp, "tn": self.tn,
            "golden_size": self.golden_size, "predicted_size": self.predicted_size,
            "element_count": self.element_count,
        }


def _dedupe(keys: Iterable[tuple], what: str) -> set:
    out = set()
    for k in keys:
        if k in out:
            log.warning("duplicate %s entry %s/%s ignored", what, *k)
        out.add(k)
    return out


def predicted_keys(annotations) -> list[tuple[str, str]]:
    """One key per structural element; concatenated refs count each member."""
    keys = []
    for a in annotations:
        ref = a.structural_ref
        keys.extend(key_of(ref.module, n) for n in ref.members)
    return keys


def compare(predicted, golden, element_count: Optional[int] = None) -> EvalCounts:
    """``predicted`` and ``golden`` are either annotations or (module, name) pairs.

    Predicted duplicates (the same element reached under two primaries) are
    collapsed silently; golden duplicates are collapsed with a warning.
    """
    pred = set(_as_keys(predicted))
    gold = _dedupe(_as_keys(golden, golden=True), "golden")
    tp = len(pred & gold)
    fn = len(gold - pred)
    fp = len(pred - gold)
    tn = None
    if element_count is not None:
        tn = element_count - (tp + fn + fp)
        if tn < 0:
            log.warning("element count %d is smaller than the labelled set; tn clamped to 0", element_count)
            tn = 0
    return EvalCounts(tp, fn, fp, tn, len(gold), len(pred), element_count)


def _as_keys(items, golden=False):
    items = list(items)
    if items and hasattr(items[0], "structural_ref"):
        return predicted_keys(items)
    out = []
    for it in items:
        if isinstance(it, GoldenEntry):
            module, name = it.module, it.name
        elif isinstance(it, StructuralRef):
            module, name = it.module, it.name
        else:
            module, name = it[0], it[1]
        if golden:
            out.append(key_of(module, name))
        else:
            out.extend(key_of(module, n) for n in StructuralRef(module, name).members)
    return out


def _ratio(num, den) -> Optional[float]:
    return num / den if den else None


def metrics(counts: EvalCounts) -> dict:
    """Recall, precision and (when tn is known) accuracy; absent when undefined."""
    out = {
        "recall": _ratio(counts.tp, counts.tp + counts.fn),
        "precision": _ratio(counts.tp, counts.tp + counts.fp),
    }
    if counts.tn is not None:
        out["accuracy"] = _ratio(counts.tp + counts.tn, counts.tp + counts.tn + counts.fp + counts.fn)
    return {k: v for k, v in out.items() if v is not None}


@dataclass(frozen=True)
class MauInputs:
    recall_percent: float
    time: float
    cost: float
    t_max: float
    c_max: float
    alpha: float = DEFAULT_WEIGHTS[0]
    beta: float = DEFAULT_WEIGHTS[1]
    gamma: float = DEFAULT_WEIGHTS[2]

    def __post_init__(self):
        check_weights(self.alpha, self.beta, self.gamma)
        if not 0 <= self.recall_percent <= 100:
            raise ParameterError("recall must be a percentage in [0, 100]")
        if self.time <= 0 or self.cost < 0:
            raise ParameterError("time must be positive and cost non-negative")
        if self.t_max <= 0 or self.c_max <= 0:
            raise ParameterError("t_max and c_max must be positive")


def mau(inp: MauInputs) -> float:
    """Weighted recall deficit plus normalised time and cost; lower is better."""
    return (
        inp.alpha * (100.0 - inp.recall_percent) / 100.0
        + inp.beta * inp.time / inp.t_max
        + inp.gamma * inp.cost / inp.c_max
    )


def mau_table(rows, weights=DEFAULT_WEIGHTS) -> list[dict]:
    """Score several models; maxima are taken over the rows themselves.

    Each row is a mapping with ``model``, ``recall``, ``time`` and ``cost``.
    """
    rows = list(rows)
    if not rows:
        return []
    t_max = max(float(r["time"]) for r in rows)
    c_max = max(float(r["cost"]) for r in rows)
    out = []
    for r in rows:
        inp = MauInputs(float(r["recall"]), float(r["time"]), float(r["cost"]), t_max, c_max, *weights)
        out.append({"model": r.get("model", ""), "mau": mau(inp)})
    return out


# -- golden files ---------------------------------------------------------------


def load_golden(path) -> list[GoldenEntry]:
    """JSON list (or {"assets": [...]}) or CSV with module,name[,classification]."""
    path = Path(path)
    text = path.read_text(encoding="utf-8-sig")
    if path.suffix.lower() == ".json" or text.lstrip()[:1] in "[{":
        data = json.loads(text)
        rows = data.get("assets", data.get("golden", [])) if isinstance(data, dict) else data
    else:
        rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for n, r in enumerate(rows):
        try:
            out.append(GoldenEntry(str(r["module"]).strip(), str(r["name"]).strip(), (r.get("classification") or None)))
        except (KeyError, TypeError) as exc:
            raise ParameterError(f"{path}: golden entry {n} needs module and name ({exc})") from exc
    return out


def render_report(counts: EvalCounts, mets: dict, mau_value: Optional[float] = None) -> str:
    lines = [
        f"{'golden':>10} {'predicted':>10} {'TP':>5} {'FN':>5} {'FP':>5} {'TN':>6}",
        f"{counts.golden_size:>10} {counts.predicted_size:>10} {counts.tp:>5} {counts.fn:>5} {counts.fp:>5} "
        f"{'-' if counts.tn is None else counts.tn:>6}",
    ]
    for k in ("recall", "precision", "accuracy"):
        lines.append(f"{k:>10}: " + (f"{100 * mets[k]:.2f}%" if k in mets else "n/a"))
    if mau_value is not None:
        lines.append(f"{'MAU':>10}: {mau_value:.4f}")
    return "\n".join(lines) + "\n"
