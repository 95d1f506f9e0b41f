"""Command-line entry point: parse, analyze, doi, eval and fixtures.

Exit codes: 0 success, 1 completed with warnings (only under ``--strict``
or when fixture verification finds problems), 2 fatal error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .assets import AssetBundle
from .config import resolve_config
from .doi import doi_for_design
from .errors import HwAssetError
from .evaluator import MauInputs, compare, load_golden, mau, mau_table, metrics, render_report
from .llm.templates import Message, prompt_hash
from .rtl.dump import model_to_json
from .rtl.repo import load_design

log = logging.getLogger("hwasset")

EXIT_OK, EXIT_WARN, EXIT_FATAL = 0, 1, 2


def _write(text: str, out) -> None:
    if out in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")


def _dump(obj) -> str:
    return json.dumps(obj, indent=2) + "\n"


def _defines(pairs) -> dict:
    out = {}
    for p in pairs or ():
        name, _, value = p.partition("=")
        out[name] = value or "1"
    return out


# -- parse ------------------------------------------------------------------------


def cmd_parse(args) -> int:
    model = load_design(args.repo, _defines(args.define), args.include, jobs=args.jobs)
    doc = model_to_json(model)
    out = "-" if args.json else (args.out or "-")
    _write(_dump(doc), out)
    for w in model.warnings:
        log.warning("%s", w)
    print(f"{len(model)} modules, {model.element_count} elements", file=sys.stderr)
    return EXIT_WARN if args.strict and model.warnings else EXIT_OK


# -- analyze ---------------------------------------------------------------------

_ANALYZE_FLAGS = (
    "repo", "spec", "backend", "fixtures", "cwe", "out", "parallelism", "endpoint", "model", "embed_model",
    "script", "design", "embedder", "cache_dir", "chunk_size", "overlap", "top_k", "temperature",
    "max_retries", "rate_limit", "prices", "prompts_dir", "icl_dir",
)


def _config_from(args):
    flags = {k: getattr(args, k, None) for k in _ANALYZE_FLAGS}
    if getattr(args, "define", None):
        flags["defines"] = _defines(args.define)
    if getattr(args, "include", None):
        flags["include_dirs"] = args.include
    return resolve_config(flags, config_file=args.config)


def cmd_analyze(args) -> int:
    from .pipeline import run

    cfg = _config_from(args)
    if cfg.spec is None:
        log.info("no specification given; running on RTL only")
    bundle = run(cfg)
    _write(bundle.dumps(), cfg.out or "-")
    s = bundle.stats
    print(
        f"{s['analyzed']} modules analysed, {s['pruned']} pruned, {s['failed']} failed; "
        f"{s['primaries']} primary and {s['secondaries']} secondary assets",
        file=sys.stderr,
    )
    return EXIT_WARN if args.strict and s["failed"] else EXIT_OK


# -- doi -------------------------------------------------------------------------


def cmd_doi(args) -> int:
    model = load_design(args.repo, _defines(args.define), args.include)
    bundle = AssetBundle.load(args.bundle)
    records = doi_for_design(model, bundle.annotations())
    report = {"design": bundle.design, "records": [r.to_json() for r in records]}
    _write(_dump(report), args.out or "-")
    for r in records:
        print(f"{r.path}: {r.secondary} -> {r.primary} = {r.doi_percent}%", file=sys.stderr)
    return EXIT_OK


# -- eval ------------------------------------------------------------------------


def cmd_eval(args) -> int:
    report = {}
    text = ""
    counts = None
    if args.bundle:
        if not args.golden:
            raise HwAssetError("--bundle needs --golden")
        bundle = AssetBundle.load(args.bundle)
        predicted = [a for a in bundle.annotations() if args.module is None or a.structural_ref.module == args.module]
        counts = compare(predicted, load_golden(args.golden), args.elements)
        mets = metrics(counts)
        report.update(counts=counts.to_json(), metrics=mets)
    mau_value = None
    weights = tuple(args.weights) if args.weights else (0.6, 0.1, 0.3)
    if args.mau:
        r, t, c, tmax, cmax = args.mau
        mau_value = mau(MauInputs(r, t, c, tmax, cmax, *weights))
        report["mau"] = mau_value
    if args.mau_table:
        rows = json.loads(Path(args.mau_table).read_text(encoding="utf-8"))
        report["mau_table"] = mau_table(rows, weights)
    if not report:
        raise HwAssetError("nothing to evaluate: give --bundle/--golden, --mau or --mau-table")
    if counts is not None:
        text = render_report(counts, report["metrics"], mau_value)
    elif mau_value is not None:
        text = f"MAU: {mau_value:.4f}\n"
    for row in report.get("mau_table", ()):
        text += f"{row['model']:>20}: MAU {row['mau']:.4f}\n"
    _write(_dump(report), args.report or "-")
    sys.stderr.write(text)
    return EXIT_OK


# -- fixtures --------------------------------------------------------------------


def _fixture_files(directory):
    return sorted(p for p in Path(directory).glob("*.json") if not p.name.startswith("emb-"))


def cmd_fixtures(args) -> int:
    if args.action == "record":
        if args.backend not in (None, "record", "scripted"):
            raise HwAssetError("fixtures record uses the record or scripted backend")
        args.backend = args.backend or "record"
        return cmd_analyze(args)
    if args.action == "list":
        for p in _fixture_files(args.fixtures):
            d = json.loads(p.read_text(encoding="utf-8"))
            print(f"{p.stem[:16]}  {d.get('template_id', '?'):<18} {d.get('attempt', '?'):<8} {d.get('model', '')}")
        n = len(list(Path(args.fixtures).glob("emb-*.json")))
        if n:
            print(f"{n} embedding fixtures")
        return EXIT_OK
    bad = 0
    files = _fixture_files(args.fixtures)
    for p in files:
        try:
            d = json.loads(p.read_text(encoding="utf-8"))
            msgs = [Message(m["role"], m["content"]) for m in d["messages"]]
            h = prompt_hash(d["template_id"], msgs, d["model"])
        except (ValueError, KeyError, TypeError) as exc:
            print(f"{p.name}: unreadable ({exc})")
            bad += 1
            continue
        if h != p.stem or d.get("prompt_hash") != h:
            print(f"{p.name}: hash mismatch (computed {h})")
            bad += 1
    print(f"{len(files)} fixtures checked, {bad} problems", file=sys.stderr)
    return EXIT_WARN if bad else EXIT_OK


# -- wiring ----------------------------------------------------------------------


def _add_rtl_flags(p):
    p.add_argument("--repo", required=True, help="directory holding the HDL sources")
    p.add_argument("-D", "--define", action="append", metavar="NAME[=VALUE]", help="preprocessor define")
    p.add_argument("-I", "--include", action="append", metavar="DIR", help="include directory")


def _add_analyze_flags(p):
    p.add_argument("--repo", help="directory holding the HDL sources")
    p.add_argument("--spec", help="plain-text or Markdown specification")
    p.add_argument("--backend", choices=("http", "replay", "record", "scripted"))
    p.add_argument("--fixtures", help="replay/record fixture directory")
    p.add_argument("--script", help="rules file for the scripted backend")
    p.add_argument("--endpoint", help="OpenAI-compatible base URL")
    p.add_argument("--model")
    p.add_argument("--embed-model", dest="embed_model")
    p.add_argument("--embedder", choices=("auto", "hash", "backend"))
    p.add_argument("--cwe", help="CWE catalogue (MITRE CSV or JSON)")
    p.add_argument("--out", help="bundle output path (default stdout)")
    p.add_argument("--parallelism", type=int)
    p.add_argument("--design", help="design id recorded in the bundle")
    p.add_argument("--cache-dir", dest="cache_dir")
    p.add_argument("--chunk-size", dest="chunk_size", type=int)
    p.add_argument("--overlap", type=int)
    p.add_argument("--top-k", dest="top_k", type=int)
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-retries", dest="max_retries", type=int)
    p.add_argument("--rate-limit", dest="rate_limit", type=float, help="requests per minute")
    p.add_argument("--prices", help="JSON price table")
    p.add_argument("--prompts-dir", dest="prompts_dir", help="directory of prompt templates overriding the built-ins")
    p.add_argument("--icl-dir", dest="icl_dir", help="directory of few-shot examples overriding the built-ins")
    p.add_argument("--config", help="TOML or JSON config file")
    p.add_argument("-D", "--define", action="append", metavar="NAME[=VALUE]")
    p.add_argument("-I", "--include", action="append", metavar="DIR")
    p.add_argument("--strict", action="store_true", help="exit 1 when any module failed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hwasset", description="Security asset identification for RTL designs.")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("parse", help="parse a repository and dump the design model")
    _add_rtl_flags(p)
    p.add_argument("--json", action="store_true", help="write the model to stdout")
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--strict", action="store_true", help="exit 1 when the parser reported warnings")
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("analyze", help="run asset identification")
    _add_analyze_flags(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("doi", help="degree of influence of secondaries on primaries")
    _add_rtl_flags(p)
    p.add_argument("--bundle", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_doi)

    p = sub.add_parser("eval", help="score a bundle against a golden list")
    p.add_argument("--bundle")
    p.add_argument("--golden")
    p.add_argument("--module", help="restrict predictions to one module")
    p.add_argument("--elements", type=int, help="design element count (enables accuracy)")
    p.add_argument("--report", help="JSON report path (default stdout)")
    p.add_argument("--mau", nargs=5, type=float, metavar=("R", "T", "C", "TMAX", "CMAX"))
    p.add_argument("--mau-table", dest="mau_table", help="JSON list of {model, recall, time, cost}")
    p.add_argument("--weights", nargs=3, type=float, metavar=("ALPHA", "BETA", "GAMMA"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("fixtures", help="record, list or verify replay fixtures")
    fsub = p.add_subparsers(dest="action", required=True)
    rec = fsub.add_parser("record", help="run analyze while storing every exchange")
    _add_analyze_flags(rec)
    for name in ("list", "verify"):
        q = fsub.add_parser(name)
        q.add_argument("--fixtures", required=True)
    p.set_defaults(func=cmd_fixtures)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = logging.WARNING - 10 * min(args.verbose, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except HwAssetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FATAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
