"""Acceptance criteria, one test each.

Every test prints a single PASS/FAIL line (also repeated in the terminal
summary) stating what was measured against which tolerance.
"""

import json
import random
import socket
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE, FIXTURES, ROOT
from hwasset.assets import Objective
from hwasset.config import RunConfig
from hwasset.doi import InfluenceGraph, doi_for_design
from hwasset.assets import AssetBundle
from hwasset.evaluator import EvalCounts, MauInputs, compare, mau, metrics
from hwasset.pipeline import run
from hwasset.rtl import load_design
from hwasset.spec_rag import HashEmbedder, build_index, chunk_text, retrieve
from oracles.wiring import generate, toggle_reference

REPLAY_FIXTURES = {"aes128": "aes128/spec.md", "fpu": None, "neorv32": None, "simple_gpio": None, "rc4": None,
                   "sha3": "sha3/spec.md"}


def report(capsys, number, ok, text):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {text}"
    ACCEPTANCE.append(line)
    with capsys.disabled():
        print("\n" + line)


def replay_cfg(name):
    spec = REPLAY_FIXTURES[name]
    return RunConfig(
        repo=f"fixtures/{name}/rtl",
        spec=f"fixtures/{spec}" if spec else None,
        backend="replay",
        fixtures=f"fixtures/{name}/replay",
        cwe="fixtures/cwe/hw_view.csv",
        design=name,
    ).validate()


@pytest.fixture
def at_root(monkeypatch):
    monkeypatch.chdir(ROOT)


@pytest.fixture
def no_network(monkeypatch):
    calls = []

    def refuse(self, *a, **k):
        calls.append(a)
        raise OSError("network disabled during acceptance run")

    monkeypatch.setattr(socket.socket, "connect", refuse)
    monkeypatch.setattr(socket.socket, "connect_ex", refuse)
    return calls


# 1 ------------------------------------------------------------------------------------


def test_criterion_1_doi_exactness(capsys):
    t0 = time.perf_counter()
    model = load_design(FIXTURES / "fpu" / "rtl")
    bundle = AssetBundle.load(FIXTURES / "fpu" / "expected_bundle.json")
    records = doi_for_design(model, bundle.annotations())
    elapsed = time.perf_counter() - t0
    got = [r.doi_percent for r in records]
    ok = got == ["25.00"] and records[0].doi == Fraction(25) and elapsed < 1.0
    report(capsys, 1, ok, f"FPU DoI {got} (want ['25.00'] exactly), runtime {elapsed:.3f}s (< 1 s)")
    assert ok


# 2 ------------------------------------------------------------------------------------


def test_criterion_2_doi_oracle_equivalence(capsys, tmp_path):
    t0 = time.perf_counter()
    n, agree = 120, 0
    for seed in range(n):
        src, top = generate(seed)
        d = tmp_path / f"w{seed}"
        d.mkdir()
        (d / "w.v").write_text(src)
        g = InfluenceGraph(load_design(d))
        outs = [("s", o.name, b) for o in top.outputs for b in range(o.width)]
        same = True
        for (name, bit), expected in toggle_reference(top, seed).items():
            got, _ = g.reach(top.name, [("s", name, bit)], outs)
            same &= {(k[1], k[2]) for k in got} == expected
        agree += same
    elapsed = time.perf_counter() - t0
    ok = agree == n and elapsed < 30
    report(capsys, 2, ok, f"{agree}/{n} random wiring fixtures match toggle simulation (want 100%), "
                          f"runtime {elapsed:.2f}s (< 30 s)")
    assert ok


# 3 ------------------------------------------------------------------------------------


def test_criterion_3_mau(capsys):
    examples = [
        (MauInputs(100, 8.0, 3.0, 8.0, 3.0), 0.4),
        (MauInputs(0, 8.0, 3.0, 8.0, 3.0, 0.2, 0.5, 0.3), 1.0),
        (MauInputs(90, 4.0, 0.6, 8.0, 3.0), 0.17),
    ]
    worst = max(abs(mau(i) - want) for i, want in examples)
    rng = random.Random(3)
    violations = 0
    for _ in range(1000):
        a = rng.random()
        b = rng.random() * (1 - a)
        w = (a, b, 1 - a - b)
        t_max, c_max = rng.uniform(0.1, 500), rng.uniform(0.01, 50)
        r, t, c = rng.uniform(0, 100), rng.uniform(1e-3, 1) * t_max, rng.uniform(0, 1) * c_max
        base = mau(MauInputs(r, t, c, t_max, c_max, *w))
        worse = [
            MauInputs(rng.uniform(0, r), t, c, t_max, c_max, *w),
            MauInputs(r, rng.uniform(t, t_max), c, t_max, c_max, *w),
            MauInputs(r, t, rng.uniform(c, c_max), t_max, c_max, *w),
        ]
        violations += any(mau(x) < base - 1e-12 for x in worse)
    ok = worst <= 1e-9 and violations == 0
    report(capsys, 3, ok, f"max |MAU - expected| on 3 examples = {worst:.2e} (<= 1e-9); "
                          f"monotonicity violations {violations}/1000 (want 0)")
    assert ok


# 4 ------------------------------------------------------------------------------------


def test_criterion_4_chunker_and_retrieval(capsys):
    rng = random.Random(4)
    alphabet = "abcdefghij klmnop\nqrstuv.,"
    bad_chunks = 0
    for _ in range(1000):
        text = "".join(rng.choices(alphabet, k=rng.randint(0, 10_000)))
        chunks = chunk_text(text, 1000, 200)
        ok = "".join(c.core for c in chunks) == text
        ok &= all(c.start_offset == i * 800 and c.text == text[c.start_offset:c.end_offset]
                  and len(c.text) <= 1000 for i, c in enumerate(chunks))
        ok &= all(a.end_offset - b.start_offset == 200 for a, b in zip(chunks, chunks[1:]))
        ok &= not chunks or chunks[-1].end_offset == len(text)
        bad_chunks += not ok

    words = "key round state cipher debug lock fuse bus clock reset entropy trng uart".split()
    bad_retrieval = 0
    emb = HashEmbedder(dim=32)
    for _ in range(50):
        # small vocabulary so that duplicate chunks (exact ties) occur
        text = " ".join(rng.choices(words[:4], k=rng.randint(200, 2000)))
        idx = build_index(chunk_text(text, 60, 10), emb)
        query = " ".join(rng.choices(words, k=3))
        hits = retrieve(query, idx, k=20)
        q = np.asarray(emb.embed([query])[0])
        def score(c):
            v = idx.vectors[c.index]
            d = np.linalg.norm(v) * np.linalg.norm(q)
            return float(v @ q / d) if d else 0.0
        keys = [(-score(c), c.index) for c in hits]
        bad_retrieval += not (len(hits) <= 20 and len(hits) == min(20, len(idx.chunks)) and keys == sorted(keys))
    ok = bad_chunks == 0 and bad_retrieval == 0
    report(capsys, 4, ok, f"chunk invariants broken on {bad_chunks}/1000 texts (size 1000, overlap 200); "
                          f"retrieval ordering broken on {bad_retrieval}/50 queries (k=20, ties by index)")
    assert ok


# 5 ------------------------------------------------------------------------------------


def test_criterion_5_table_arithmetic(capsys):
    table = json.loads((FIXTURES / "ip_summary.json").read_text())
    broken = []
    totals = {"spec+rtl": np.zeros(5, int), "rtl": np.zeros(5, int)}
    golden_total = 0
    for row in table["rows"]:
        golden_total += row["golden"]
        for config in ("spec+rtl", "rtl"):
            c = row[config]
            # feed a synthetic prediction with the row's Ref size and TP overlap through compare()
            gold = [("ip", f"g{i}") for i in range(row["golden"])]
            pred = gold[: c["tp"]] + [("ip", f"x{i}") for i in range(c["ref"] - c["tp"])]
            got = compare(pred, gold)
            if (got.fn, got.fp) != (c["fn"], c["fp"]):
                broken.append(f"{row['ip']}/{config}: Ref {c['ref']} vs TP+FP {c['tp'] + c['fp']}, "
                              f"Golden {row['golden']} vs TP+FN {c['tp'] + c['fn']}")
            totals[config] += [c["init"], c["ref"], c["tp"], c["fn"], c["fp"]]
    want = {"spec+rtl": [177, 157, 121, 12, 35], "rtl": [163, 150, 112, 21, 37]}
    totals_ok = all(totals[k].tolist() == want[k] for k in want) and golden_total == 133
    recall = metrics(EvalCounts(121, 12, 35))["recall"]
    recall_gap = abs(recall - 0.90977)
    recall_ok = recall == 121 / 133 and recall_gap <= 1e-6

    for cell in json.loads((FIXTURES / "confusion_cells.json").read_text())["cells"]:
        m = metrics(EvalCounts(cell["tp"], cell["fn"], cell["fp"], cell["tn"]))
        for k, printed in cell["printed"].items():
            msg = (f"note: published confusion table, {cell['level']} {cell['input']} prints {k} {100 * printed:.2f}% "
                   f"but its cells give {100 * m[k]:.2f}%")
            ACCEPTANCE.append(msg)
            with capsys.disabled():
                print("\n" + msg)

    ok = not broken and totals_ok and recall_ok
    detail = (f"{28 - len(broken)}/28 row-pairs satisfy Ref = TP+FP and Golden = TP+FN; "
              f"totals {'match' if totals_ok else 'differ'}; recall 121/133 = {recall:.7f}, "
              f"|recall - 0.90977| = {recall_gap:.1e} (tolerance 1e-6)")
    if broken:
        detail += "; inconsistent rows: " + "; ".join(broken)
    report(capsys, 5, ok, detail)
    assert ok, detail


# 6 ------------------------------------------------------------------------------------

AES_ASSET_ROWS = {
    "key": ({Objective.CONFIDENTIALITY}, {("expand_key_128", "out_1"), ("expand_key_128", "out_2"),
                                          ("one_round", "key"), ("final_round", "key"), ("aes_128", "out")}),
    "out": ({Objective.AVAILABILITY}, {("one_round", "state_out"), ("final_round", "state_out"),
                                       ("aes_128", "state")}),
    "state": ({Objective.CONFIDENTIALITY}, {("one_round", "state_in"), ("final_round", "state_in"),
                                            ("aes_128", "state"), ("table_lookup", "state"),
                                            ("table_lookup", "{p0,p1,p2,p3}")}),
}


def test_criterion_6_end_to_end_determinism(capsys, at_root, no_network):
    t0 = time.perf_counter()
    first = run(replay_cfg("aes128"))
    second = run(replay_cfg("aes128"))
    elapsed = time.perf_counter() - t0
    identical = first.dumps() == second.dumps()
    prim = {a.structural_ref.name: a for a in first.primaries()}
    rows_ok = set(prim) == set(AES_ASSET_ROWS) and len(first.secondaries()) == 13
    for name, (objs, secs) in AES_ASSET_ROWS.items():
        if name not in prim:
            continue
        got = {(s.structural_ref.module, s.structural_ref.name)
               for s in first.secondaries() if s.parent_id == prim[name].asset_id}
        rows_ok &= set(prim[name].objectives) == objs and got == secs
    key_ok = "key" in prim and {1300, 1191, 1239, 1258} <= set(prim["key"].cwe_ids)
    ok = rows_ok and key_ok and identical and elapsed < 10 and not no_network
    report(capsys, 6, ok, f"AES-128 replay: {len(prim)} primaries / {len(first.secondaries())} secondaries "
                          f"(want 3/13, objectives matching), key CWEs {sorted(prim['key'].cwe_ids) if 'key' in prim else []}"
                          f" (superset of 1191,1239,1258,1300), byte-identical reruns {identical}, "
                          f"network calls {len(no_network)}, runtime {elapsed:.2f}s for two runs (< 10 s each)")
    assert ok


# 7 ------------------------------------------------------------------------------------


def test_criterion_7_pipeline_monotonicity(capsys, at_root, no_network):
    problems = []
    for name in REPLAY_FIXTURES:
        bundle = run(replay_cfg(name))
        for m in bundle.modules:
            s = m.stats
            if m.error:
                problems.append(f"{name}/{m.name} failed: {m.error}")
            if not s["initial"] >= s["attack"] >= s["cwe"] >= s["final"]:
                problems.append(f"{name}/{m.name} counts {s['initial']},{s['attack']},{s['cwe']},{s['final']}")
            for a in m.assets:
                if a.is_primary and not (a.attack_scenarios and a.cwe_ids):
                    problems.append(f"{name}/{a.asset_id} lacks attacks or CWEs")
    ok = not problems
    report(capsys, 7, ok, f"{len(REPLAY_FIXTURES)} replay fixtures: stage counts non-increasing and every final "
                          f"primary has attacks and CWEs ({len(problems)} problems)")
    assert ok, problems


# 8 ------------------------------------------------------------------------------------


def test_criterion_8_parser_element_counts(capsys):
    got = {name: load_design(FIXTURES / name / "rtl").element_count for name in ("simple_gpio", "rc4")}
    ok = got == {"simple_gpio": 17, "rc4": 12}
    report(capsys, 8, ok, f"element counts (ports + internal signals) {got} (want simple_gpio 17, rc4 12)")
    assert ok
