import json
import logging

import pytest
from hypothesis import given, settings, strategies as st

from hwasset.assets import AssetBundle
from hwasset.errors import ParameterError
from hwasset.evaluator import (
    EvalCounts,
    GoldenEntry,
    MauInputs,
    compare,
    load_golden,
    mau,
    mau_table,
    metrics,
    normalize,
    render_report,
)


def synth(golden, ref, tp):
    """Golden and predicted name lists with exactly ``tp`` shared entries."""
    gold = [("ip", f"g{i}") for i in range(golden)]
    pred = gold[:tp] + [("ip", f"x{i}") for i in range(ref - tp)]
    return pred, gold


@pytest.fixture(scope="module")
def ip_summary():
    from conftest import FIXTURES

    return json.loads((FIXTURES / "ip_summary.json").read_text())


def _row(ip_summary, ip):
    return next(r for r in ip_summary["rows"] if r["ip"] == ip)


# -- compare ----------------------------------------------------------------------------


@pytest.mark.parametrize("ip,expect", [("sha3", (7, 0, 5)), ("keymgr", (37, 5, 7))])
def test_spec_rtl_rows_from_synthetic_lists(ip_summary, ip, expect):
    r = _row(ip_summary, ip)
    c = r["spec+rtl"]
    pred, gold = synth(r["golden"], c["ref"], c["tp"])
    got = compare(pred, gold)
    assert (got.tp, got.fn, got.fp) == expect == (c["tp"], c["fn"], c["fp"])


def test_perfect_prediction():
    gold = [("m", "a"), ("m", "b"), ("n", "a")]
    c = compare(gold, gold)
    assert (c.tp, c.fn, c.fp) == (3, 0, 0)


def test_names_are_normalized():
    c = compare([("AES_128", "Key-Reg")], [GoldenEntry("aes128", "keyreg")])
    assert c.tp == 1


def test_golden_duplicates_warn(caplog):
    with caplog.at_level(logging.WARNING):
        c = compare([("m", "a")], [("m", "a"), ("M", "A"), ("m", "b")])
    assert c.golden_size == 2 and (c.tp, c.fn) == (1, 1)
    assert any("duplicate golden" in r.message for r in caplog.records)


def test_concatenated_refs_count_each_member():
    bundle_like = [("table_lookup", "{p0,p1,p2,p3}")]
    c = compare(bundle_like, [("table_lookup", "p0"), ("table_lookup", "p3")])
    assert (c.tp, c.fn, c.fp) == (2, 0, 2)


def test_tn_from_element_count():
    c = compare([("m", "a"), ("m", "x")], [("m", "a"), ("m", "b")], element_count=10)
    assert (c.tp, c.fn, c.fp, c.tn) == (1, 1, 1, 7)


def test_tn_clamped_when_count_too_small(caplog):
    with caplog.at_level(logging.WARNING):
        c = compare([("m", "a"), ("m", "x")], [("m", "b")], element_count=1)
    assert c.tn == 0 and any("clamped" in r.message for r in caplog.records)


def test_negative_counts_rejected():
    with pytest.raises(ParameterError):
        EvalCounts(-1, 0, 0)


names = st.lists(st.tuples(st.sampled_from(["m", "n"]), st.text("abcXY_", min_size=1, max_size=3)), max_size=15)


@given(a=names, b=names)
def test_swapping_sides_swaps_fn_and_fp(a, b):
    x, y = compare(a, b), compare(b, a)
    assert x.tp == y.tp and x.fn == y.fp and x.fp == y.fn


@given(a=names, b=names)
def test_count_identities(a, b):
    c = compare(a, b)
    assert c.tp + c.fn == c.golden_size and c.tp + c.fp == c.predicted_size


def test_gpio_bundle_against_golden(fixtures_dir):
    bundle = AssetBundle.load(fixtures_dir / "simple_gpio" / "expected_bundle.json")
    c = compare(bundle.annotations(), load_golden(fixtures_dir / "simple_gpio" / "golden.json"))
    assert (c.tp, c.fn, c.fp) == (2, 0, 2)


# -- metrics ----------------------------------------------------------------------------


def test_recall_from_table_totals(ip_summary):
    t = ip_summary["printed_totals"]["spec+rtl"]
    m = metrics(EvalCounts(t["tp"], t["fn"], t["fp"]))
    assert m["recall"] == pytest.approx(121 / 133, abs=1e-12)


def test_empty_golden_recall_absent():
    m = metrics(EvalCounts(0, 0, 3))
    assert "recall" not in m and m["precision"] == 0.0
    assert metrics(EvalCounts(0, 0, 0)) == {}


def test_soc_accuracy_from_cells(fixtures_dir):
    cell = json.loads((fixtures_dir / "confusion_cells.json").read_text())["cells"][0]
    m = metrics(EvalCounts(cell["tp"], cell["fn"], cell["fp"], cell["tn"]))
    assert m["accuracy"] == pytest.approx(1301 / 1390, abs=1e-12)
    assert round(100 * m["accuracy"], 2) == 93.60


def test_accuracy_only_with_tn():
    assert "accuracy" not in metrics(EvalCounts(1, 1, 1))


def test_report_rendering():
    c = EvalCounts(7, 0, 5, golden_size=7, predicted_size=12)
    text = render_report(c, metrics(c), 0.17)
    assert "100.00%" in text and "n/a" in text and "0.1700" in text


# -- MAU --------------------------------------------------------------------------------


def test_mau_perfect_recall_at_maxima():
    assert mau(MauInputs(100, 5, 2, 5, 2)) == pytest.approx(0.4, abs=1e-9)


@pytest.mark.parametrize("w", [(0.6, 0.1, 0.3), (1.0, 0.0, 0.0), (0.2, 0.5, 0.3), (0.0, 0.0, 1.0)])
def test_mau_worst_case_is_one(w):
    assert mau(MauInputs(0, 7, 3, 7, 3, *w)) == pytest.approx(1.0, abs=1e-9)


def test_mau_mixed_example():
    assert mau(MauInputs(90, 50, 0.2, 100, 1.0)) == pytest.approx(0.17, abs=1e-9)


@pytest.mark.parametrize("w", [(0.5, 0.1, 0.3), (0.7, 0.1, 0.3), (-0.1, 0.8, 0.3)])
def test_bad_weights_rejected(w):
    with pytest.raises(ParameterError):
        MauInputs(50, 1, 1, 1, 1, *w)


@pytest.mark.parametrize("args", [(101, 1, 1, 1, 1), (-1, 1, 1, 1, 1), (50, 0, 1, 1, 1), (50, 1, -1, 1, 1),
                                  (50, 1, 1, 0, 1)])
def test_bad_inputs_rejected(args):
    with pytest.raises(ParameterError):
        MauInputs(*args)


weights = st.tuples(st.floats(0, 1), st.floats(0, 1)).filter(lambda t: t[0] + t[1] <= 1).map(
    lambda t: (t[0], t[1], 1.0 - t[0] - t[1]))


@st.composite
def mau_pairs(draw):
    a, b, g = draw(weights)
    t_max = draw(st.floats(0.01, 1e4))
    c_max = draw(st.floats(0.01, 1e4))
    r = draw(st.floats(0, 100))
    t = draw(st.floats(1e-3, 1).map(lambda f: f * t_max))
    c = draw(st.floats(0, 1).map(lambda f: f * c_max))
    return (r, t, c, t_max, c_max, a, b, g), draw(st.floats(0, 1))


@settings(max_examples=1000)
@given(pair=mau_pairs())
def test_mau_monotone(pair):
    (r, t, c, t_max, c_max, a, b, g), f = pair
    try:
        base = MauInputs(r, t, c, t_max, c_max, a, b, g)
    except ParameterError:
        return  # weights off by rounding
    score = mau(base)
    eps = 1e-12
    assert 0 - eps <= score <= 1 + eps
    assert mau(MauInputs(r * f, t, c, t_max, c_max, a, b, g)) >= score - eps
    assert mau(MauInputs(r, t + (t_max - t) * f, c, t_max, c_max, a, b, g)) >= score - eps
    assert mau(MauInputs(r, t, c + (c_max - c) * f, t_max, c_max, a, b, g)) >= score - eps


def test_mau_table_uses_row_maxima():
    rows = [{"model": "a", "recall": 100, "time": 10, "cost": 1}, {"model": "b", "recall": 90, "time": 5, "cost": 0.2}]
    out = mau_table(rows)
    assert out[0]["mau"] == pytest.approx(0.4) and out[1]["mau"] == pytest.approx(0.06 + 0.05 + 0.06)
    assert mau_table([]) == []


# -- golden files -----------------------------------------------------------------------


def test_golden_json_list_and_csv_agree(tmp_path):
    (tmp_path / "g.json").write_text(json.dumps([{"module": "rc4", "name": "key"}, {"module": "rc4", "name": "S"}]))
    (tmp_path / "g.csv").write_text("module,name,classification\nrc4,key,primary\nrc4,S,\n")
    a, b = load_golden(tmp_path / "g.json"), load_golden(tmp_path / "g.csv")
    assert [(g.module, g.name) for g in a] == [(g.module, g.name) for g in b]
    assert b[0].classification == "primary" and b[1].classification is None


def test_golden_entry_without_name_rejected(tmp_path):
    (tmp_path / "g.json").write_text(json.dumps({"assets": [{"module": "m"}]}))
    with pytest.raises(ParameterError):
        load_golden(tmp_path / "g.json")


def test_normalize():
    assert normalize("State_Out-1") == "stateout1"
