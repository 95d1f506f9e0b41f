import itertools
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from hwasset.assets import PRIMARY, SECONDARY, AssetAnnotation, AttackClass, AttackScenario, Objective, StructuralRef
from hwasset.doi import InfluenceGraph, compute_doi, doi_for_design, select_primary, unroll_assets
from hwasset.rtl import hierarchy_paths, load_design
from hwasset.rtl.model import HierarchyPath
from oracles.wiring import generate, toggle_reference

R = StructuralRef


def design(write_repo, text):
    return load_design(write_repo({"d.v": text}))


def local_edges(model, module):
    return {(a[1:], b[1:], ex) for a, b, ex in InfluenceGraph(model).net(module).edges()}


def test_identity_assign_edges(write_repo):
    m = design(write_repo, "module t(input [7:0] x, output [7:0] y); assign y = x; endmodule")
    edges = local_edges(m, "t")
    assert edges == {(("x", i), ("y", i), True) for i in range(8)}


def test_concat_alignment(write_repo):
    m = design(write_repo, "module t(input [7:0] a, b, output [7:0] y); assign y = {a[3:0], b[3:0]}; endmodule")
    edges = local_edges(m, "t")
    expected = {(("a", i), ("y", i + 4), True) for i in range(4)} | {(("b", i), ("y", i), True) for i in range(4)}
    assert edges == expected


def test_arithmetic_is_all_to_all_and_inexact(write_repo):
    m = design(write_repo, "module t(input [3:0] a, b, output [3:0] y); assign y = a + b; endmodule")
    edges = local_edges(m, "t")
    assert len(edges) == 32
    assert not any(ex for _, _, ex in edges)


def test_arithmetic_overapproximation_contains_true_influence(write_repo):
    # Exhaustive truth table of a 4-bit adder: which input bits can flip which sum bits.
    true_influence = set()
    for a, b in itertools.product(range(16), repeat=2):
        y = (a + b) & 15
        for i in range(4):
            for name, va, vb in (("a", a ^ (1 << i), b), ("b", a, b ^ (1 << i))):
                diff = y ^ ((va + vb) & 15)
                for j in range(4):
                    if diff >> j & 1:
                        true_influence.add(((name, i), ("y", j)))
    m = design(write_repo, "module t(input [3:0] a, b, output [3:0] y); assign y = a + b; endmodule")
    graph = {(s, d) for s, d, _ in local_edges(m, "t")}
    assert true_influence <= graph
    assert true_influence != graph  # low sum bits do not depend on high operand bits


def test_width_mismatch_uses_low_bits_and_warns(write_repo):
    m = design(write_repo, """
        module leaf(input [3:0] p); endmodule
        module t(input [7:0] w); leaf u (.p(w)); endmodule
    """)
    g = InfluenceGraph(m)
    edges = {(a, b) for a, b, _ in g.net("t").edges()}
    assert edges == {(("s", "w", i), ("c", "u", "p", i)) for i in range(4)}
    assert any("width mismatch" in w for w in g.warnings)


def test_branch_condition_influences_guarded_bits(write_repo):
    m = design(write_repo, """
        module t(input clk, input en, input [3:0] d, output reg [3:0] q);
          always @(posedge clk) if (en) q <= d;
        endmodule
    """)
    edges = local_edges(m, "t")
    assert {(("en", 0), ("q", i), False) for i in range(4)} <= edges
    assert {(("d", i), ("q", i), True) for i in range(4)} <= edges


def test_flattened_edges_cross_instance_boundaries(write_repo):
    m = design(write_repo, """
        module leaf(input [1:0] a, output [1:0] b); assign b = a; endmodule
        module top(input [1:0] x, output [1:0] y); leaf u (.a(x), .b(y)); endmodule
    """)
    edges = set(InfluenceGraph(m).edges("top"))
    srcs = {(e.src, e.dst) for e in edges}
    assert (((), "x", 0), (("u",), "a", 0)) in srcs
    assert ((("u",), "a", 1), (("u",), "b", 1)) in srcs
    assert ((("u",), "b", 1), ((), "y", 1)) in srcs
    for e in edges:
        assert 0 <= e.src[2] < 2 and 0 <= e.dst[2] < 2


def test_fpu_example(fixtures_dir):
    model = load_design(fixtures_dir / "fpu" / "rtl")
    [path] = hierarchy_paths(model)
    rec = compute_doi(InfluenceGraph(model), R("neorv32_cpu", "csr_rdata"), R("neorv32_cpu_cp_fpu", "csr_we_i"), path)
    assert rec.hop_fractions == [Fraction(8, 32), Fraction(1)]
    assert rec.doi == 25
    assert rec.doi_percent == "25.00"
    assert (rec.connected_bits, rec.primary_width) == (8, 32)
    assert rec.exact is False


def test_direct_full_connection_is_100(write_repo):
    m = design(write_repo, "module t(input [5:0] s, output [5:0] p); assign p = s; endmodule")
    path = hierarchy_paths(m)[0]
    rec = compute_doi(InfluenceGraph(m), R("t", "p"), R("t", "s"), path)
    assert rec.doi == 100 and rec.exact
    assert rec.hop_fractions[0] == Fraction(rec.connected_bits, rec.primary_width)


THREE_LEVEL = """
module leaf(input s, output [1:0] o);
  assign o = {1'b0, s};
endmodule
module mid(output [1:0] m);
  wire [1:0] w;
  leaf ul (.s(1'b1), .o(w));
  assign m = {1'b0, w[0]};
endmodule
module top(output [1:0] p);
  mid um (.m(p));
endmodule
"""


def test_two_half_hops_give_25_percent(write_repo):
    m = design(write_repo, THREE_LEVEL)
    [path] = hierarchy_paths(m)
    rec = compute_doi(InfluenceGraph(m), R("top", "p"), R("leaf", "s"), path)
    assert rec.hop_fractions == [Fraction(1, 2), Fraction(1, 2), Fraction(1)]
    assert rec.doi_percent == "25.00"
    assert rec.connected_bits == 1


def test_no_connection_gives_zero_and_keeps_record(write_repo):
    m = design(write_repo, """
        module leaf(input a, output b); assign b = 1'b0; endmodule
        module top(output p); leaf u (.a(1'b0), .b(p)); endmodule
    """)
    [path] = hierarchy_paths(m)
    rec = compute_doi(InfluenceGraph(m), R("top", "p"), R("leaf", "a"), path)
    assert rec.doi == 0
    assert 0 in rec.hop_fractions


def test_secondary_above_primary(write_repo):
    m = design(write_repo, """
        module leaf(input [3:0] d, output reg [3:0] r);
          always @* r = d;
        endmodule
        module top(input [3:0] k);
          leaf u (.d({2'b00, k[1:0]}), .r());
        endmodule
    """)
    [path] = hierarchy_paths(m)
    rec = compute_doi(InfluenceGraph(m), R("leaf", "r"), R("top", "k"), path)
    # the second hop starts from the whole of port d
    assert rec.hop_fractions == [Fraction(2, 4), Fraction(1)]
    assert rec.connected_bits == 2


def test_concat_reference_counts_all_members(write_repo):
    m = design(write_repo, """
        module t(input [1:0] s, output [1:0] p0, output [1:0] p1);
          assign p0 = s; assign p1 = 2'b0;
        endmodule
    """)
    path = hierarchy_paths(m)[0]
    rec = compute_doi(InfluenceGraph(m), R("t", "{p0,p1}"), R("t", "s"), path)
    assert (rec.connected_bits, rec.primary_width) == (2, 4)


def ann(aid, mod, name, cwes=(), attacks=0, cls=PRIMARY, parent=None):
    return AssetAnnotation(
        asset_id=aid,
        conceptual_name=name,
        structural_ref=R(mod, name),
        objectives=(Objective.CONFIDENTIALITY,),
        classification=cls,
        parent_primary=parent,
        parent_id="P" if parent else None,
        attack_scenarios=tuple(AttackScenario(AttackClass.SIDE_CHANNEL, "x") for _ in range(attacks)),
        cwe_ids=tuple(cwes),
    )


def test_select_primary_by_cwe_count():
    a = ann("1", "m", "a", cwes=(1, 2, 3, 4))
    b = ann("2", "m", "b", cwes=(1, 2))
    c = ann("3", "m", "c", cwes=(3, 4))
    assert select_primary([b, a, c]) == (a, False)


def test_select_primary_single_asset():
    a = ann("1", "m", "a")
    assert select_primary([a]) == (a, False)


def test_select_primary_name_tiebreak_flagged():
    a = ann("1", "m", "alpha", cwes=(1,), attacks=2)
    z = ann("2", "m", "zeta", cwes=(2,), attacks=2)
    assert select_primary([a, z]) == (z, True)


def test_select_primary_attack_count_breaks_cwe_tie():
    a = ann("1", "m", "alpha", cwes=(1,), attacks=3)
    z = ann("2", "m", "zeta", cwes=(2,), attacks=2)
    assert select_primary([a, z]) == (a, False)


def test_unroll_orders_root_to_leaf():
    path = HierarchyPath((("aes_128", "aes_128"), ("a1", "expand_key_128")))
    key = ann("P1", "aes_128", "key")
    out1 = ann("P1.S1", "expand_key_128", "out_1", cls=SECONDARY, parent=key.structural_ref)
    other = ann("P2", "one_round", "state_out")
    assert unroll_assets(path, [out1, other, key]) == [key, out1]
    assert unroll_assets(path, []) == []
    single = HierarchyPath((("aes_128", "aes_128"),))
    assert unroll_assets(single, [out1, key]) == [key]


def test_doi_for_design_is_deterministic(fixtures_dir):
    model = load_design(fixtures_dir / "fpu" / "rtl")
    bundle = [
        ann("P1", "neorv32_cpu", "csr_rdata", cwes=(1, 2)),
        ann("P1.S1", "neorv32_cpu_cp_fpu", "csr_we_i", cls=SECONDARY, parent=R("neorv32_cpu", "csr_rdata")),
    ]
    a = [r.to_json() for r in doi_for_design(model, bundle)]
    b = [r.to_json() for r in doi_for_design(model, list(reversed(bundle)))]
    assert a == b and a[0]["doi_percent"] == "25.00"


@pytest.mark.parametrize("seed", range(0, 120, 7))
def test_graph_matches_toggle_oracle(write_repo, seed):
    src, top = generate(seed)
    model = design(write_repo, src)
    g = InfluenceGraph(model)
    outs = [("s", o.name, b) for o in top.outputs for b in range(o.width)]
    for (name, bit), expected in toggle_reference(top, seed).items():
        got, exact = g.reach(top.name, [("s", name, bit)], outs)
        assert {(k[1], k[2]) for k in got} == expected
        assert exact


@settings(max_examples=40, deadline=None)
@given(
    w=st.integers(min_value=1, max_value=8),
    keep=st.integers(min_value=0, max_value=8),
    extra=st.integers(min_value=0, max_value=3),
)
def test_doi_bounds(tmp_path_factory, w, keep, extra):
    keep = min(keep, w)
    d = tmp_path_factory.mktemp("d")
    rhs = f"{{{w - keep}'d0, s[{keep - 1}:0]}}" if 0 < keep < w else ("s" if keep == w else f"{w}'d0")
    (d / "t.v").write_text(f"""
        module leaf(input [{w - 1}:0] s, output [{w + extra - 1}:0] o); assign o = {rhs}; endmodule
        module top(input [{w - 1}:0] x, output [{w + extra - 1}:0] p); leaf u (.s(x), .o(p)); endmodule
    """)
    model = load_design(d)
    [path] = hierarchy_paths(model)
    rec = compute_doi(InfluenceGraph(model), R("top", "p"), R("leaf", "s"), path)
    assert 0 <= rec.doi <= 100
    assert (rec.doi == 0) == (0 in rec.hop_fractions)
    assert rec.doi == 100 * Fraction(keep, w + extra)
