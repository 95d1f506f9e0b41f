import json

import jsonschema
import pytest
from hypothesis import given, settings, strategies as st

from hwasset.errors import EmptyModelError, HierarchyError, ParseError
from hwasset.rtl import Language, hierarchy_paths, list_modules, load_design, parse_module
from hwasset.rtl.dump import model_to_json
from hwasset.schemas import load_schema


def test_ansi_header_ports_and_signal():
    m = parse_module("module m(input [31:0] a, output b); wire [7:0] t; endmodule", Language.VERILOG)
    assert [(p.name, p.direction, p.width_bits) for p in m.ports] == [("a", "in", 32), ("b", "out", 1)]
    assert [(s.name, s.kind, s.width_bits) for s in m.signals] == [("t", "wire", 8)]
    assert m.element_count == 3


def test_vhdl_entity_port():
    m = parse_module("entity e is port(clk: in std_logic); end e;", Language.VHDL)
    assert m.name == "e"
    assert [(p.name, p.direction, p.width_bits) for p in m.ports] == [("clk", "in", 1)]


def test_vhdl_vector_ports():
    src = """
    library ieee; use ieee.std_logic_1164.all;
    entity regs is
      generic (W : integer := 16);
      port (d : in std_logic_vector(W-1 downto 0);
            q : out std_logic_vector(0 to 3);
            io : inout std_logic);
    end entity regs;
    architecture rtl of regs is begin end rtl;
    """
    m = parse_module(src, Language.VHDL)
    assert [(p.name, p.direction, p.width_bits) for p in m.ports] == [("d", "in", 16), ("q", "out", 4), ("io", "inout", 1)]


def test_two_modules_in_one_file_keep_declaration_order(write_repo):
    repo = write_repo({"two.v": "module zeta(input a); endmodule\nmodule alpha(output b); endmodule\n"})
    assert [m.name for m in list_modules(repo)] == ["zeta", "alpha"]


def test_parse_module_requires_exactly_one():
    with pytest.raises(ParseError):
        parse_module("module a; endmodule module b; endmodule", Language.VERILOG)


def test_unrecoverable_header_reports_line():
    with pytest.raises(ParseError) as exc:
        parse_module("\n\nmodule broken(input [3:0 a);\nendmodule", Language.VERILOG)
    assert exc.value.line == 3


def test_empty_directory_gives_empty_list(tmp_path):
    assert list_modules(tmp_path) == []


def test_unparseable_repo_is_empty_model_error(write_repo):
    repo = write_repo({"bad.v": "module (;\n"})
    with pytest.raises(EmptyModelError):
        list_modules(repo)


def test_bad_file_skipped_with_warning(write_repo):
    repo = write_repo({"a.v": "module good(input x); endmodule\n", "b.v": "module (;\n"})
    model = load_design(repo)
    assert [m.name for m in model] == ["good"]
    assert any("b.v" in w for w in model.warnings)


def test_files_ordered_by_path(write_repo):
    repo = write_repo({
        "z/top.v": "module top; endmodule\n",
        "a/leaf.sv": "module leaf(input logic [3:0] d); endmodule\n",
        "m/e.vhd": "entity ent is port(x: in std_logic); end ent;\n",
    })
    mods = list_modules(repo)
    assert [m.name for m in mods] == ["leaf", "ent", "top"]
    assert mods[0].language is Language.SYSTEMVERILOG


def test_aes_module_list(fixtures_dir):
    names = {m.name for m in list_modules(fixtures_dir / "aes128" / "rtl")}
    assert names == {"aes_128", "expand_key_128", "one_round", "final_round", "table_lookup"}


def test_aes_paths(fixtures_dir):
    model = load_design(fixtures_dir / "aes128" / "rtl")
    paths = hierarchy_paths(model)
    prefixes = {tuple(p.modules[:2]) for p in paths}
    assert ("aes_128", "one_round") in prefixes
    assert ("aes_128", "final_round") in prefixes
    assert ("aes_128", "expand_key_128") in prefixes
    # 10 key expansions + (9 rounds + final round) x 4 table lookups
    assert len(paths) == 50


def test_path_soundness(fixtures_dir):
    model = load_design(fixtures_dir / "aes128" / "rtl")
    for path in hierarchy_paths(model):
        for (_, parent), (inst, child) in zip(path.segments, path.segments[1:]):
            assert any(i.instance_name == inst and i.target == child for i in model[parent].instances)


def test_single_module_single_path(write_repo):
    model = load_design(write_repo({"m.v": "module solo(input a, output b); assign b = a; endmodule"}))
    paths = hierarchy_paths(model)
    assert len(paths) == 1 and paths[0].modules == ["solo"]


def test_chain_path(write_repo):
    model = load_design(write_repo({"c.v": """
        module a; b ub(); endmodule
        module b; c uc(); endmodule
        module c; endmodule
    """}))
    [p] = hierarchy_paths(model)
    assert p.modules == ["a", "b", "c"]
    assert str(p) == "a -> ub:b -> uc:c"


def test_cycle_is_reported(write_repo):
    model = load_design(write_repo({"c.v": """
        module top; a ua(); endmodule
        module a; b ub(); endmodule
        module b; a ua2(); endmodule
    """}))
    with pytest.raises(HierarchyError) as exc:
        hierarchy_paths(model)
    assert {"a", "b"} <= set(exc.value.cycle)


def test_generate_for_unrolled(write_repo):
    model = load_design(write_repo({"g.v": """
        module leaf(input x, output y); assign y = x; endmodule
        module top(input [3:0] d, output [3:0] q);
          genvar i;
          generate for (i = 0; i < 4; i = i + 1) begin : g
            leaf u (.x(d[i]), .y(q[i]));
          end endgenerate
        endmodule
    """}))
    assert [i.instance_name for i in model["top"].instances] == ["g[0].u", "g[1].u", "g[2].u", "g[3].u"]


def test_generate_with_symbolic_bound_recorded_once(write_repo):
    model = load_design(write_repo({"g.v": """
        module leaf(input x); endmodule
        module top #(parameter N = 4) (input [N-1:0] d, input [7:0] n);
          genvar i;
          for (i = 0; i < n; i = i + 1) begin : g
            leaf u (.x(d[i]));
          end
        endmodule
    """}))
    top = model["top"]
    assert len(top.instances) == 1
    assert any("multiplicity" in note for note in top.notes)


def test_multidimensional_array_flattened(write_repo):
    model = load_design(write_repo({"m.v": "module m; reg [7:0] mem [0:3][0:1]; endmodule"}))
    [s] = model["m"].signals
    assert s.width_bits == 8 * 8
    assert any("flattened" in n for n in model["m"].notes)


def test_ifdef_takes_undefined_default_with_warning(write_repo):
    repo = write_repo({"m.v": """
        module m(input a
        `ifdef WIDE
          , input [63:0] w
        `else
          , input [31:0] w
        `endif
        );
        endmodule
    """})
    model = load_design(repo)
    assert model["m"].port("w").width_bits == 32
    assert any("WIDE" in w for w in model.warnings)
    wide = load_design(repo, defines={"WIDE": ""})
    assert wide["m"].port("w").width_bits == 64


def test_include_and_define(write_repo):
    repo = write_repo({
        "inc/defs.vh": "`define W 12\n",
        "m.v": '`include "defs.vh"\nmodule m(input [`W-1:0] a); endmodule\n',
    })
    model = load_design(repo, include_dirs=[repo / "inc"])
    assert model["m"].port("a").width_bits == 12


def test_gpio_and_rc4_element_counts(fixtures_dir):
    assert load_design(fixtures_dir / "simple_gpio" / "rtl").element_count == 17
    assert load_design(fixtures_dir / "rc4" / "rtl").element_count == 12


def test_model_dump_matches_schema(fixtures_dir):
    data = model_to_json(load_design(fixtures_dir / "aes128" / "rtl"))
    jsonschema.validate(data, load_schema("design_model"))
    assert json.loads(json.dumps(data)) == data


def test_parsing_is_deterministic(fixtures_dir):
    a = load_design(fixtures_dir / "aes128" / "rtl")
    b = load_design(fixtures_dir / "aes128" / "rtl", jobs=4)
    assert a == b
    assert model_to_json(a) == model_to_json(b)


@settings(max_examples=60, deadline=None)
@given(
    msb=st.integers(min_value=-8, max_value=40),
    lsb=st.integers(min_value=-8, max_value=40),
    kind=st.sampled_from(["wire", "reg", "logic"]),
)
def test_width_consistency(msb, lsb, kind):
    src = f"module m(input [{msb}:{lsb}] p); {kind} [{lsb}:{msb}] s; endmodule"
    m = parse_module(src, Language.SYSTEMVERILOG)
    expected = abs(msb - lsb) + 1
    assert m.port("p").width_bits == expected == abs(m.port("p").msb - m.port("p").lsb) + 1
    assert m.signal("s").width_bits == expected
