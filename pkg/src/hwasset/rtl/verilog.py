"""Verilog / SystemVerilog module parser for the supported grammar subset.

The parser recognises module headers (ANSI and non-ANSI), net and variable
declarations, parameters, continuous assignments, procedural blocks and
module instantiations.  Anything else is skipped and recorded as a note on
the resulting :class:`ModuleDecl`; declarations are never dropped silently.
"""

from __future__ import annotations

from ..errors import ParseError
from .expr import (
    Binary,
    ExprParser,
    Unary,
    Id,
    Num,
    NotConstant,
    const_eval,
    render,
    subst,
    tokenize,
    try_const,
)
from .model import Assignment, InstanceDecl, Language, ModuleDecl, PortDecl, SignalDecl

DIRECTIONS = {"input": "in", "output": "out", "inout": "inout"}
NET_TYPES = {
    "wire", "tri", "tri0", "tri1", "triand", "trior", "trireg", "wand", "wor",
    "uwire", "supply0", "supply1",
}
VAR_TYPES = {"reg", "logic", "bit", "var"}
INT_TYPES = {"byte": 8, "shortint": 16, "longint": 64}
LOOP_TYPES = {"integer", "int", "genvar", "real", "realtime", "time", "shortreal", "string"}
PROC_KEYWORDS = {"always", "always_ff", "always_comb", "always_latch", "initial", "final"}
_BLOCK_PAIRS = {
    "function": "endfunction",
    "task": "endtask",
    "specify": "endspecify",
    "property": "endproperty",
    "sequence": "endsequence",
    "clocking": "endclocking",
    "covergroup": "endgroup",
    "class": "endclass",
    "interface": "endinterface",
    "package": "endpackage",
    "program": "endprogram",
    "checker": "endchecker",
    "config": "endconfig",
    "primitive": "endprimitive",
    "table": "endtable",
}
_SKIP_STATEMENT = {
    "typedef", "import", "export", "defparam", "assert", "assume", "cover", "restrict",
    "bind", "modport", "let", "const", "default", "timeunit", "timeprecision", "alias",
    "nettype", "struct", "enum", "union", "static", "automatic", "chandle", "event",
    "parameter_override",
}
_RESERVED = (
    set(DIRECTIONS) | NET_TYPES | VAR_TYPES | set(INT_TYPES) | LOOP_TYPES | PROC_KEYWORDS
    | set(_BLOCK_PAIRS) | _SKIP_STATEMENT
    | {"assign", "parameter", "localparam", "generate", "endgenerate", "for", "if", "else",
       "case", "casez", "casex", "begin", "end", "endmodule", "module", "signed", "unsigned",
       "while", "repeat", "forever", "fork", "join", "join_any", "join_none", "wait",
       "disable", "return", "break", "continue", "unique", "unique0", "priority", "endcase",
       "posedge", "negedge", "or", "and", "not", "buf", "nand", "nor", "xor", "xnor",
       "force", "release", "deassign", "foreach", "do", "void", "inside", "type"}
)
_GATES = {"and", "or", "not", "buf", "nand", "nor", "xor", "xnor", "bufif0", "bufif1", "notif0", "notif1"}
MAX_UNROLL = 4096


def find_module_spans(tokens):
    """Token index ranges ``(start, end)`` of each module declaration."""
    spans = []
    i = 0
    n = len(tokens)
    while i < n:
        t = tokens[i]
        if t.kind == "id" and t.value in ("module", "macromodule"):
            j = i + 1
            depth = 0
            while j < n and tokens[j].kind != "eof":
                v = tokens[j].value
                if tokens[j].kind == "id" and v in ("module", "macromodule"):
                    depth += 1
                elif tokens[j].kind == "id" and v == "endmodule":
                    if depth == 0:
                        break
                    depth -= 1
                j += 1
            if j >= n or tokens[j].kind == "eof":
                raise ParseError("module without endmodule", line=t.line)
            spans.append((i, j + 1))
            i = j + 1
        elif t.kind == "id" and t.value in _BLOCK_PAIRS and t.value not in ("function", "task"):
            end = _BLOCK_PAIRS[t.value]
            j = i + 1
            while j < n and not (tokens[j].kind == "id" and tokens[j].value == end):
                j += 1
            i = j + 1
        else:
            i += 1
    return spans


class ModuleParser(ExprParser):
    def __init__(self, tokens, pos=0, file=None, language=Language.VERILOG):
        super().__init__(tokens, pos, file)
        self.language = language
        self.env: dict[str, int] = {}
        self.params: list[tuple[str, str]] = []
        self.ports: dict[str, dict] = {}
        self.port_order: list[str] = []
        self.signals: dict[str, dict] = {}
        self.instances: list[InstanceDecl] = []
        self.assignments: list[Assignment] = []
        self.notes: list[str] = []
        self.bindings: dict[str, int] = {}
        self.prefix = ""
        self.local_vars: set[str] = set()

    # -- helpers ---------------------------------------------------------
    def note(self, msg, line=None):
        line = self.peek().line if line is None else line
        self.notes.append(f"line {line}: {msg}")

    def expr(self):
        e = super().expr()
        return subst(e, self.bindings) if self.bindings else e

    def is_kw(self, value, k=0):
        t = self.peek(k)
        return t.kind == "id" and t.value == value

    def cur_env(self):
        if self.bindings:
            env = dict(self.env)
            env.update(self.bindings)
            return env
        return self.env

    def eval(self, e, what="expression"):
        try:
            return const_eval(e, self.cur_env())
        except NotConstant as exc:
            raise NotConstant(f"{what} {render(e)!r} is not constant ({exc})")

    def skip_balanced(self):
        """Skip one balanced (), [] or {} group starting at the current token."""
        pairs = {"(": ")", "[": "]", "{": "}"}
        open_ = self.next().value
        close = pairs[open_]
        depth = 1
        while depth:
            t = self.next()
            if t.kind == "eof":
                raise ParseError(f"unbalanced {open_!r}", self.file, t.line)
            if t.value == open_:
                depth += 1
            elif t.value == close:
                depth -= 1

    def skip_to_semicolon(self):
        while True:
            t = self.peek()
            if t.kind == "eof" or self.is_kw("endmodule"):
                return
            if t.value in ("(", "[", "{") and t.kind == "op":
                self.skip_balanced()
                continue
            self.next()
            if t.value == ";" and t.kind == "op":
                return

    def skip_until_kw(self, end_kw, start_kw=None):
        depth = 0
        while True:
            t = self.next()
            if t.kind == "eof":
                raise ParseError(f"missing {end_kw}", self.file, t.line)
            if t.kind == "id" and start_kw and t.value == start_kw:
                depth += 1
            elif t.kind == "id" and t.value == end_kw:
                if depth == 0:
                    return
                depth -= 1

    def skip_label(self):
        if self.at(":") and self.peek(1).kind == "id":
            self.next()
            self.next()

    # -- ranges and types -------------------------------------------------
    def parse_range(self):
        """Parse ``[msb:lsb]``; returns (msb, lsb) or (0, 0) with a note."""
        line = self.peek().line
        self.expect("[")
        left = self.expr()
        if self.accept(":"):
            right = self.expr()
            self.expect("]")
            try:
                return self.eval(left), self.eval(right)
            except NotConstant as exc:
                self.note(f"non-constant range: {exc}; width taken as 1", line)
                return 0, 0
        self.expect("]")
        # [N] shorthand for [0:N-1] (unpacked) or [N-1:0]
        try:
            size = self.eval(left)
        except NotConstant as exc:
            self.note(f"non-constant dimension: {exc}", line)
            return 0, 0
        return 0, size - 1

    def parse_packed(self):
        """Packed dimensions; multiple dimensions are flattened."""
        dims = []
        while self.at("["):
            dims.append(self.parse_range())
        if not dims:
            return None
        if len(dims) == 1:
            return dims[0]
        width = 1
        for m, l in dims:
            width *= abs(m - l) + 1
        self.note(f"multi-dimensional packed array flattened to {width} bits")
        return (width - 1, 0)

    def parse_unpacked(self, name):
        depth = 1
        line = self.peek().line
        count = 0
        while self.at("["):
            m, l = self.parse_range()
            depth *= abs(m - l) + 1
            count += 1
        if count:
            self.note(f"array {name} flattened ({depth} elements)", line)
        return depth

    def parse_data_type(self):
        """Consume an optional data type; returns (kind, packed_range_or_None, is_loop_var)."""
        kind = None
        rng = None
        loop = False
        t = self.peek()
        if t.kind == "id" and t.value in NET_TYPES:
            self.next()
            kind = "wire"
            if self.at("(") and self.peek(1).kind == "id" and self.peek(1).value.startswith(("strong", "weak", "pull", "supply", "highz")):
                self.skip_balanced()
            t = self.peek()
        if t.kind == "id" and t.value in VAR_TYPES:
            self.next()
            if t.value == "var" and self.peek().kind == "id" and self.peek().value in VAR_TYPES:
                self.next()
            kind = kind or "reg"
        elif t.kind == "id" and t.value in INT_TYPES:
            self.next()
            kind = "other"
            rng = (INT_TYPES[t.value] - 1, 0)
        elif t.kind == "id" and t.value in LOOP_TYPES:
            self.next()
            kind = "other"
            loop = True
            rng = (31, 0)
        while self.peek().kind == "id" and self.peek().value in ("signed", "unsigned"):
            self.next()
        packed = self.parse_packed()
        if packed is not None:
            rng = packed
        return kind, rng, loop

    # -- entry -------------------------------------------------------------
    def parse(self) -> ModuleDecl:
        start = self.peek()
        if not (self.is_kw("module") or self.is_kw("macromodule")):
            raise ParseError("expected 'module'", self.file, start.line)
        self.next()
        while self.peek().kind == "id" and self.peek().value in ("static", "automatic"):
            self.next()
        name = self.expect_id()
        self.parse_header()
        while not self.is_kw("endmodule"):
            if self.peek().kind == "eof":
                raise ParseError(f"module {name}: missing endmodule", self.file, self.peek().line)
            self.module_item()
        self.next()
        self.skip_label()
        return self.build(name, start.line)

    def parse_header(self):
        while self.is_kw("import"):
            self.skip_to_semicolon()
        if self.accept("#"):
            self.expect("(")
            self.param_port_list()
        if self.at("("):
            self.next()
            self.port_list()
        if not self.accept(";"):
            t = self.peek()
            raise ParseError(f"malformed module header near {t.value!r}", self.file, t.line)

    def param_port_list(self):
        keyword = "parameter"
        while not self.at(")"):
            if self.is_kw("parameter") or self.is_kw("localparam"):
                keyword = self.next().value
            if self.is_kw("type"):
                self.next()
                self.expect_id()
                if self.accept("="):
                    self._skip_param_value()
                self.note("type parameter ignored")
            else:
                self.parse_data_type_for_param()
                self.one_param()
            if not self.accept(","):
                break
        self.expect(")")

    def _skip_param_value(self):
        while not (self.at(",") or self.at(")") or self.at(";")):
            if self.peek().value in ("(", "[", "{"):
                self.skip_balanced()
            else:
                self.next()

    def parse_data_type_for_param(self):
        t = self.peek()
        if t.kind == "id" and (t.value in VAR_TYPES or t.value in INT_TYPES or t.value in LOOP_TYPES or t.value in NET_TYPES):
            self.next()
        while self.peek().kind == "id" and self.peek().value in ("signed", "unsigned"):
            self.next()
        # user-defined parameter type: `mytype_t NAME = ...`
        if self.peek().kind == "id" and self.peek(1).kind == "id" and self.peek(1).value not in ("=",):
            if self.peek(1).value not in _RESERVED:
                self.next()
        while self.at("["):
            self.skip_balanced()

    def one_param(self):
        pname = self.expect_id()
        while self.at("["):
            self.skip_balanced()
        if self.accept("="):
            start = self.pos
            try:
                e = self.expr()
                text = render(e)
                v = try_const(e, self.cur_env())
                if v is not None:
                    self.env[pname] = v
            except ParseError:
                self.pos = start
                self._skip_param_value()
                text = " ".join(t.value for t in self.toks[start:self.pos])
                self.note(f"parameter {pname} default not parsed")
            self.params.append((pname, text))
        else:
            self.params.append((pname, ""))

    def port_list(self):
        if self.accept(")"):
            return
        t = self.peek()
        ansi = t.kind == "id" and (
            t.value in DIRECTIONS or t.value in NET_TYPES or t.value in VAR_TYPES
            or t.value in INT_TYPES or t.value in ("interface",)
            or (self.peek(1).kind == "id" and self.peek(1).value not in _RESERVED)
            or (self.peek(1).value == "." and self.peek(2).kind == "id" and self.peek(3).kind == "id")
        )
        if not ansi:
            while True:
                if self.accept("."):
                    pname = self.expect_id()
                    self.skip_balanced()
                    self.note(f"explicit header port .{pname}(...) treated as {pname}")
                elif self.at("{"):
                    self.skip_balanced()
                    self.note("concatenated header port not supported")
                    pname = None
                else:
                    pname = self.expect_id()
                    while self.at("["):
                        self.skip_balanced()
                if pname:
                    self.port_order.append(pname)
                if not self.accept(","):
                    break
            self.expect(")")
            return
        direction = "inout"
        kind = "wire"
        rng = None
        while True:
            line = self.peek().line
            t = self.peek()
            explicit_dir = False
            if t.kind == "id" and t.value in DIRECTIONS:
                direction = DIRECTIONS[self.next().value]
                explicit_dir = True
                kind, rng = "wire", None
            if self.peek().kind == "id" and self.peek(1).value == "." and self.peek(2).kind == "id" and self.peek(3).kind == "id":
                iface = self.next().value
                self.next()
                self.next()
                pname = self.expect_id()
                self.note(f"interface port {pname} ({iface}) not supported", line)
                if not self.accept(","):
                    break
                continue
            t = self.peek()
            if t.kind == "id" and (t.value in NET_TYPES or t.value in VAR_TYPES or t.value in INT_TYPES or t.value in LOOP_TYPES or t.value in ("signed", "unsigned")) or self.at("["):
                k, r, _ = self.parse_data_type()
                kind = k or "wire"
                rng = r
            elif t.kind == "id" and self.peek(1).kind == "id" and t.value not in _RESERVED:
                self.next()
                self.note(f"user-defined port type {t.value} treated as 1 bit", line)
                kind, rng = "other", self.parse_packed()
            elif explicit_dir:
                pass
            pname = self.expect_id()
            depth = self.parse_unpacked(pname)
            if self.accept("="):
                self.expr()
            msb, lsb = rng if rng is not None else (0, 0)
            if depth > 1:
                width = (abs(msb - lsb) + 1) * depth
                msb, lsb = width - 1, 0
            self.add_port(pname, direction, msb, lsb, kind, line, explicit_range=rng is not None)
            self.port_order.append(pname)
            if not self.accept(","):
                break
        self.expect(")")

    def add_port(self, name, direction, msb, lsb, kind, line, explicit_range=True):
        full = self.prefix + name
        if full in self.ports:
            p = self.ports[full]
            p["direction"] = direction
            if explicit_range:
                p["msb"], p["lsb"] = msb, lsb
            if kind in ("reg", "other"):
                p["net_type"] = kind
            return
        self.ports[full] = {"direction": direction, "msb": msb, "lsb": lsb, "net_type": kind or "wire", "declared": True, "line": line}

    def add_signal(self, name, kind, msb, lsb, depth, line):
        full = self.prefix + name
        if full in self.ports:
            p = self.ports[full]
            p["net_type"] = kind
            if (p["msb"], p["lsb"]) == (0, 0) and (msb, lsb) != (0, 0):
                p["msb"], p["lsb"] = msb, lsb
            return
        if full in self.signals:
            self.note(f"duplicate declaration of {full} ignored", line)
            return
        self.signals[full] = {"kind": kind, "msb": msb, "lsb": lsb, "depth": depth, "line": line}

    # -- module items -------------------------------------------------------
    def module_item(self):
        t = self.peek()
        v = t.value
        if t.kind == "op":
            if v == ";":
                self.next()
                return
            if v == "#":
                self.note("unexpected delay at module level skipped")
                self.skip_to_semicolon()
                return
            raise ParseError(f"unexpected {v!r} in module body", self.file, t.line)
        if t.kind != "id":
            raise ParseError(f"unexpected {v!r} in module body", self.file, t.line)
        if v in DIRECTIONS:
            self.port_decl()
        elif v in ("parameter", "localparam"):
            self.next()
            if self.is_kw("type"):
                self.note("type parameter ignored")
                self.skip_to_semicolon()
                return
            self.parse_data_type_for_param()
            while True:
                self.one_param()
                if not self.accept(","):
                    break
            self.expect(";")
        elif v in NET_TYPES or v in VAR_TYPES or v in INT_TYPES or v in LOOP_TYPES:
            self.net_decl()
        elif v == "assign":
            self.cont_assign()
        elif v in PROC_KEYWORDS:
            self.next()
            self.proc_block(v)
        elif v in ("generate", "endgenerate"):
            self.next()
        elif v == "for":
            self.generate_for()
        elif v == "if":
            self.generate_if()
        elif v in ("case", "casez", "casex"):
            self.note("case-generate not supported; skipped")
            self.next()
            self.skip_until_kw("endcase", v)
        elif v == "begin":
            self.next()
            self.skip_label()
            while not self.is_kw("end"):
                if self.peek().kind == "eof" or self.is_kw("endmodule"):
                    raise ParseError("missing end", self.file, self.peek().line)
                self.module_item()
            self.next()
            self.skip_label()
        elif v in _BLOCK_PAIRS:
            self.next()
            if v in ("function", "task"):
                self.note(f"{v} body skipped")
            self.skip_until_kw(_BLOCK_PAIRS[v], v if v not in ("function", "task") else None)
            self.skip_label()
        elif v in _SKIP_STATEMENT:
            if v in ("assert", "assume", "cover") and self.peek(1).value == "property":
                self.skip_to_semicolon()
                return
            if v == "typedef":
                self.note("typedef skipped")
            self.skip_to_semicolon()
        elif v in _GATES:
            self.gate_instance()
        elif v in ("end", "endcase", "endfunction", "endtask"):
            raise ParseError(f"unexpected {v!r}", self.file, t.line)
        else:
            self.instance_or_typed_decl()

    def port_decl(self):
        line = self.peek().line
        direction = DIRECTIONS[self.next().value]
        kind, rng, _ = self.parse_data_type()
        if rng is None and self.peek().kind == "id" and self.peek(1).kind == "id" and self.peek().value not in _RESERVED:
            self.note(f"user-defined port type {self.next().value} treated as 1 bit", line)
            rng = self.parse_packed()
        while True:
            pname = self.expect_id()
            depth = self.parse_unpacked(pname)
            msb, lsb = rng if rng else (0, 0)
            if depth > 1:
                w = (abs(msb - lsb) + 1) * depth
                msb, lsb = w - 1, 0
            self.add_port(pname, direction, msb, lsb, kind, line, explicit_range=rng is not None)
            if self.accept("="):
                rhs = self.expr()
                self.assignments.append(Assignment(Id(self.prefix + pname), rhs, line=line))
            if not self.accept(","):
                break
        self.expect(";")

    def net_decl(self):
        line = self.peek().line
        head = self.peek().value
        kind, rng, loop = self.parse_data_type()
        if self.at("#"):
            self.next()
            if self.at("("):
                self.skip_balanced()
            else:
                self.next()
        while True:
            dname = self.expect_id()
            depth = self.parse_unpacked(dname)
            msb, lsb = rng if rng else (0, 0)
            if loop:
                self.note(f"{head} {dname} is a loop/behavioural variable; not a design element", line)
                self.local_vars.add(self.prefix + dname)
            else:
                self.add_signal(dname, kind or "wire", msb, lsb, depth, line)
            if self.accept("="):
                rhs = self.expr()
                if not loop and (kind == "wire" or head in NET_TYPES):
                    self.assignments.append(Assignment(Id(self.prefix + dname), rhs, line=line))
            if not self.accept(","):
                break
        self.expect(";")

    def cont_assign(self):
        line = self.next().line
        if self.at("(") and self.peek(1).kind == "id" and self.peek(1).value.startswith(("strong", "weak", "pull", "supply", "highz")):
            self.skip_balanced()
        if self.accept("#"):
            if self.at("("):
                self.skip_balanced()
            else:
                self.next()
        while True:
            lhs = self.lvalue()
            self.expect("=")
            rhs = self.expr()
            self.assignments.append(Assignment(self._prefixed(lhs), self._prefixed(rhs), line=line))
            if not self.accept(","):
                break
        self.expect(";")

    def _prefixed(self, e):
        if not self.prefix:
            return e
        local = {n[len(self.prefix):] for n in list(self.signals) + list(self.ports) if n.startswith(self.prefix)}
        if not local:
            return e
        from .expr import Concat, Index, Repl, Slice, Ternary, Unary, Call

        def walk(x):
            if isinstance(x, Id):
                return Id(self.prefix + x.name) if x.name in local else x
            if isinstance(x, Index):
                return Index(walk(x.base), walk(x.index))
            if isinstance(x, Slice):
                return Slice(walk(x.base), walk(x.left), walk(x.right), x.mode)
            if isinstance(x, Concat):
                return Concat(tuple(walk(i) for i in x.items))
            if isinstance(x, Repl):
                return Repl(x.count, tuple(walk(i) for i in x.items))
            if isinstance(x, Unary):
                return Unary(x.op, walk(x.operand))
            if isinstance(x, Binary):
                return Binary(x.op, walk(x.left), walk(x.right))
            if isinstance(x, Ternary):
                return Ternary(walk(x.cond), walk(x.then), walk(x.other))
            if isinstance(x, Call):
                return Call(x.name, tuple(walk(a) for a in x.args))
            return x

        return walk(e)

    # -- generate constructs -------------------------------------------------
    def _loop_header(self):
        """Parse ``( init ; cond ; step )``; returns (var, init_expr, cond, step_fn)."""
        self.expect("(")
        if self.peek().kind == "id" and self.peek().value in LOOP_TYPES:
            self.next()
        var = self.expect_id()
        self.expect("=")
        init = self.expr()
        self.expect(";")
        cond = self.expr()
        self.expect(";")
        svar = self.expect_id()
        if self.accept("++"):
            step = Binary("+", Id(svar), Num(1, None, "1"))
        elif self.accept("--"):
            step = Binary("-", Id(svar), Num(1, None, "1"))
        elif self.at("+=") or self.at("-="):
            op = self.next().value[0]
            step = Binary(op, Id(svar), self.expr())
        else:
            self.expect("=")
            step = self.expr()
        self.expect(")")
        return var, init, cond, step

    def _iterations(self, var, init, cond, step):
        env = dict(self.cur_env())
        try:
            v = const_eval(init, env)
            values = []
            while True:
                env[var] = v
                if not const_eval(cond, env):
                    break
                values.append(v)
                if len(values) > MAX_UNROLL:
                    return None
                v = const_eval(step, env)
            return values
        except NotConstant:
            return None

    def _body_span(self):
        """Token span of the next statement or begin/end block."""
        start = self.pos
        if self.is_kw("begin"):
            depth = 0
            while True:
                t = self.next()
                if t.kind == "eof":
                    raise ParseError("missing end", self.file, t.line)
                if t.kind == "id" and t.value in ("begin",):
                    depth += 1
                elif t.kind == "id" and t.value == "end":
                    depth -= 1
                    if depth == 0:
                        break
            self.skip_label()
        else:
            self._skip_statement()
        return start, self.pos

    def _skip_statement(self):
        t = self.peek()
        if t.kind == "id" and t.value in ("case", "casez", "casex"):
            self.next()
            self.skip_until_kw("endcase")
            return
        if t.kind == "id" and t.value in _BLOCK_PAIRS:
            self.next()
            self.skip_until_kw(_BLOCK_PAIRS[t.value])
            return
        if t.kind == "id" and t.value == "if":
            self.next()
            self.skip_balanced()
            self._body_span()
            if self.is_kw("else"):
                self.next()
                self._body_span()
            return
        if t.kind == "id" and t.value in ("for", "while", "repeat", "foreach"):
            self.next()
            self.skip_balanced()
            self._body_span()
            return
        self.skip_to_semicolon()

    def _block_label(self, span_start):
        t0 = self.toks[span_start]
        if t0.kind == "id" and t0.value == "begin" and self.toks[span_start + 1].value == ":":
            return self.toks[span_start + 2].value
        return None

    def generate_for(self):
        line = self.next().line
        var, init, cond, step = self._loop_header()
        start, end = self._body_span()
        label = self._block_label(start) or "genblk"
        values = self._iterations(var, init, cond, step)
        saved = (self.pos, self.prefix, dict(self.bindings))
        if values is None:
            self.note(f"generate loop over {var} has non-literal bounds; contents recorded once (multiplicity unknown)", line)
            values = [None]
        for v in values:
            self.pos = start
            if v is not None:
                self.bindings[var] = v
                self.prefix = saved[1] + f"{label}[{v}]."
            self.module_item()
            if self.pos != end:
                self.pos = end
        self.pos, self.prefix, self.bindings = saved[0], saved[1], saved[2]
        self.pos = end

    def generate_if(self):
        line = self.next().line
        self.expect("(")
        cond = self.expr()
        self.expect(")")
        v = try_const(cond, self.cur_env())
        s1, e1 = self._body_span()
        s2 = e2 = None
        if self.is_kw("else"):
            self.next()
            s2, e2 = self._body_span()
        after = self.pos
        chosen = []
        if v is None:
            self.note(f"generate-if condition {render(cond)!r} not constant; both branches recorded", line)
            chosen = [(s1, e1)] + ([(s2, e2)] if s2 is not None else [])
        elif v:
            chosen = [(s1, e1)]
        elif s2 is not None:
            chosen = [(s2, e2)]
        for s, e in chosen:
            self.pos = s
            self.module_item()
        self.pos = after

    # -- instances -------------------------------------------------------------
    def gate_instance(self):
        line = self.peek().line
        gate = self.next().value
        if self.at("(") and self.peek(1).kind == "id" and self.peek(1).value.startswith(("strong", "weak", "pull", "supply", "highz")):
            self.skip_balanced()
        if self.accept("#"):
            if self.at("("):
                self.skip_balanced()
            else:
                self.next()
        while True:
            if self.peek().kind == "id":
                self.next()
                while self.at("["):
                    self.skip_balanced()
            self.expect("(")
            terms = [self.expr()]
            while self.accept(","):
                terms.append(self.expr())
            self.expect(")")
            if gate in ("buf", "not"):
                outs, ins = terms[:-1], terms[-1:]
            else:
                outs, ins = terms[:1], terms[1:]
            if gate == "buf":
                rhs = ins[0]
            elif gate == "not":
                rhs = Unary("~", ins[0])
            else:
                rhs = _fold(ins)
            for o in outs:
                self.assignments.append(Assignment(o, rhs, line=line))
            if not self.accept(","):
                break
        self.expect(";")

    def instance_or_typed_decl(self):
        line = self.peek().line
        start = self.pos
        target = self.expect_id()
        while self.at("::"):
            self.next()
            target += "::" + self.expect_id()
        overrides = []
        if self.accept("#"):
            if self.at("("):
                self.next()
                overrides = self.param_assignments()
            else:
                overrides = [("#0", render(self.primary()))]
        # user-typed declaration: `type_t name [, name];` or `type_t [3:0] name;`
        if not overrides and (self.at("[") or (self.peek().kind == "id" and self.peek(1).value in (";", ",", "=", "["))):
            if not (self.peek().kind == "id" and self.peek(1).value == "[" and self._looks_like_instance_array()):
                self.pos = start
                self.user_typed_decl()
                return
        while True:
            iname = self.expect_id()
            mult = 1
            while self.at("["):
                m, l = self.parse_range()
                mult *= abs(m - l) + 1
            if mult > 1:
                self.note(f"instance array {iname} of {mult} recorded once", line)
            self.expect("(")
            conns = self.connection_list()
            full = self.prefix + iname
            port_map = tuple((f, render(e) if e is not None else "") for f, e in conns)
            conns = tuple((f, self._prefixed(e) if e is not None else None) for f, e in conns)
            self.instances.append(
                InstanceDecl(full, target, port_map, conns, tuple(overrides), line)
            )
            if not self.accept(","):
                break
        self.expect(";")

    def _looks_like_instance_array(self):
        # name [range] ( -> instance array
        i = self.pos + 1
        depth = 0
        while i < len(self.toks):
            v = self.toks[i].value
            if v == "[":
                depth += 1
            elif v == "]":
                depth -= 1
                if depth == 0 and self.toks[i + 1].value != "[":
                    return self.toks[i + 1].value == "("
            i += 1
        return False

    def user_typed_decl(self):
        line = self.peek().line
        tname = self.expect_id()
        while self.at("::"):
            self.next()
            tname += "::" + self.expect_id()
        rng = self.parse_packed()
        self.note(f"user-defined type {tname} treated as {'given packed width' if rng else '1 bit'}", line)
        while True:
            dname = self.expect_id()
            depth = self.parse_unpacked(dname)
            msb, lsb = rng if rng else (0, 0)
            self.add_signal(dname, "other", msb, lsb, depth, line)
            if self.accept("="):
                self.expr()
            if not self.accept(","):
                break
        self.expect(";")

    def param_assignments(self):
        out = []
        idx = 0
        while not self.at(")"):
            if self.accept("."):
                pname = self.expect_id()
                self.expect("(")
                val = "" if self.at(")") else render(self.expr())
                self.expect(")")
                out.append((pname, val))
            else:
                out.append((f"#{idx}", render(self.expr())))
            idx += 1
            if not self.accept(","):
                break
        self.expect(")")
        return out

    def connection_list(self):
        conns = []
        idx = 0
        if self.accept(")"):
            return conns
        while True:
            if self.at(".*"):
                self.next()
                conns.append((".*", None))
                self.note("wildcard port connection .* resolved by name")
            elif self.accept("."):
                formal = self.expect_id()
                if self.accept("("):
                    actual = None if self.at(")") else self.expr()
                    self.expect(")")
                else:
                    actual = Id(formal)
                conns.append((formal, actual))
            elif self.at(",") or self.at(")"):
                conns.append((f"#{idx}", None))
            else:
                conns.append((f"#{idx}", self.expr()))
            idx += 1
            if not self.accept(","):
                break
        self.expect(")")
        return conns

    # -- procedural code ---------------------------------------------------------
    def proc_block(self, kind):
        keep = kind not in ("initial", "final")
        saved = len(self.assignments)
        self.statement(())
        if not keep:
            del self.assignments[saved:]

    def event_control(self):
        self.expect("@")
        if self.accept("*"):
            return
        if self.at("("):
            self.skip_balanced()
        else:
            self.next()

    def statement(self, controls):
        t = self.peek()
        v = t.value
        if t.kind == "op":
            if v == ";":
                self.next()
                return
            if v == "@":
                self.event_control()
                return self.statement(controls)
            if v == "#":
                self.next()
                self.skip_balanced() if self.at("(") else self.next()
                return self.statement(controls)
            if v == "{":
                return self.proc_assign(controls)
            raise ParseError(f"unexpected {v!r} in procedural code", self.file, t.line)
        if t.kind == "sysid":
            self.skip_to_semicolon()
            return
        if v in ("unique", "unique0", "priority"):
            self.next()
            return self.statement(controls)
        if v in ("begin", "fork"):
            self.next()
            self.skip_label()
            end = {"begin": ("end",), "fork": ("join", "join_any", "join_none")}[v]
            while not (self.peek().kind == "id" and self.peek().value in end):
                if self.peek().kind == "eof":
                    raise ParseError("missing end", self.file, self.peek().line)
                if self.peek().kind == "id" and (self.peek().value in VAR_TYPES or self.peek().value in LOOP_TYPES or self.peek().value in INT_TYPES) and self.peek(1).value not in ("=", "<="):
                    self.local_decl()
                    continue
                self.statement(controls)
            self.next()
            self.skip_label()
            return
        if v == "if":
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            inner = controls + (cond,)
            self.statement(inner)
            if self.is_kw("else"):
                self.next()
                self.statement(inner)
            return
        if v in ("case", "casez", "casex", "randcase"):
            self.next()
            self.expect("(")
            sel = self.expr()
            self.expect(")")
            if self.is_kw("inside"):
                self.next()
            inner = controls + (sel,)
            while not self.is_kw("endcase"):
                if self.peek().kind == "eof":
                    raise ParseError("missing endcase", self.file, t.line)
                if self.is_kw("default"):
                    self.next()
                    self.accept(":")
                else:
                    self.expr()
                    while self.accept(","):
                        self.expr()
                    self.expect(":")
                self.statement(inner)
            self.next()
            return
        if v == "for":
            line = self.next().line
            var, init, cond, step = self._loop_header()
            start, end = self._body_span()
            values = self._iterations(var, init, cond, step)
            saved = dict(self.bindings)
            if values is None:
                self.note(f"procedural loop over {var} has non-constant bounds; indices treated as unknown", line)
                self.pos = start
                self.statement(controls)
            else:
                for val in values:
                    self.bindings[var] = val
                    self.pos = start
                    self.statement(controls)
            self.bindings = saved
            self.pos = end
            return
        if v in ("while", "repeat"):
            self.next()
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            return self.statement(controls + ((cond,) if v == "while" else ()))
        if v == "forever":
            self.next()
            return self.statement(controls)
        if v == "foreach":
            self.next()
            self.skip_balanced()
            self.note("foreach loop body treated with unknown indices")
            return self.statement(controls)
        if v == "wait":
            self.next()
            self.skip_balanced()
            return self.statement(controls)
        if v in ("disable", "return", "break", "continue", "force", "release", "assign", "deassign", "void"):
            self.skip_to_semicolon()
            return
        if v in _BLOCK_PAIRS:
            self.next()
            self.skip_until_kw(_BLOCK_PAIRS[v])
            return
        if t.kind == "id" and self.peek(1).value == "(" and v not in self.signals and v not in self.ports:
            self.skip_to_semicolon()  # task call
            return
        if t.kind == "id" and self.peek(1).value == ";":
            self.skip_to_semicolon()
            return
        return self.proc_assign(controls)

    def local_decl(self):
        line = self.peek().line
        kind, rng, loop = self.parse_data_type()
        while True:
            dname = self.expect_id()
            self.parse_unpacked(dname)
            self.local_vars.add(dname)
            if self.accept("="):
                self.expr()
            if not self.accept(","):
                break
        self.expect(";")
        self.note("block-local variable declaration not counted as a design element", line)

    def proc_assign(self, controls):
        line = self.peek().line
        lhs = self.lvalue()
        if self.at("++") or self.at("--"):
            self.next()
            self.expect(";")
            self.assignments.append(Assignment(lhs, lhs, controls, True, line))
            return
        op = self.next()
        if op.value not in ("=", "<=", "+=", "-=", "|=", "&=", "^="):
            raise ParseError(f"expected assignment, found {op.value!r}", self.file, op.line)
        if self.at("#"):
            self.next()
            self.skip_balanced() if self.at("(") else self.next()
        elif self.at("@"):
            self.event_control()
        rhs = self.expr()
        if op.value not in ("=", "<="):
            rhs = Binary(op.value[0], lhs, rhs)
        self.expect(";")
        self.assignments.append(
            Assignment(self._prefixed(lhs), self._prefixed(rhs), tuple(self._prefixed(c) for c in controls), True, line)
        )

    # -- assembly ------------------------------------------------------------------
    def build(self, name, line) -> ModuleDecl:
        ports = []
        order = list(self.port_order) + [p for p in self.ports if p not in self.port_order]
        for pname in order:
            info = self.ports.get(pname)
            if info is None:
                self.note(f"header port {pname} has no direction declaration; assumed input")
                info = {"direction": "in", "msb": 0, "lsb": 0, "net_type": "wire"}
            ports.append(PortDecl(pname, info["direction"], info["msb"], info["lsb"], info["net_type"]))
        signals = [
            SignalDecl(sname, s["kind"] if s["kind"] in ("wire", "reg") else "other", s["msb"], s["lsb"], s["depth"])
            for sname, s in self.signals.items()
        ]
        return ModuleDecl(
            name=name,
            file=self.file or "",
            language=self.language,
            ports=tuple(ports),
            signals=tuple(signals),
            parameters=tuple(self.params),
            instances=tuple(self.instances),
            assignments=tuple(self.assignments),
            param_values=tuple(sorted(self.env.items())),
            notes=tuple(self.notes),
            line=line,
        )


def _fold(items):
    e = items[0]
    for x in items[1:]:
        e = Binary("&", e, x)
    return e


def parse_verilog_modules(text: str, file: str | None = None, language=Language.VERILOG):
    """Parse every module in already-preprocessed ``text``."""
    toks = tokenize(text)
    out = []
    for start, _end in find_module_spans(toks):
        p = ModuleParser(toks, start, file, language)
        out.append(p.parse())
    return out
