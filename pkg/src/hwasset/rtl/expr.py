"""Verilog lexing, expression trees and constant evaluation."""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Optional

from ..errors import ParseError


@dataclass(frozen=True)
class Token:
    kind: str  # id | sysid | num | str | op | eof
    value: str
    line: int


_OPS = [
    "<<<=", ">>>=", "<<<", ">>>", "===", "!==", "==?", "!=?",
    "**", "<=", ">=", "==", "!=", "&&", "||", "<<", ">>", "~&", "~|", "~^", "^~",
    "+:", "-:", "::", "->", "++", "--", "+=", "-=", "|=", "&=", "^=", ".*",
]
_SINGLE = set("()[]{};:,.#@=+-*/%&|^~!?<>'$")

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<str>"(?:\\.|[^"\\\n])*")
  | (?P<based>(?:\d[\d_]*\s*)?'[sS]?[bBoOdDhH]\s*[0-9a-fA-FxXzZ_?]+)
  | (?P<fill>'[01xXzZ](?![\w]))
  | (?P<real>\d[\d_]*\.\d[\d_]*(?:[eE][+-]?\d+)?|\d[\d_]*[eE][+-]?\d+)
  | (?P<dec>\d[\d_]*)
  | (?P<esc>\\\S+)
  | (?P<sysid>\$[A-Za-z_][\w$]*)
  | (?P<id>[A-Za-z_][\w$]*)
    """,
    re.VERBOSE,
)


def tokenize(text: str, line: int = 1) -> list[Token]:
    toks: list[Token] = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m:
            kind = m.lastgroup
            val = m.group()
            if kind == "nl":
                line += 1
            elif kind == "ws":
                pass
            elif kind in ("based", "fill", "real", "dec"):
                toks.append(Token("num", val, line))
            elif kind == "esc":
                toks.append(Token("id", val[1:], line))
            else:
                toks.append(Token(kind, val, line))
            pos = m.end()
            continue
        for op in _OPS:
            if text.startswith(op, pos):
                toks.append(Token("op", op, line))
                pos += len(op)
                break
        else:
            ch = text[pos]
            if ch in _SINGLE or ch == "`" or ch == "\\":
                toks.append(Token("op", ch, line))
                pos += 1
            else:
                raise ParseError(f"unexpected character {ch!r}", line=line)
    toks.append(Token("eof", "", line))
    return toks


# --- expression trees -------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: Optional[int]  # None when the literal carries x/z digits
    width: Optional[int] = None
    text: str = ""


@dataclass(frozen=True)
class Id:
    name: str


@dataclass(frozen=True)
class Index:
    base: object
    index: object


@dataclass(frozen=True)
class Slice:
    base: object
    left: object
    right: object
    mode: str = ":"  # ":" | "+:" | "-:"


@dataclass(frozen=True)
class Concat:
    items: tuple


@dataclass(frozen=True)
class Repl:
    count: object
    items: tuple


@dataclass(frozen=True)
class Unary:
    op: str
    operand: object


@dataclass(frozen=True)
class Binary:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Ternary:
    cond: object
    then: object
    other: object


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


@dataclass(frozen=True)
class Str:
    value: str


def parse_number(text: str) -> Num:
    t = text.replace("_", "").replace(" ", "")
    if "'" not in t:
        if "." in t or "e" in t.lower():
            return Num(int(float(t)), None, text)
        return Num(int(t), None, text)
    size_s, rest = t.split("'", 1)
    if rest in ("0", "1", "x", "X", "z", "Z"):
        return Num(int(rest) if rest in "01" else None, None, text)
    if rest[0] in "sS":
        rest = rest[1:]
    base = {"b": 2, "o": 8, "d": 10, "h": 16}[rest[0].lower()]
    digits = rest[1:]
    width = int(size_s) if size_s else None
    if re.search(r"[xXzZ?]", digits):
        return Num(None, width, text)
    return Num(int(digits, base), width, text)


_BINARY_PREC = [
    ("||",),
    ("&&",),
    ("|", "~|"),
    ("^", "~^", "^~"),
    ("&", "~&"),
    ("==", "!=", "===", "!==", "==?", "!=?"),
    ("<", "<=", ">", ">="),
    ("<<", ">>", "<<<", ">>>"),
    ("+", "-"),
    ("*", "/", "%"),
    ("**",),
]
_UNARY = {"+", "-", "!", "~", "&", "|", "^", "~&", "~|", "~^", "^~"}


class ExprParser:
    """Recursive-descent expression parser over a shared token list."""

    def __init__(self, tokens: list[Token], pos: int = 0, file: str | None = None):
        self.toks = tokens
        self.pos = pos
        self.file = file

    # token helpers
    def peek(self, k: int = 0) -> Token:
        i = min(self.pos + k, len(self.toks) - 1)
        return self.toks[i]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def at(self, value: str, k: int = 0) -> bool:
        t = self.peek(k)
        return t.value == value and t.kind in ("op", "id")

    def accept(self, value: str) -> bool:
        if self.at(value):
            self.pos += 1
            return True
        return False

    def expect(self, value: str) -> Token:
        t = self.peek()
        if not self.at(value):
            raise ParseError(f"expected {value!r}, found {t.value or 'end of input'!r}", self.file, t.line)
        return self.next()

    def expect_id(self) -> str:
        t = self.peek()
        if t.kind != "id":
            raise ParseError(f"expected identifier, found {t.value or 'end of input'!r}", self.file, t.line)
        self.pos += 1
        return t.value

    # expressions
    def expr(self):
        cond = self._binary(0)
        if self.accept("?"):
            a = self.expr()
            self.expect(":")
            b = self.expr()
            return Ternary(cond, a, b)
        return cond

    def _binary(self, level: int):
        if level == len(_BINARY_PREC):
            return self._unary()
        left = self._binary(level + 1)
        ops = _BINARY_PREC[level]
        while self.peek().kind == "op" and self.peek().value in ops:
            op = self.next().value
            right = self._binary(level + 1) if op != "**" else self._binary(level)
            left = Binary(op, left, right)
            if op == "**":
                break
        return left

    def _unary(self):
        t = self.peek()
        if t.kind == "op" and t.value in _UNARY:
            self.next()
            return Unary(t.value, self._unary())
        return self.postfix(self.primary())

    def primary(self):
        t = self.peek()
        if t.kind == "num":
            self.next()
            return parse_number(t.value)
        if t.kind == "str":
            self.next()
            return Str(t.value[1:-1])
        if t.kind == "sysid":
            self.next()
            args = self._call_args() if self.at("(") else ()
            return Call(t.value, args)
        if t.kind == "id":
            self.next()
            name = t.value
            while self.at("::") or (self.at(".") and self.peek(1).kind == "id"):
                sep = self.next().value
                name += sep + self.expect_id()
            if self.at("(") :
                return Call(name, self._call_args())
            if self.at("'") and self.peek(1).value == "(":
                self.next()
                self.expect("(")
                inner = self.expr()
                self.expect(")")
                return Call(name + "'", (inner,))
            return Id(name)
        if t.value == "(":
            self.next()
            e = self.expr()
            if self.accept(":"):  # min:typ:max
                self.expr()
                self.expect(":")
                self.expr()
            self.expect(")")
            return e
        if t.value == "{":
            return self.concat()
        if t.value == "'" and self.peek(1).value == "{":
            self.next()
            return self.concat()
        raise ParseError(f"unexpected token {t.value or 'end of input'!r} in expression", self.file, t.line)

    def _call_args(self) -> tuple:
        self.expect("(")
        args = []
        if not self.at(")"):
            args.append(self.expr())
            while self.accept(","):
                args.append(self.expr())
        self.expect(")")
        return tuple(args)

    def concat(self):
        self.expect("{")
        first = self.expr()
        if self.at("{"):
            self.next()
            items = [self.expr()]
            while self.accept(","):
                items.append(self.expr())
            self.expect("}")
            self.expect("}")
            return Repl(first, tuple(items))
        items = [first]
        while self.accept(","):
            items.append(self.expr())
        self.expect("}")
        return Concat(tuple(items))

    def postfix(self, base):
        while self.at("["):
            self.next()
            left = self.expr()
            if self.at(":") or self.at("+:") or self.at("-:"):
                mode = self.next().value
                right = self.expr()
                self.expect("]")
                base = Slice(base, left, right, mode)
            else:
                self.expect("]")
                base = Index(base, left)
        return base

    def lvalue(self):
        if self.at("{"):
            return self.concat()
        name = self.expect_id()
        while self.at(".") and self.peek(1).kind == "id":
            self.next()
            name += "." + self.expect_id()
        return self.postfix(Id(name))


def parse_expr_text(text: str):
    p = ExprParser(tokenize(text))
    e = p.expr()
    if p.peek().kind != "eof":
        raise ParseError(f"trailing input in expression {text!r}")
    return e


# --- evaluation -------------------------------------------------------------


class NotConstant(Exception):
    pass


def _clog2(v: int) -> int:
    return 0 if v <= 1 else math.ceil(math.log2(v))


def const_eval(e, env: dict) -> int:
    if isinstance(e, Num):
        if e.value is None:
            raise NotConstant("x/z literal")
        return e.value
    if isinstance(e, Id):
        if e.name in env:
            return env[e.name]
        short = e.name.split("::")[-1]
        if short in env:
            return env[short]
        raise NotConstant(e.name)
    if isinstance(e, Unary):
        v = const_eval(e.operand, env)
        if e.op == "-":
            return -v
        if e.op == "+":
            return v
        if e.op == "!":
            return int(not v)
        if e.op == "~":
            return ~v
        raise NotConstant(e.op)
    if isinstance(e, Binary):
        a = const_eval(e.left, env)
        b = const_eval(e.right, env)
        op = e.op
        if op == "+":
            return a + b
        if op == "-":
            return a - b
        if op == "*":
            return a * b
        if op == "/":
            if b == 0:
                raise NotConstant("division by zero")
            return int(a / b)
        if op == "%":
            if b == 0:
                raise NotConstant("modulo by zero")
            return a % b
        if op == "**":
            return a**b
        if op in ("<<", "<<<"):
            return a << b
        if op in (">>", ">>>"):
            return a >> b
        if op in ("==", "==="):
            return int(a == b)
        if op in ("!=", "!=="):
            return int(a != b)
        if op == "<":
            return int(a < b)
        if op == "<=":
            return int(a <= b)
        if op == ">":
            return int(a > b)
        if op == ">=":
            return int(a >= b)
        if op == "&&":
            return int(bool(a) and bool(b))
        if op == "||":
            return int(bool(a) or bool(b))
        if op == "&":
            return a & b
        if op == "|":
            return a | b
        if op == "^":
            return a ^ b
        raise NotConstant(op)
    if isinstance(e, Ternary):
        return const_eval(e.then if const_eval(e.cond, env) else e.other, env)
    if isinstance(e, Call):
        if e.name == "$clog2" and len(e.args) == 1:
            return _clog2(const_eval(e.args[0], env))
        if e.name in ("$signed", "$unsigned") and len(e.args) == 1:
            return const_eval(e.args[0], env)
        raise NotConstant(e.name)
    raise NotConstant(type(e).__name__)


def try_const(e, env: dict) -> Optional[int]:
    try:
        return const_eval(e, env)
    except NotConstant:
        return None


def subst(e, mapping: dict):
    """Replace identifiers named in ``mapping`` by integer literals."""
    if not mapping:
        return e
    if isinstance(e, Id):
        if e.name in mapping:
            return Num(mapping[e.name], None, str(mapping[e.name]))
        return e
    if isinstance(e, Index):
        return Index(subst(e.base, mapping), subst(e.index, mapping))
    if isinstance(e, Slice):
        return Slice(subst(e.base, mapping), subst(e.left, mapping), subst(e.right, mapping), e.mode)
    if isinstance(e, Concat):
        return Concat(tuple(subst(i, mapping) for i in e.items))
    if isinstance(e, Repl):
        return Repl(subst(e.count, mapping), tuple(subst(i, mapping) for i in e.items))
    if isinstance(e, Unary):
        return Unary(e.op, subst(e.operand, mapping))
    if isinstance(e, Binary):
        return Binary(e.op, subst(e.left, mapping), subst(e.right, mapping))
    if isinstance(e, Ternary):
        return Ternary(subst(e.cond, mapping), subst(e.then, mapping), subst(e.other, mapping))
    if isinstance(e, Call):
        return Call(e.name, tuple(subst(a, mapping) for a in e.args))
    return e


def identifiers(e) -> set[str]:
    """Names of all identifiers referenced anywhere in ``e``."""
    out: set[str] = set()

    def walk(x):
        if isinstance(x, Id):
            out.add(x.name)
        elif isinstance(x, Index):
            walk(x.base)
            walk(x.index)
        elif isinstance(x, Slice):
            walk(x.base)
            walk(x.left)
            walk(x.right)
        elif isinstance(x, (Concat,)):
            for i in x.items:
                walk(i)
        elif isinstance(x, Repl):
            walk(x.count)
            for i in x.items:
                walk(i)
        elif isinstance(x, Unary):
            walk(x.operand)
        elif isinstance(x, Binary):
            walk(x.left)
            walk(x.right)
        elif isinstance(x, Ternary):
            walk(x.cond)
            walk(x.then)
            walk(x.other)
        elif isinstance(x, Call):
            for a in x.args:
                walk(a)

    walk(e)
    return out


def render(e) -> str:
    """Verilog-ish source text for an expression tree."""
    if e is None:
        return ""
    if isinstance(e, Num):
        return e.text or str(e.value)
    if isinstance(e, Id):
        return e.name
    if isinstance(e, Str):
        return f'"{e.value}"'
    if isinstance(e, Index):
        return f"{render(e.base)}[{render(e.index)}]"
    if isinstance(e, Slice):
        return f"{render(e.base)}[{render(e.left)}{e.mode}{render(e.right)}]"
    if isinstance(e, Concat):
        return "{" + ", ".join(render(i) for i in e.items) + "}"
    if isinstance(e, Repl):
        return "{" + render(e.count) + "{" + ", ".join(render(i) for i in e.items) + "}}"
    if isinstance(e, Unary):
        return f"{e.op}{_paren(e.operand)}"
    if isinstance(e, Binary):
        return f"{_paren(e.left)} {e.op} {_paren(e.right)}"
    if isinstance(e, Ternary):
        return f"{_paren(e.cond)} ? {_paren(e.then)} : {_paren(e.other)}"
    if isinstance(e, Call):
        return f"{e.name}(" + ", ".join(render(a) for a in e.args) + ")"
    return str(e)


def _paren(e) -> str:
    s = render(e)
    return f"({s})" if isinstance(e, (Binary, Ternary)) else s
