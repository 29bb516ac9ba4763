"""Parser and pretty-printer for the ``.lit`` litmus DSL.

Grammar (extensions over the minimal form are marked with *)::

    program   := "grid" INT "," INT ";" init* thread+ assertion?
    init      := "plain"* IDENT "=" INT ";"          (* "plain": repair-exempt)
    thread    := "thread" "<" INT "," INT ">" "{" stmt* "}"     (cta, gpu)
    stmt      := LOC "^" SCO_ORD "=" expr ";"
               | REG "=" LOC "^" SCO_ORD ";"
               | REG "=" "RMW" "^" SCO_ORD "(" LOC "," expr "," expr ")" ";"
               | REG "=" "FADD" "^" SCO_ORD "(" LOC "," expr ")" ";"   *
               | "FADD" "^" SCO_ORD "(" LOC "," expr ")" ";"           *
               | REG "=" expr ";"                                      *
               | "fence" "^" SCO_ORD ";"
               | "bar" "^" SCOPE "(" INT ")" ";"
               | "if" "(" expr ")" "{" stmt* "}" ("else" "{" stmt* "}")?
               | "while" "(" expr ")" "{" stmt* "}"
               | "block" ";"                                           *
    assertion := ("forall" | "exists") "(" expr ")" ";"

``SCO_ORD`` is written ``cta_rel``, ``gpu_acq_rel`` and so on. Conditions may
contain memory loads such as ``X^cta_acq == 0``. Assertions refer to registers
either bare (when unambiguous) or as ``tid:reg``, and to final memory values
by location name.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from scopedmc.program import (
    Assertion,
    Assign,
    Barrier,
    BinOp,
    Block,
    Cas,
    Const,
    Expr,
    Fadd,
    Fence,
    If,
    Load,
    LocRef,
    Not,
    Program,
    ProgramError,
    Read,
    RegRef,
    Stmt,
    Thread,
    While,
    Write,
    validate,
    walk,
)
from scopedmc.scopes import MemOrder, Scope, ThreadCoord

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|//[^\n]*|/\*.*?\*/)
  | (?P<int>\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>==|!=|<=|>=|&&|\|\||[-+<>=;,(){}^:!])
    """,
    re.VERBOSE | re.DOTALL,
)

_KEYWORDS = {"grid", "thread", "fence", "bar", "if", "else", "while", "block",
             "forall", "exists", "RMW", "FADD", "plain", "true", "false"}


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Token]:
    out: list[Token] = []
    pos, line, line_start = 0, 1, 0
    while pos < len(src):
        m = _TOKEN.match(src, pos)
        if m is None:
            raise ProgramError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        if kind != "ws":
            out.append(Token(kind, text, line, pos - line_start + 1))
        nl = text.count("\n")
        if nl:
            line += nl
            line_start = pos + text.rindex("\n") + 1
        pos = m.end()
    out.append(Token("eof", "", line, pos - line_start + 1))
    return out


def _split_scope_order(tok: Token) -> tuple[Scope, MemOrder]:
    head, sep, tail = tok.text.partition("_")
    if not sep:
        raise ProgramError(f"expected scope_order, got {tok.text!r}", tok.line, tok.col)
    try:
        return Scope.parse(head), MemOrder.parse(tail)
    except ValueError as exc:
        raise ProgramError(str(exc), tok.line, tok.col) from None


class _Parser:
    def __init__(self, src: str, name: str):
        self.toks = tokenize(src)
        self.i = 0
        self.name = name
        self.locs: dict[str, int] = {}
        self.in_assertion = False

    # -- token helpers -----------------------------------------------------
    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def error(self, msg: str, tok: Token | None = None) -> ProgramError:
        tok = tok or self.tok
        return ProgramError(msg, tok.line, tok.col)

    def accept(self, text: str) -> Token | None:
        if self.tok.text == text and self.tok.kind != "eof":
            t = self.tok
            self.i += 1
            return t
        return None

    def expect(self, text: str) -> Token:
        t = self.accept(text)
        if t is None:
            raise self.error(f"expected {text!r}, got {self.tok.text or 'end of input'!r}")
        return t

    def expect_int(self) -> int:
        neg = self.accept("-") is not None
        if self.tok.kind != "int":
            raise self.error(f"expected integer, got {self.tok.text!r}")
        v = int(self.tok.text)
        self.i += 1
        return -v if neg else v

    def expect_ident(self, what: str = "identifier") -> Token:
        if self.tok.kind != "ident" or self.tok.text in _KEYWORDS:
            raise self.error(f"expected {what}, got {self.tok.text!r}")
        t = self.tok
        self.i += 1
        return t

    def label(self, tok: Token) -> str:
        prefix = f"{self.name}:" if self.name else ""
        return f"{prefix}{tok.line}:{tok.col}"

    # -- program -----------------------------------------------------------
    def program(self) -> Program:
        self.expect("grid")
        grid = (self.expect_int(), None)
        self.expect(",")
        grid = (grid[0], self.expect_int())
        self.expect(";")
        init: list[tuple[str, int]] = []
        exempt: set[str] = set()
        while self.tok.text not in ("thread", "forall", "exists", ""):
            plain = False
            while self.accept("plain"):
                plain = True
            name = self.expect_ident("location name")
            if name.text in self.locs:
                raise self.error(f"duplicate location {name.text!r}", name)
            self.expect("=")
            value = self.expect_int()
            self.expect(";")
            self.locs[name.text] = value
            init.append((name.text, value))
            if plain:
                exempt.add(name.text)
        threads: list[Thread] = []
        while self.tok.text == "thread":
            threads.append(self.thread(len(threads) + 1))
        if not threads:
            raise self.error("program declares no threads")
        assertion = None
        if self.tok.text in ("forall", "exists"):
            assertion = self.assertion(threads)
        if self.tok.kind != "eof":
            raise self.error(f"unexpected {self.tok.text!r}")
        return Program(grid, tuple(init), tuple(threads), assertion, frozenset(exempt))

    def thread(self, tid: int) -> Thread:
        self.expect("thread")
        self.expect("<")
        cta = self.expect_int()
        self.expect(",")
        gpu = self.expect_int()
        self.expect(">")
        return Thread(ThreadCoord(tid, cta, gpu), self.block())

    def block(self) -> tuple[Stmt, ...]:
        self.expect("{")
        body: list[Stmt] = []
        while not self.accept("}"):
            if self.tok.kind == "eof":
                raise self.error("unterminated block")
            body.append(self.stmt())
        return tuple(body)

    def scope_order(self) -> tuple[Scope, MemOrder]:
        self.expect("^")
        tok = self.tok
        if tok.kind != "ident":
            raise self.error("expected scope_order")
        self.i += 1
        return _split_scope_order(tok)

    def location(self) -> str:
        tok = self.expect_ident("location")
        if tok.text not in self.locs:
            raise self.error(f"unknown location {tok.text!r}", tok)
        return tok.text

    def stmt(self) -> Stmt:
        tok = self.tok
        lab = self.label(tok)
        if self.accept("fence"):
            sco, ord_ = self.scope_order()
            self.expect(";")
            return Fence(sco, ord_, lab)
        if self.accept("bar"):
            self.expect("^")
            stok = self.expect_ident("scope")
            try:
                sco = Scope.parse(stok.text)
            except ValueError as exc:
                raise self.error(str(exc), stok) from None
            self.expect("(")
            bid = self.expect_int()
            self.expect(")")
            self.expect(";")
            return Barrier(sco, bid, lab)
        if self.accept("if"):
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            then = self.block()
            orelse: tuple[Stmt, ...] = ()
            if self.accept("else"):
                orelse = self.block()
            return If(cond, then, orelse, lab)
        if self.accept("while"):
            self.expect("(")
            cond = self.expr()
            self.expect(")")
            return While(cond, self.block(), lab)
        if self.accept("block"):
            self.expect(";")
            return Block(label=lab)
        if self.accept("FADD"):
            return self.fadd(None, lab)
        name = self.expect_ident("statement")
        if name.text in self.locs:
            sco, ord_ = self.scope_order()
            self.expect("=")
            value = self.expr()
            self.expect(";")
            return Write(name.text, sco, ord_, value, lab)
        if self.tok.text == "^":
            raise self.error(f"unknown location {name.text!r}", name)
        reg = name.text
        self.expect("=")
        if self.accept("RMW"):
            sco, ord_ = self.scope_order()
            self.expect("(")
            loc = self.location()
            self.expect(",")
            expected = self.expr()
            self.expect(",")
            new = self.expr()
            self.expect(")")
            self.expect(";")
            return Cas(reg, loc, sco, ord_, expected, new, lab)
        if self.accept("FADD"):
            return self.fadd(reg, lab)
        if self.tok.text in self.locs and self.peek().text == "^" and self.peek(3).text == ";":
            loc = self.location()
            sco, ord_ = self.scope_order()
            self.expect(";")
            return Read(reg, loc, sco, ord_, lab)
        value = self.expr()
        self.expect(";")
        return Assign(reg, value, lab)

    def fadd(self, reg: str | None, lab: str) -> Fadd:
        sco, ord_ = self.scope_order()
        self.expect("(")
        loc = self.location()
        self.expect(",")
        addend = self.expr()
        self.expect(")")
        self.expect(";")
        return Fadd(reg, loc, sco, ord_, addend, lab)

    # -- expressions -------------------------------------------------------
    def expr(self) -> Expr:
        lhs = self.conj()
        while self.accept("||"):
            lhs = BinOp("||", lhs, self.conj())
        return lhs

    def conj(self) -> Expr:
        lhs = self.neg()
        while self.accept("&&"):
            lhs = BinOp("&&", lhs, self.neg())
        return lhs

    def neg(self) -> Expr:
        if self.accept("!"):
            return Not(self.neg())
        return self.cmp()

    def cmp(self) -> Expr:
        lhs = self.sum()
        if self.tok.text in ("==", "!=", "<", "<=", ">", ">="):
            op = self.tok.text
            self.i += 1
            return BinOp(op, lhs, self.sum())
        return lhs

    def sum(self) -> Expr:
        lhs = self.atom()
        while self.tok.text in ("+", "-"):
            op = self.tok.text
            self.i += 1
            lhs = BinOp(op, lhs, self.atom())
        return lhs

    def atom(self) -> Expr:
        tok = self.tok
        if tok.kind == "int" or (tok.text == "-" and self.peek().kind == "int"):
            v = self.expect_int()
            if self.in_assertion and v >= 0 and self.accept(":"):
                reg = self.expect_ident("register")
                return RegRef(reg.text, v)
            return Const(v)
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("true"):
            return Const(1)
        if self.accept("false"):
            return Const(0)
        name = self.expect_ident("expression")
        if name.text in self.locs:
            if self.in_assertion:
                return LocRef(name.text)
            if self.tok.text != "^":
                raise self.error(f"location {name.text!r} needs a scope and order", name)
            sco, ord_ = self.scope_order()
            return Load(name.text, sco, ord_)
        if self.tok.text == "^":
            raise self.error(f"unknown location {name.text!r}", name)
        return RegRef(name.text)

    def assertion(self, threads: list[Thread]) -> Assertion:
        quant = self.tok.text
        self.i += 1
        self.expect("(")
        self.in_assertion = True
        expr = self.expr()
        self.in_assertion = False
        self.expect(")")
        self.expect(";")
        return Assertion(quant, _resolve_regs(expr, threads))


def _defined_regs(t: Thread) -> set[str]:
    regs = set()
    for s in walk(t.body):
        reg = getattr(s, "reg", None)
        if reg is not None:
            regs.add(reg)
    return regs


def _resolve_regs(e: Expr, threads: list[Thread]) -> Expr:
    owners: dict[str, list[int]] = {}
    for t in threads:
        for r in _defined_regs(t):
            owners.setdefault(r, []).append(t.coord.tid)

    def go(x: Expr) -> Expr:
        if isinstance(x, RegRef):
            if x.tid is not None:
                if not 1 <= x.tid <= len(threads):
                    raise ProgramError(f"assertion names unknown thread {x.tid}")
                return x
            tids = owners.get(x.name, [])
            if len(tids) != 1:
                what = "unknown" if not tids else "ambiguous"
                raise ProgramError(f"{what} register {x.name!r} in assertion; write tid:{x.name}")
            return RegRef(x.name, tids[0])
        if isinstance(x, BinOp):
            return BinOp(x.op, go(x.lhs), go(x.rhs))
        if isinstance(x, Not):
            return Not(go(x.arg))
        return x

    return go(e)


def parse(src: str, name: str = "") -> Program:
    """Parse and validate a litmus program."""
    p = _Parser(src, name).program()
    validate(p)
    for t in p.threads:
        for s in walk(t.body):
            exprs = [getattr(s, a) for a in ("value", "expected", "new", "addend")
                     if hasattr(s, a)]
            for e in exprs:
                if _has_load(e):
                    raise ProgramError(f"memory loads are only allowed in conditions ({s.label})")
    return p


def _has_load(e: Expr) -> bool:
    if isinstance(e, Load):
        return True
    if isinstance(e, BinOp):
        return _has_load(e.lhs) or _has_load(e.rhs)
    if isinstance(e, Not):
        return _has_load(e.arg)
    return False


def parse_file(path: str) -> Program:
    import os

    with open(path, encoding="utf-8") as fh:
        return parse(fh.read(), os.path.basename(path))


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------


def format_expr(e: Expr, top: bool = True) -> str:
    if isinstance(e, Const):
        return str(e.value)
    if isinstance(e, RegRef):
        return e.name if e.tid is None else f"{e.tid}:{e.name}"
    if isinstance(e, LocRef):
        return e.name
    if isinstance(e, Load):
        return f"{e.loc}^{e.sco}_{e.ord}"
    if isinstance(e, Not):
        return "!" + format_expr(e.arg, top=False)
    text = f"{format_expr(e.lhs, False)} {e.op} {format_expr(e.rhs, False)}"
    return text if top else f"({text})"


def _format_body(body: tuple[Stmt, ...], indent: int, out: list[str]) -> None:
    pad = "  " * indent
    for s in body:
        if isinstance(s, Read):
            out.append(f"{pad}{s.reg} = {s.loc}^{s.sco}_{s.ord};")
        elif isinstance(s, Write):
            out.append(f"{pad}{s.loc}^{s.sco}_{s.ord} = {format_expr(s.value)};")
        elif isinstance(s, Cas):
            out.append(f"{pad}{s.reg} = RMW^{s.sco}_{s.ord}({s.loc}, "
                       f"{format_expr(s.expected)}, {format_expr(s.new)});")
        elif isinstance(s, Fadd):
            lhs = f"{s.reg} = " if s.reg is not None else ""
            out.append(f"{pad}{lhs}FADD^{s.sco}_{s.ord}({s.loc}, {format_expr(s.addend)});")
        elif isinstance(s, Fence):
            out.append(f"{pad}fence^{s.sco}_{s.ord};")
        elif isinstance(s, Barrier):
            out.append(f"{pad}bar^{s.sco}({s.bid});")
        elif isinstance(s, Assign):
            out.append(f"{pad}{s.reg} = {format_expr(s.value)};")
        elif isinstance(s, Block):
            out.append(f"{pad}block;")
        elif isinstance(s, If):
            out.append(f"{pad}if ({format_expr(s.cond)}) {{")
            _format_body(s.then, indent + 1, out)
            if s.orelse:
                out.append(f"{pad}}} else {{")
                _format_body(s.orelse, indent + 1, out)
            out.append(f"{pad}}}")
        elif isinstance(s, While):
            out.append(f"{pad}while ({format_expr(s.cond)}) {{")
            _format_body(s.body, indent + 1, out)
            out.append(f"{pad}}}")
        else:  # pragma: no cover
            raise TypeError(s)


def format_program(p: Program) -> str:
    out = [f"grid {p.grid[0]}, {p.grid[1]};"]
    for name, value in p.init:
        plain = "plain " if name in p.exempt else ""
        out.append(f"{plain}{name} = {value};")
    for t in p.threads:
        out.append(f"thread<{t.coord.cta}, {t.coord.gpu}> {{")
        _format_body(t.body, 1, out)
        out.append("}")
    if p.assertion is not None:
        out.append(f"{p.assertion.quantifier} ({format_expr(p.assertion.expr)});")
    return "\n".join(out) + "\n"
