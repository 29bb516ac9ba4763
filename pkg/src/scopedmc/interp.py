"""Deterministic replay of one thread's code against the values its reads returned."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Generator, Iterable

from scopedmc.program import (
    Assign,
    BarrierWait,
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
    Read,
    RegRef,
    Stmt,
    While,
    Write,
    wrap64,
)
from scopedmc.scopes import MemOrder, Scope


@dataclass(frozen=True, slots=True)
class Op:
    """A memory effect the thread wants to perform next."""

    kind: str  # "R" | "W" | "F"
    loc: str | None
    ord: MemOrder
    sco: Scope
    val: int | None
    rmw: bool
    label: str


@dataclass(frozen=True)
class ThreadState:
    status: str  # "run" | "done" | "blocked"
    pending: Op | None
    regs: tuple[tuple[str, int], ...]
    block: Block | None = None

    @property
    def barrier(self) -> BarrierWait | None:
        return self.block.origin if self.block is not None else None


class _Blocked(Exception):
    def __init__(self, block: Block):
        self.block = block


_CMP = {
    "==": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
    "<": lambda a, b: int(a < b),
    "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b),
    ">=": lambda a, b: int(a >= b),
}

_Gen = Generator[Op, "int | None", None]


def _eval(e: Expr, regs: dict[str, int], label: str) -> Generator[Op, "int | None", int]:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, RegRef):
        return regs.get(e.name, 0)
    if isinstance(e, Load):
        v = yield Op("R", e.loc, e.ord, e.sco, None, False, label)
        return v
    if isinstance(e, Not):
        v = yield from _eval(e.arg, regs, label)
        return int(not v)
    if isinstance(e, BinOp):
        a = yield from _eval(e.lhs, regs, label)
        if e.op == "&&" and not a:
            return 0
        if e.op == "||" and a:
            return 1
        b = yield from _eval(e.rhs, regs, label)
        if e.op == "+":
            return wrap64(a + b)
        if e.op == "-":
            return wrap64(a - b)
        if e.op in ("&&", "||"):
            return int(bool(b))
        return _CMP[e.op](a, b)
    raise TypeError(f"cannot evaluate {e!r} in thread code")


def _run(body: Iterable[Stmt], regs: dict[str, int]) -> _Gen:
    for s in body:
        if isinstance(s, Read):
            regs[s.reg] = yield Op("R", s.loc, s.ord, s.sco, None, False, s.label)
        elif isinstance(s, Write):
            v = yield from _eval(s.value, regs, s.label)
            yield Op("W", s.loc, s.ord, s.sco, v, False, s.label)
        elif isinstance(s, Cas):
            expected = yield from _eval(s.expected, regs, s.label)
            new = yield from _eval(s.new, regs, s.label)
            old = yield Op("R", s.loc, s.ord, s.sco, None, True, s.label)
            regs[s.reg] = old
            if old == expected:
                yield Op("W", s.loc, s.ord, s.sco, new, True, s.label)
        elif isinstance(s, Fadd):
            addend = yield from _eval(s.addend, regs, s.label)
            old = yield Op("R", s.loc, s.ord, s.sco, None, True, s.label)
            if s.reg is not None:
                regs[s.reg] = old
            yield Op("W", s.loc, s.ord, s.sco, wrap64(old + addend), True, s.label)
        elif isinstance(s, Fence):
            yield Op("F", None, s.ord, s.sco, None, False, s.label)
        elif isinstance(s, Assign):
            regs[s.reg] = yield from _eval(s.value, regs, s.label)
        elif isinstance(s, If):
            c = yield from _eval(s.cond, regs, s.label)
            yield from _run(s.then if c else s.orelse, regs)
        elif isinstance(s, Block):
            raise _Blocked(s)
        elif isinstance(s, While):
            raise ValueError("loops must be unrolled before execution")
        else:
            raise ValueError(f"statement {type(s).__name__} must be lowered before execution")


def replay(body: tuple[Stmt, ...], read_values: Iterable[int | None]) -> ThreadState:
    """Run ``body`` feeding ``read_values`` to its reads, in order.

    ``read_values`` holds one entry per event the thread already executed
    (``None`` for writes and fences). Returns what the thread does next.
    """
    regs: dict[str, int] = {}
    gen = _run(body, regs)
    try:
        op = next(gen)
        for v in read_values:
            op = gen.send(v if op.kind == "R" else None)
    except StopIteration:
        return ThreadState("done", None, tuple(sorted(regs.items())))
    except _Blocked as b:
        return ThreadState("blocked", None, tuple(sorted(regs.items())), b.block)
    return ThreadState("run", op, tuple(sorted(regs.items())))


class Interpreter:
    """Memoized per-thread replay for one lowered program."""

    def __init__(self, program: Program, cache_limit: int = 200_000):
        self.program = program
        self._bodies = {t.coord.tid: t.body for t in program.threads}
        self._cache: dict[tuple[int, tuple[int | None, ...]], ThreadState] = {}
        self._limit = cache_limit

    def state(self, tid: int, read_values: tuple[int | None, ...]) -> ThreadState:
        key = (tid, read_values)
        st = self._cache.get(key)
        if st is None:
            if len(self._cache) >= self._limit:
                self._cache.clear()
            st = replay(self._bodies[tid], read_values)
            self._cache[key] = st
        return st


def eval_assertion(e: Expr, regs: dict[int, dict[str, int]], memory: dict[str, int]) -> int:
    """Evaluate an assertion over final registers (per tid) and final memory."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, RegRef):
        return regs.get(e.tid, {}).get(e.name, 0)
    if isinstance(e, LocRef):
        return memory[e.name]
    if isinstance(e, Not):
        return int(not eval_assertion(e.arg, regs, memory))
    if isinstance(e, BinOp):
        a = eval_assertion(e.lhs, regs, memory)
        b = eval_assertion(e.rhs, regs, memory)
        if e.op == "+":
            return wrap64(a + b)
        if e.op == "-":
            return wrap64(a - b)
        if e.op == "&&":
            return int(bool(a) and bool(b))
        if e.op == "||":
            return int(bool(a) or bool(b))
        return _CMP[e.op](a, b)
    raise TypeError(f"cannot evaluate {e!r} in an assertion")
