"""Litmus program AST, validation, loop unrolling and barrier desugaring."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterator, Union

from scopedmc.scopes import (
    FENCE_ORDERS,
    READ_ORDERS,
    RMW_ORDERS,
    WRITE_ORDERS,
    MemOrder,
    Scope,
    ThreadCoord,
)


class ProgramError(Exception):
    """Invalid program, with an optional source position."""

    def __init__(self, msg: str, line: int | None = None, col: int | None = None):
        self.msg = msg
        self.line = line
        self.col = col
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(where + msg)


# ---------------------------------------------------------------------------
# Expressions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class RegRef:
    name: str
    tid: int | None = None  # only used in assertions ("1:a")


@dataclass(frozen=True)
class LocRef:
    """Final memory value of a location (assertions only)."""

    name: str


@dataclass(frozen=True)
class Load:
    """A memory read inside a condition, e.g. ``while (X^cta_acq == 0)``."""

    loc: str
    sco: Scope
    ord: MemOrder


@dataclass(frozen=True)
class BinOp:
    op: str  # + - == != < <= > >= && ||
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Not:
    arg: Expr


Expr = Union[Const, RegRef, LocRef, Load, BinOp, Not]

_INT64 = 1 << 64


def wrap64(v: int) -> int:
    return ((v + (1 << 63)) % _INT64) - (1 << 63)


def expr_loads(e: Expr) -> Iterator[Load]:
    if isinstance(e, Load):
        yield e
    elif isinstance(e, BinOp):
        yield from expr_loads(e.lhs)
        yield from expr_loads(e.rhs)
    elif isinstance(e, Not):
        yield from expr_loads(e.arg)


def expr_regs(e: Expr) -> Iterator[RegRef]:
    if isinstance(e, RegRef):
        yield e
    elif isinstance(e, BinOp):
        yield from expr_regs(e.lhs)
        yield from expr_regs(e.rhs)
    elif isinstance(e, Not):
        yield from expr_regs(e.arg)


# ---------------------------------------------------------------------------
# Statements
# ---------------------------------------------------------------------------

_LABEL = field(default="", compare=False)


@dataclass(frozen=True)
class Read:
    reg: str
    loc: str
    sco: Scope
    ord: MemOrder
    label: str = _LABEL


@dataclass(frozen=True)
class Write:
    loc: str
    sco: Scope
    ord: MemOrder
    value: Expr
    label: str = _LABEL


@dataclass(frozen=True)
class Cas:
    """``reg = RMW(X, expected, new)``: writes ``new`` iff the old value equals ``expected``."""

    reg: str
    loc: str
    sco: Scope
    ord: MemOrder
    expected: Expr
    new: Expr
    label: str = _LABEL


@dataclass(frozen=True)
class Fadd:
    """``reg = FADD(X, e)``: unconditional fetch-and-add."""

    reg: str | None
    loc: str
    sco: Scope
    ord: MemOrder
    addend: Expr
    label: str = _LABEL


@dataclass(frozen=True)
class Fence:
    sco: Scope
    ord: MemOrder
    label: str = _LABEL


@dataclass(frozen=True)
class Barrier:
    sco: Scope
    bid: int
    label: str = _LABEL


@dataclass(frozen=True)
class Assign:
    reg: str
    value: Expr
    label: str = _LABEL


@dataclass(frozen=True)
class If:
    cond: Expr
    then: tuple[Stmt, ...]
    orelse: tuple[Stmt, ...] = ()
    label: str = _LABEL


@dataclass(frozen=True)
class While:
    cond: Expr
    body: tuple[Stmt, ...]
    label: str = _LABEL


@dataclass(frozen=True)
class BarrierWait:
    """Origin of a blocked marker produced by barrier desugaring."""

    sco: Scope
    bid: int
    loc: str
    target: int


@dataclass(frozen=True)
class Block:
    """The thread cannot proceed: an exhausted loop bound or an unreleased barrier."""

    origin: BarrierWait | None = None
    label: str = _LABEL


Stmt = Union[Read, Write, Cas, Fadd, Fence, Barrier, Assign, If, While, Block]
MEMORY_STMTS = (Read, Write, Cas, Fadd)


def walk(body: tuple[Stmt, ...]) -> Iterator[Stmt]:
    for s in body:
        yield s
        if isinstance(s, If):
            yield from walk(s.then)
            yield from walk(s.orelse)
        elif isinstance(s, While):
            yield from walk(s.body)


def map_body(body: tuple[Stmt, ...], fn) -> tuple[Stmt, ...]:
    """Rebuild ``body`` bottom-up; ``fn`` maps a statement to a tuple of statements."""
    out: list[Stmt] = []
    for s in body:
        if isinstance(s, If):
            s = replace(s, then=map_body(s.then, fn), orelse=map_body(s.orelse, fn))
        elif isinstance(s, While):
            s = replace(s, body=map_body(s.body, fn))
        out.extend(fn(s))
    return tuple(out)


# ---------------------------------------------------------------------------
# Program
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Thread:
    coord: ThreadCoord
    body: tuple[Stmt, ...]


@dataclass(frozen=True)
class Assertion:
    quantifier: str  # "forall" | "exists"
    expr: Expr


@dataclass(frozen=True)
class Program:
    grid: tuple[int, int]
    init: tuple[tuple[str, int], ...]
    threads: tuple[Thread, ...]
    assertion: Assertion | None = None
    exempt: frozenset[str] = frozenset()
    barrier_vars: tuple[tuple[tuple[Scope, int, tuple[int, ...]], str], ...] = ()

    @property
    def locations(self) -> dict[str, int]:
        return dict(self.init)

    @property
    def coords(self) -> list[ThreadCoord]:
        return [t.coord for t in self.threads]

    def thread(self, tid: int) -> Thread:
        return self.threads[tid - 1]

    def is_loop_free(self) -> bool:
        return not any(isinstance(s, While) for t in self.threads for s in walk(t.body))

    def has_barriers(self) -> bool:
        return any(isinstance(s, Barrier) for t in self.threads for s in walk(t.body))


def _check_order(s: Stmt) -> None:
    legal = {Read: READ_ORDERS, Write: WRITE_ORDERS, Cas: RMW_ORDERS, Fadd: RMW_ORDERS,
             Fence: FENCE_ORDERS}.get(type(s))
    if legal is not None and s.ord not in legal:
        kind = type(s).__name__.lower()
        raise ProgramError(f"{s.ord} is not a legal order for {kind} ({s.label})")


def validate(p: Program) -> None:
    """Check orders, locations and register/location name clashes."""
    locs = p.locations
    if len(locs) != len(p.init):
        raise ProgramError("duplicate location declaration")
    for loc in p.exempt:
        if loc not in locs:
            raise ProgramError(f"unknown location {loc!r}")
    n_cta, per_cta = p.grid
    per: dict[tuple[int, int], int] = {}
    for i, t in enumerate(p.threads, start=1):
        if t.coord.tid != i:
            raise ProgramError(f"thread {i} carries tid {t.coord.tid}")
        if not 0 <= t.coord.cta < n_cta:
            raise ProgramError(f"thread {i}: cta {t.coord.cta} outside grid of {n_cta} CTAs")
        key = (t.coord.gpu, t.coord.cta)
        per[key] = per.get(key, 0) + 1
        if per[key] > per_cta:
            raise ProgramError(f"more than {per_cta} threads in cta {t.coord.cta}")
        for s in walk(t.body):
            _check_order(s)
            if isinstance(s, MEMORY_STMTS) and s.loc not in locs:
                raise ProgramError(f"unknown location {s.loc!r} ({s.label})")
            reg = getattr(s, "reg", None)
            if reg is not None and reg in locs:
                raise ProgramError(f"register {reg!r} shadows a location ({s.label})")
            for e in _stmt_exprs(s):
                for ld in expr_loads(e):
                    if ld.loc not in locs:
                        raise ProgramError(f"unknown location {ld.loc!r} ({s.label})")
                    if ld.ord not in READ_ORDERS:
                        raise ProgramError(f"{ld.ord} is not a legal order for read ({s.label})")
                for r in expr_regs(e):
                    if r.name in locs:
                        raise ProgramError(f"register {r.name!r} shadows a location ({s.label})")


def _stmt_exprs(s: Stmt) -> Iterator[Expr]:
    if isinstance(s, Write):
        yield s.value
    elif isinstance(s, Cas):
        yield s.expected
        yield s.new
    elif isinstance(s, Fadd):
        yield s.addend
    elif isinstance(s, Assign):
        yield s.value
    elif isinstance(s, (If, While)):
        yield s.cond


# ---------------------------------------------------------------------------
# Transformations
# ---------------------------------------------------------------------------


def _unroll_loop(w: While, bound: int) -> tuple[Stmt, ...]:
    if bound == 0:
        return (Block(label=w.label),)
    return (If(w.cond, w.body + _unroll_loop(w, bound - 1), (), label=w.label),)


def unroll(p: Program, bound: int) -> Program:
    """Replace every loop by ``bound`` nested conditional copies ending in a blocked marker."""
    if bound < 1:
        raise ValueError("unroll bound must be >= 1")

    def step(s: Stmt) -> tuple[Stmt, ...]:
        if isinstance(s, While):
            return _unroll_loop(s, bound)
        return (s,)

    threads = tuple(replace(t, body=map_body(t.body, step)) for t in p.threads)
    return replace(p, threads=threads)


def _instance(sco: Scope, c: ThreadCoord) -> tuple[int, ...]:
    if sco is Scope.CTA:
        return (c.gpu, c.cta)
    if sco is Scope.GPU:
        return (c.gpu,)
    return ()


def desugar_barriers(p: Program) -> Program:
    """Lower ``bar^sco(id)`` to an arrive counter plus bounded wait-reads.

    Each (scope instance, id) pair gets its own counter location. A thread
    fetch-adds 1 with acq_rel order, then re-reads the counter with acq order
    until it equals the number of threads in the instance. After that many
    reads it hits a blocked marker that remembers the barrier.
    """
    if not p.has_barriers():
        return p
    uses: dict[tuple[Scope, int, tuple[int, ...]], None] = {}
    for t in p.threads:
        for s in walk(t.body):
            if isinstance(s, Barrier):
                uses[(s.sco, s.bid, _instance(s.sco, t.coord))] = None
    per_barrier: dict[tuple[Scope, int], int] = {}
    for sco, bid, _ in uses:
        per_barrier[(sco, bid)] = per_barrier.get((sco, bid), 0) + 1
    names: dict[tuple[Scope, int, tuple[int, ...]], str] = {}
    taken = set(p.locations)
    for key in uses:
        sco, bid, inst = key
        name = f"__bar_{sco}_{bid}"
        if per_barrier[(sco, bid)] > 1:
            name += "_" + "_".join(str(i) for i in inst)
        if name in taken:
            raise ProgramError(f"location {name!r} clashes with a barrier counter")
        names[key] = name
        taken.add(name)

    def lowered(coord: ThreadCoord):
        def fn(s: Stmt) -> tuple[Stmt, ...]:
            if not isinstance(s, Barrier):
                return (s,)
            inst = _instance(s.sco, coord)
            loc = names[(s.sco, s.bid, inst)]
            target = sum(1 for u in p.threads if _instance(s.sco, u.coord) == inst)
            wait: tuple[Stmt, ...] = (
                Block(BarrierWait(s.sco, s.bid, loc, target), label=s.label),
            )
            cond = BinOp("!=", Load(loc, s.sco, MemOrder.ACQ), Const(target))
            for _ in range(target):
                wait = (If(cond, wait, (), label=s.label),)
            arrive = Fadd(None, loc, s.sco, MemOrder.ACQ_REL, Const(1), label=s.label)
            return (arrive,) + wait

        return fn

    threads = tuple(replace(t, body=map_body(t.body, lowered(t.coord))) for t in p.threads)
    init = p.init + tuple((names[k], 0) for k in names)
    bvars = tuple((k, names[k]) for k in names)
    return replace(p, threads=threads, init=init, barrier_vars=bvars)


def lower(p: Program, bound: int = 2) -> Program:
    """Unroll then desugar barriers: the form the explorer consumes."""
    q = desugar_barriers(unroll(p, bound))
    validate(q)
    return q
