"""The scoped-RC11 consistency axioms and the barrier-divergence check.

Each axiom takes either a graph or a precomputed ``Relations``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from scopedmc.graph import ExecutionGraph
from scopedmc.interp import Interpreter, ThreadState
from scopedmc.program import Program
from scopedmc.relations import Relations, acyclic

AXIOMS = ("no-thin-air", "coherence", "atomicity", "sc")


@dataclass(frozen=True)
class Verdict:
    consistent: bool
    failed: str | None = None  # first violated axiom

    def __bool__(self) -> bool:
        return self.consistent


def _rel(x: ExecutionGraph | Relations, mode: str) -> Relations:
    return x if isinstance(x, Relations) else Relations(x, mode)


def porf_acyclic(x: ExecutionGraph | Relations, mode: str = "symmetric") -> bool:
    return _rel(x, mode).porf_order is not None


def coherent(x: ExecutionGraph | Relations, mode: str = "symmetric") -> bool:
    """hb;eco? is irreflexive."""
    rel = _rel(x, mode)
    hbp = rel.hb_pred
    eco = rel.eco
    for i in range(rel.n):
        if hbp[i] & (eco[i] | (1 << i)):
            return False
    return True


def atomicity_ok(x: ExecutionGraph | Relations, mode: str = "symmetric") -> bool:
    """rmw ∩ (fr;co) is empty: no write sits co-between an RMW's source and its write."""
    rel = _rel(x, mode)
    co_pos = rel.co_pos
    for i, e in enumerate(rel.events):
        if e.rmw and e.op == "W":
            src = rel.rf_src[i - 1]
            if src >= 0 and co_pos[i] - co_pos[src] > 1:
                return False
    return True


def sc_ok(x: ExecutionGraph | Relations, mode: str = "symmetric") -> bool:
    """incl ∩ psc is acyclic."""
    rel = _rel(x, mode)
    if not rel.sc_mask:
        return True
    return acyclic(rel.incl_psc)


def check(g: ExecutionGraph, mode: str = "symmetric", rel: Relations | None = None) -> Verdict:
    rel = rel or Relations(g, mode)
    if not porf_acyclic(rel):
        return Verdict(False, "no-thin-air")
    if not coherent(rel):
        return Verdict(False, "coherence")
    if not atomicity_ok(rel):
        return Verdict(False, "atomicity")
    if not sc_ok(rel):
        return Verdict(False, "sc")
    return Verdict(True)


def is_consistent(g: ExecutionGraph, mode: str = "symmetric") -> bool:
    return check(g, mode).consistent


@dataclass(frozen=True)
class StuckThread:
    tid: int
    scope: str
    barrier: int
    counter: str  # auxiliary barrier location
    value: int
    target: int


def is_blocked(g: ExecutionGraph, p: Program,
               states: Sequence[ThreadState] | None = None) -> tuple[StuckThread, ...] | None:
    """Divergence report for a graph with no next event, or None.

    A thread diverges when it is blocked in a barrier wait whose counter
    never reaches the participant count. Threads blocked by an exhausted
    loop bound, or waiting on a barrier that did fill, are not divergent.
    """
    if states is None:
        interp = Interpreter(p)
        states = [interp.state(tid, g.read_values(tid)) for tid in range(1, len(g.threads))]
    memory = None
    stuck = []
    for tid, s in enumerate(states, start=1):
        b = s.barrier if s.status == "blocked" else None
        if b is None:
            continue
        memory = memory or g.final_memory()
        if memory[b.loc] != b.target:
            stuck.append(StuckThread(tid, str(b.sco), b.bid, b.loc, memory[b.loc], b.target))
    return tuple(stuck) or None
