"""Optimal DPOR exploration of scoped-RC11 executions.

``explore`` extends a consistent graph one event at a time in scheduler
order. A read branches over every same-location write already present; a
write branches over its co placements and then tries to revisit earlier
reversible reads (``declare_postponed``), which drops the events added after
the read that the write does not depend on. ``check_optimal`` admits a
revisit only if those dropped events were added maximally, so every
execution is produced exactly once.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

from scopedmc import consistency
from scopedmc.consistency import StuckThread
from scopedmc.graph import Event, ExecutionGraph, Key, LiveCounter, Snapshot, nev_key
from scopedmc.interp import Interpreter, ThreadState, eval_assertion
from scopedmc.program import Assertion, Program
from scopedmc.races import RaceFinding, RepairEdit, Unrepairable, check_race, plan_repair
from scopedmc.relations import Relations

STOP, CONTINUE, REPAIR = "stop", "continue", "repair"
RACE_POLICIES = (STOP, CONTINUE, REPAIR)

# terminal status of an explored execution
COMPLETE, BLOCKED, DIVERGENT = "complete", "blocked", "divergent"


class _Halt(Exception):
    """Unwinds the whole search (stop policy, repair applied, or a limit hit)."""


@dataclass(frozen=True)
class AssertionFinding:
    quantifier: str
    witness: Snapshot
    registers: dict[int, dict[str, int]]


@dataclass(frozen=True)
class DivergenceFinding:
    threads: tuple[StuckThread, ...]
    witness: Snapshot

    @property
    def barriers(self) -> list[int]:
        return sorted({t.barrier for t in self.threads if t.barrier is not None})


@dataclass
class Stats:
    executions: int = 0  # complete executions
    blocked: int = 0  # ended with a thread stuck (loop bound or stale barrier wait)
    divergent: int = 0
    explore_calls: int = 0
    inconsistent: int = 0
    events_added: int = 0
    max_events: int = 0
    revisits: int = 0
    revisits_rejected: int = 0
    races: int = 0
    repairs: int = 0
    peak_live_graphs: int = 0
    truncated: bool = False
    elapsed: float = 0.0

    @property
    def terminal(self) -> int:
        return self.executions + self.blocked + self.divergent


@dataclass
class Limits:
    max_execs: int | None = None
    max_events: int | None = None


@dataclass
class ExploreContext:
    """Configuration plus the report sink of one exploration."""

    program: Program  # lowered (loop-free, barriers desugared)
    on_race: str = STOP
    on_assert: str = STOP
    on_divergence: str = STOP
    mode: str = "symmetric"
    limits: Limits = field(default_factory=Limits)
    assert_mode: str | None = None  # overrides the program's quantifier
    check_races: bool = True
    debug: bool = False
    sink: Callable[[ExecutionGraph, str], None] | None = None
    stats: Stats = field(default_factory=Stats)
    races: list[RaceFinding] = field(default_factory=list)
    race_ids: set = field(default_factory=set)
    unrepairable: list[tuple[RaceFinding, str]] = field(default_factory=list)
    repairs: list[RepairEdit] = field(default_factory=list)
    assertion: AssertionFinding | None = None
    divergences: list[DivergenceFinding] = field(default_factory=list)
    interp: Interpreter = field(init=False)
    _halted: bool = field(default=False, init=False)

    def __post_init__(self) -> None:
        if self.on_race not in RACE_POLICIES:
            raise ValueError(f"unknown race policy {self.on_race!r}")
        self.interp = Interpreter(self.program)

    @property
    def quantifier(self) -> str | None:
        a = self.program.assertion
        if a is None:
            return None
        return self.assert_mode or a.quantifier

    @property
    def complete(self) -> bool:
        """True when the search ran to the end (nothing stopped it early)."""
        return not self.stats.truncated and not self._halted


# -- scheduler ----------------------------------------------------------------------


def thread_states(ctx: ExploreContext, g: ExecutionGraph) -> list[ThreadState]:
    return [ctx.interp.state(tid, g.read_values(tid)) for tid in range(1, len(g.threads))]


def next_event(ctx: ExploreContext, g: ExecutionGraph) -> Event | None:
    """The ≤nev-least enabled event, or None when no thread can move.

    The write half of an RMW whose read is already in the graph goes first,
    so the two halves are always added back to back.
    """
    best: Event | None = None
    best_key = None
    for tid in range(1, len(g.threads)):
        st = ctx.interp.state(tid, g.read_values(tid))
        if st.status != "run":
            continue
        k = (not st.pending.rmw or st.pending.kind != "W",) + nev_key((tid, len(g.threads[tid])))
        if best_key is None or k < best_key:
            op = st.pending
            best = Event(g.coords[tid], len(g.threads[tid]), op.kind, op.loc, op.ord, op.sco,
                         op.val, op.rmw, op.label)
            best_key = k
    return best


# -- exploration ----------------------------------------------------------------------


def run(ctx: ExploreContext) -> ExploreContext:
    """Explore every consistent execution of ``ctx.program``."""
    p = ctx.program
    LiveCounter.reset()
    start = time.perf_counter()
    g0 = ExecutionGraph.initial(p.locations, p.coords)
    try:
        explore(ctx, g0)
    except _Halt:
        ctx._halted = True
    finally:
        ctx.stats.elapsed = time.perf_counter() - start
        ctx.stats.peak_live_graphs = LiveCounter.peak
    del g0
    return ctx


def explore(ctx: ExploreContext, g: ExecutionGraph, rel: Relations | None = None,
            race_on: Key | None = None) -> None:
    """Explore every extension of ``g``.

    ``g`` is extended in place and restored before returning; only revisits
    copy it.
    """
    st = ctx.stats
    st.explore_calls += 1
    if rel is None:
        rel = Relations(g, ctx.mode)
        if not consistency.check(g, ctx.mode, rel):
            st.inconsistent += 1
            return
    if ctx.debug:
        g.check()
        if not consistency.check(g, ctx.mode):
            raise AssertionError("explore entered with an inconsistent graph")
    if race_on is not None and ctx.check_races:
        _races(ctx, g, rel, race_on)
    del rel
    if ctx.limits.max_events is not None and len(g) - len(g.threads[0]) > ctx.limits.max_events:
        st.truncated = True
        return
    e = next_event(ctx, g)
    if e is None:
        _finish(ctx, g)
        return
    st.events_added += 1
    if e.is_write:
        _explore_write(ctx, g, e)
    elif e.is_read:
        _explore_read(ctx, g, e)
    else:
        g.push(e)
        explore(ctx, g)
        g.pop(e.tid)


def _explore_read(ctx: ExploreContext, g: ExecutionGraph, e: Event) -> None:
    writes = [w.key for w in g.events() if w.is_write and w.loc == e.loc]
    writes.sort(key=g.stamp.__getitem__)
    g.push(e)
    for w in writes:
        g.reversible.add(e.key)
        g.set_rf(w, e.key)
        explore(ctx, g, race_on=e.key)
    g.pop(e.tid)


def _explore_write(ctx: ExploreContext, g: ExecutionGraph, e: Event) -> None:
    """Branch over co placements (co-maximal first), then try revisits from each.

    Revisits run from inconsistent placements too: when two RMWs read the
    same write, no placement is consistent until the revisit drops one.
    """
    g.push(e)
    chain = g.co[e.loc]
    first = True
    for pos in range(len(chain), 0, -1):
        chain.insert(pos, e.key)
        rel = Relations(g, ctx.mode)
        if consistency.check(g, ctx.mode, rel):
            explore(ctx, g, rel, race_on=e.key if first else None)
            first = False
        else:
            ctx.stats.inconsistent += 1
        del rel
        declare_postponed(ctx, g, e.key)
        chain.remove(e.key)
    g.pop(e.tid)


def declare_postponed(ctx: ExploreContext, g: ExecutionGraph, w: Key) -> None:
    """Try to make each earlier reversible read on w's location read from w."""
    loc = g[w].loc
    prefix = g.porf_prefix(w)
    reads = [r for r in g.reversible if g[r].loc == loc and r not in prefix]
    reads.sort(key=g.stamp.__getitem__)
    for r in reads:
        rs = g.stamp[r]
        deleted = {k for k, s in g.stamp.items() if s > rs and k not in prefix}
        if ctx.debug:
            order = g.exe_order()
            if deleted != set(order[order.index(r) + 1:]) - prefix:
                raise AssertionError(f"deleted set for revisit of {r} by {w} is wrong")
        if not check_optimal(g, deleted | {r}, w, r, prefix):
            ctx.stats.revisits_rejected += 1
            continue
        ctx.stats.revisits += 1
        h = g.copy()
        h.remove(deleted)
        h.set_rf(w, r)
        h.reversible.difference_update(prefix)
        explore(ctx, h, race_on=r)
        del h


def check_optimal(g: ExecutionGraph, deleted: set[Key], w: Key, r: Key,
                  prefix: set[Key] | None = None) -> bool:
    """Admit a revisit only if everything it drops was added co-maximally.

    A dropped read must not read from a dropped later write, and the write it
    reads from must be co-maximal among the writes added before it or kept by
    the revisit. A dropped write must itself be co-maximal in that set, with
    ``w`` counted, so the revisit is taken once, from the placement where the
    dropped writes follow ``w``.
    """
    if prefix is None:
        prefix = g.porf_prefix(w)
    stamp = g.stamp
    for e in deleted:
        ev = g[e]
        if ev.is_read:
            src = g.rf[e]
            if src in deleted and stamp[e] < stamp[src]:
                return False
            target = src
            allow_w = False
        elif ev.is_write:
            target = e
            allow_w = True
        else:
            continue
        chain = g.co[ev.loc]
        se = stamp[e]
        for later in chain[chain.index(target) + 1:]:
            if later == w and not allow_w:
                continue
            if stamp[later] < se or later in prefix:
                return False
    return True


def _finish(ctx: ExploreContext, g: ExecutionGraph) -> None:
    st = ctx.stats
    states = thread_states(ctx, g)
    n_events = len(g) - len(g.threads[0])
    st.max_events = max(st.max_events, n_events)
    if any(s.status == "blocked" for s in states):
        diverged = consistency.is_blocked(g, ctx.program, states)
        if diverged:
            st.divergent += 1
            _emit(ctx, g, DIVERGENT)
            ctx.divergences.append(DivergenceFinding(diverged, g.snapshot()))
            if ctx.on_divergence == STOP:
                raise _Halt
        else:
            st.blocked += 1
            _emit(ctx, g, BLOCKED)
        return
    st.executions += 1
    _emit(ctx, g, COMPLETE)
    _check_assertion(ctx, g, states)


def _emit(ctx: ExploreContext, g: ExecutionGraph, status: str) -> None:
    if ctx.sink is not None:
        ctx.sink(g, status)
    lim = ctx.limits.max_execs
    if lim is not None and ctx.stats.terminal >= lim:
        ctx.stats.truncated = True
        raise _Halt


def final_registers(ctx: ExploreContext, g: ExecutionGraph) -> dict[int, dict[str, int]]:
    return {tid: dict(s.regs) for tid, s in enumerate(thread_states(ctx, g), start=1)}


def evaluate_assertion(p: Program, a: Assertion | None, regs: dict[int, dict[str, int]],
                       memory: dict[str, int], quantifier: str | None = None) -> bool:
    """Whether this execution is an error witness for the assertion.

    forall: the predicate fails here. exists: the predicate holds here (the
    searched-for outcome is reachable).
    """
    if a is None:
        return False
    q = quantifier or a.quantifier
    holds = bool(eval_assertion(a.expr, regs, memory))
    return not holds if q == "forall" else holds


def _check_assertion(ctx: ExploreContext, g: ExecutionGraph, states: list[ThreadState]) -> None:
    a = ctx.program.assertion
    if a is None or ctx.assertion is not None:
        return  # the first witness is kept
    regs = {tid: dict(s.regs) for tid, s in enumerate(states, start=1)}
    if evaluate_assertion(ctx.program, a, regs, g.final_memory(), ctx.quantifier):
        ctx.assertion = AssertionFinding(ctx.quantifier, g.snapshot(), regs)
        if ctx.on_assert == STOP:
            raise _Halt


def _races(ctx: ExploreContext, g: ExecutionGraph, rel: Relations, key: Key) -> None:
    findings = check_race(g, key, rel, ctx.mode)
    for f in findings:
        ctx.stats.races += 1
        fid = f.identity()
        if fid not in ctx.race_ids:
            ctx.race_ids.add(fid)
            ctx.races.append(f)
        if ctx.on_race == STOP:
            raise _Halt
        if ctx.on_race == REPAIR:
            try:
                edits = plan_repair(ctx.program, f)
            except Unrepairable as exc:
                if fid not in {u[0].identity() for u in ctx.unrepairable}:
                    ctx.unrepairable.append((f, str(exc)))
                continue
            ctx.repairs.extend(edits)
            ctx.stats.repairs += len(edits)
            raise _Halt


def explore_program(p: Program, **kw) -> ExploreContext:
    """Convenience: build a context for the lowered program ``p`` and run it."""
    return run(ExploreContext(p, **kw))
