"""Test oracles: a brute-force enumerator, an independent consistency validator,
and the unique-predecessor construction (Prev / MaxEGraph).

Nothing here shares code with the bitset relations or the explorer beyond the
event/graph containers and the thread interpreter, so agreement between the
two routes is meaningful.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from scopedmc.graph import Event, ExecutionGraph, Key, last_of_g
from scopedmc.interp import Interpreter, ThreadState
from scopedmc.program import Program
from scopedmc.scopes import MemOrder, Scope, ThreadCoord

Rel = set[tuple[Key, Key]]


class OracleBudgetExceeded(Exception):
    pass


# -- independent validator ----------------------------------------------------------


def _in_scope(s: Scope, owner: ThreadCoord, other: ThreadCoord) -> bool:
    if s == Scope.SYS:
        return True
    if owner.tid == 0 or other.tid == 0:
        return False
    if s == Scope.GPU:
        return owner.gpu == other.gpu
    return (owner.gpu, owner.cta) == (other.gpu, other.cta)


def _incl(a: Event, b: Event, mode: str) -> bool:
    if a.ord == MemOrder.NA or b.ord == MemOrder.NA:
        return False
    if a.loc is not None and b.loc is not None and a.loc != b.loc:
        return False
    x = _in_scope(a.sco, a.coord, b.coord)
    y = _in_scope(b.sco, b.coord, a.coord)
    return (x and y) if mode == "symmetric" else (x or y)


_STRENGTH = {  # order -> orders it is at least as strong as
    MemOrder.NA: {MemOrder.NA},
    MemOrder.RLX: {MemOrder.NA, MemOrder.RLX},
    MemOrder.ACQ: {MemOrder.NA, MemOrder.RLX, MemOrder.ACQ},
    MemOrder.REL: {MemOrder.NA, MemOrder.RLX, MemOrder.REL},
    MemOrder.ACQ_REL: {MemOrder.NA, MemOrder.RLX, MemOrder.ACQ, MemOrder.REL, MemOrder.ACQ_REL},
    MemOrder.SC: set(MemOrder),
}


def _geq(e: Event, o: MemOrder) -> bool:
    return o in _STRENGTH[e.ord]


def _seq(a: Rel, b: Rel) -> Rel:
    by_src: dict[Key, list[Key]] = {}
    for x, y in b:
        by_src.setdefault(x, []).append(y)
    return {(x, z) for x, y in a for z in by_src.get(y, ())}


def _plus(r: Rel) -> Rel:
    out = set(r)
    while True:
        new = _seq(out, out) - out
        if not new:
            return out
        out |= new


def _ident(keys) -> Rel:
    return {(k, k) for k in keys}


def _cyclic(r: Rel) -> bool:
    return any(a == b for a, b in _plus(r))


@dataclass
class NaiveRelations:
    po: Rel
    rf: Rel
    co: Rel
    rmw: Rel
    fr: Rel
    eco: Rel
    rseq: Rel
    prel: Rel
    pacq: Rel
    sw: Rel
    hb: Rel
    psc: Rel


def naive_relations(g: ExecutionGraph, mode: str = "symmetric") -> NaiveRelations:
    ev = {e.key: e for e in g.events()}
    keys = list(ev)
    W = [k for k in keys if ev[k].op == "W"]
    F = [k for k in keys if ev[k].op == "F"]
    po = {(a, b) for a in keys for b in keys
          if (a[0] == 0 and b[0] != 0) or (a[0] == b[0] != 0 and a[1] < b[1])}
    rf = {(w, r) for r, w in g.rf.items()}
    co = {(ch[i], ch[j]) for ch in g.co.values() for i in range(len(ch))
          for j in range(i + 1, len(ch))}
    rmw = {((k[0], k[1] - 1), k) for k in keys if ev[k].rmw and ev[k].op == "W"}
    fr = _seq({(r, w) for w, r in rf}, co)
    eco = _plus(rf | co | fr)
    incl_rf = {(w, r) for w, r in rf if _incl(ev[w], ev[r], mode)}
    same_loc = lambda a, b: ev[a].loc is not None and ev[a].loc == ev[b].loc  # noqa: E731
    head = {(x, b) for x in W for b in W
            if _geq(ev[b], MemOrder.RLX) and (x == b or ((x, b) in po and same_loc(x, b)))}
    step = _seq(incl_rf, rmw)
    rseq = _seq(head, _ident(W) | _plus(step))
    prel = ({(a, a) for a in keys if _geq(ev[a], MemOrder.REL)}
            | {(f, x) for f in F if _geq(ev[f], MemOrder.REL) for x in keys if (f, x) in po})
    pacq = ({(a, a) for a in keys if _geq(ev[a], MemOrder.ACQ)}
            | {(x, f) for f in F if _geq(ev[f], MemOrder.ACQ) for x in keys if (x, f) in po})
    sw = _seq(_seq(_seq(prel, rseq), incl_rf), pacq)
    incl_sw = {(a, b) for a, b in sw if _incl(ev[a], ev[b], mode)}
    hb = _plus(po | incl_sw)
    psc: Rel = set()
    esc = [k for k in keys if ev[k].ord == MemOrder.SC]
    if esc:
        fsc = [k for k in esc if ev[k].op == "F"]
        po_loc = {(a, b) for a, b in po if same_loc(a, b)}
        po_nloc = po - po_loc
        hb_loc = {(a, b) for a, b in hb if same_loc(a, b)}
        scb = po | _seq(_seq(po_nloc, hb), po_nloc) | hb_loc | co | fr
        hb_opt = hb | _ident(keys)
        left = _ident(esc) | _seq(_ident(fsc), hb_opt)
        right = _ident(esc) | _seq(hb_opt, _ident(fsc))
        pscb = _seq(_seq(left, scb), right)
        pscf = _seq(_seq(_ident(fsc), hb | _seq(_seq(hb, eco), hb)), _ident(fsc))
        psc = pscb | pscf
    incl_psc = {(a, b) for a, b in psc if _incl(ev[a], ev[b], mode)}
    return NaiveRelations(po, rf, co, rmw, fr, eco, rseq, prel, pacq, sw, hb, incl_psc)


def naive_check(g: ExecutionGraph, mode: str = "symmetric") -> str | None:
    """The first violated axiom by set-of-pairs computation, or None if consistent."""
    r = naive_relations(g, mode)
    if _cyclic(r.po | r.rf):
        return "no-thin-air"
    if r.rmw & _seq(r.fr, r.co):
        return "atomicity"
    if any(a == b for a, b in r.hb) or any(a == c for a, c in _seq(r.hb, r.eco)):
        return "coherence"
    if _cyclic(r.psc):
        return "sc"
    return None


def naive_consistent(g: ExecutionGraph, mode: str = "symmetric") -> bool:
    return naive_check(g, mode) is None


# -- brute-force enumeration ----------------------------------------------------------


@dataclass(frozen=True)
class Trace:
    """One thread's run under fixed read values."""

    ops: tuple  # interpreter Ops, in program order
    values: tuple  # read value per op (None for writes and fences)
    state: ThreadState  # where the thread ends


def _traces(interp: Interpreter, tid: int, vals: dict[str, set[int]], budget: int) -> list[Trace]:
    out: list[Trace] = []
    stack: list[tuple[tuple, tuple]] = [((), ())]
    while stack:
        ops, values = stack.pop()
        st = interp.state(tid, values)
        if st.status != "run":
            out.append(Trace(ops, values, st))
            if len(out) > budget:
                raise OracleBudgetExceeded(f"thread {tid} has more than {budget} traces")
            continue
        op = st.pending
        if op.kind == "R":
            for v in sorted(vals[op.loc]):
                stack.append((ops + (op,), values + (v,)))
        else:
            stack.append((ops + (op,), values + (None,)))
    return out


def _write_values(tr: Trace) -> list[tuple[str, int]]:
    return [(op.loc, op.val) for op in tr.ops if op.kind == "W"]


def terminal_status(p: Program, states: list[ThreadState], memory: dict[str, int]) -> str:
    stuck = [s for s in states if s.status == "blocked"]
    if not stuck:
        return "complete"
    for s in stuck:
        b = s.barrier
        if b is not None and memory[b.loc] != b.target:
            return "divergent"
    return "blocked"


def enumerate_all(p: Program, mode: str = "symmetric", budget: int = 200_000,
                  with_graphs: bool = False):
    """Every consistent terminal execution of the lowered program ``p``.

    Returns a dict from canonical identity to terminal status (or to
    ``(status, graph)`` with ``with_graphs``). Read values come from a value
    fixpoint per location; each read then picks any same-value write as its
    source, and each location any coherence order with init first.
    """
    interp = Interpreter(p)
    tids = [c.tid for c in p.coords]
    vals = {loc: {v} for loc, v in p.locations.items()}
    traces: dict[int, list[Trace]] = {}
    for _ in range(64):
        traces = {tid: _traces(interp, tid, vals, budget) for tid in tids}
        grown = False
        for trs in traces.values():
            for tr in trs:
                for loc, v in _write_values(tr):
                    if v not in vals[loc]:
                        vals[loc].add(v)
                        grown = True
        if not grown:
            break
        depth = sum(max((len(_write_values(t)) for t in trs), default=0)
                    for trs in traces.values())
        if _ >= depth + 1:
            break
    out: dict = {}
    work = 0
    coords = {c.tid: c for c in p.coords}
    for combo in itertools.product(*(traces[t] for t in tids)):
        g = ExecutionGraph.initial(p.locations, p.coords)
        events: list[Event] = []
        for tid, tr in zip(tids, combo):
            for i, (op, v) in enumerate(zip(tr.ops, tr.values)):
                val = v if op.kind == "R" else op.val
                events.append(Event(coords[tid], i, op.kind, op.loc, op.ord, op.sco, val,
                                    op.rmw, op.label))
        for e in sorted(events, key=lambda e: (e.idx, e.tid)):
            g.push(e)
        writes = [e for e in g.events() if e.is_write]
        reads = [e for e in g.events() if e.is_read]
        choices = [[w.key for w in writes if w.loc == r.loc and w.val == r.val] for r in reads]
        if any(not c for c in choices):
            continue
        states = [tr.state for tr in combo]
        for srcs in itertools.product(*choices):
            g.rf = {r.key: w for r, w in zip(reads, srcs)}
            if _porf_cyclic(g):
                continue
            locs = list(g.co)
            perms = [itertools.permutations([w.key for w in writes if w.loc == loc and not w.is_init])
                     for loc in locs]
            for cos in itertools.product(*perms):
                work += 1
                if work > budget:
                    raise OracleBudgetExceeded(f"more than {budget} candidate graphs")
                g.co = {loc: [g.init_key(loc)] + list(c) for loc, c in zip(locs, cos)}
                if not naive_consistent(g, mode):
                    continue
                canon = g.canonical()
                status = terminal_status(p, states, g.final_memory())
                out[canon] = (status, g.copy()) if with_graphs else status
    return out


def _porf_cyclic(g: ExecutionGraph) -> bool:
    done: set[Key] = set(e.key for e in g.threads[0])
    ptr = [0] * len(g.threads)
    progress = True
    while progress:
        progress = False
        for tid in range(1, len(g.threads)):
            t = g.threads[tid]
            while ptr[tid] < len(t):
                k = (tid, ptr[tid])
                src = g.rf.get(k)
                if src is not None and src not in done:
                    break
                done.add(k)
                ptr[tid] += 1
                progress = True
    return any(ptr[tid] < len(g.threads[tid]) for tid in range(1, len(g.threads)))


# -- unique predecessor ----------------------------------------------------------------


def _next(interp: Interpreter, g: ExecutionGraph) -> Event | None:
    best = None
    best_key = None
    for tid in range(1, len(g.threads)):
        st = interp.state(tid, g.read_values(tid))
        if st.status != "run":
            continue
        idx = len(g.threads[tid])
        op = st.pending
        k = (not (op.rmw and op.kind == "W"), idx, tid)
        if best is None or k < best_key:
            best_key = k
            best = Event(g.coords[tid], idx, op.kind, op.loc, op.ord, op.sco, op.val, op.rmw,
                         op.label)
    return best


def reversed_source(g: ExecutionGraph, e: Key) -> Key | None:
    """The write ``e`` reads from, if it was added after ``e`` (a revisited read)."""
    if not g[e].is_read:
        return None
    w = g.rf[e]
    if w[0] != 0 and g.stamp[w] > g.stamp[e]:
        return w
    return None


def max_e_graph(p: Program, g: ExecutionGraph, w: Event | Key,
                interp: Interpreter | None = None) -> ExecutionGraph:
    """Re-add events in scheduler order, maximally, until the next event is ``w``.

    Reads take the co-latest write of their location; writes become co-latest.
    """
    interp = interp or Interpreter(p)
    target = w.key if isinstance(w, Event) else w
    h = g.copy()
    while True:
        a = _next(interp, h)
        if a is None:
            raise ValueError(f"scheduler finished without reaching {target}")
        if a.key == target:
            return h
        h.push(a)
        if a.is_write:
            h.co[a.loc].append(a.key)
        elif a.is_read:
            h.set_rf(h.co[a.loc][-1], a.key)
            h.reversible.add(a.key)


def prev(p: Program, g: ExecutionGraph, interp: Interpreter | None = None) -> ExecutionGraph:
    """The graph whose exploration step produced ``g``."""
    e = last_of_g(g)
    if e is None:
        return g.copy()
    w = reversed_source(g, e)
    if w is not None:
        h = g.copy()
        h.remove({e, w})
        return max_e_graph(p, h, w, interp)
    h = g.copy()
    h.remove({e})
    return h


def prev_chain(p: Program, g: ExecutionGraph, limit: int = 10_000) -> list[ExecutionGraph]:
    """``[g, prev(g), prev(prev(g)), …]`` down to the init-only graph."""
    interp = Interpreter(p)
    chain = [g]
    while not chain[-1].is_init_only():
        if len(chain) > limit:
            raise ValueError("prev chain does not terminate")
        chain.append(prev(p, chain[-1], interp))
    return chain
