"""Execution graphs: events, po/rf/co/rmw, the exploration order, and graph surgery."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator

from scopedmc.scopes import INIT_THREAD, MemOrder, Scope, ThreadCoord

Key = tuple[int, int]  # (tid, po index)


class GraphError(Exception):
    pass


@dataclass(frozen=True, slots=True)
class Event:
    """One executed memory or fence effect.

    The identity of an event is its key ``(tid, idx)``: the thread and its
    position in that thread's program order. ``rmw`` marks both halves of a
    read-modify-write (a failed CAS leaves a lone ``rmw`` read).
    """

    coord: ThreadCoord
    idx: int
    op: str  # "R" | "W" | "F"
    loc: str | None
    ord: MemOrder
    sco: Scope
    val: int | None
    rmw: bool = False
    label: str = field(default="", compare=False)

    @property
    def tid(self) -> int:
        return self.coord.tid

    @property
    def key(self) -> Key:
        return (self.coord.tid, self.idx)

    @property
    def is_read(self) -> bool:
        return self.op == "R"

    @property
    def is_write(self) -> bool:
        return self.op == "W"

    @property
    def is_fence(self) -> bool:
        return self.op == "F"

    @property
    def is_init(self) -> bool:
        return self.coord.tid == 0

    def canon(self) -> tuple:
        return (self.coord.tid, self.idx, self.op, self.loc, self.ord.value, int(self.sco),
                self.val, self.rmw)

    def __str__(self) -> str:
        if self.is_fence:
            return f"F^{self.sco}_{self.ord}@{self.tid}.{self.idx}"
        rmw = "U" if self.rmw else ""
        return f"{rmw}{self.op}^{self.sco}_{self.ord}({self.loc},{self.val})@{self.tid}.{self.idx}"


class LiveCounter:
    """Counts ExecutionGraph objects alive at once (space instrumentation)."""

    live = 0
    peak = 0

    @classmethod
    def reset(cls) -> None:
        cls.peak = cls.live

    @classmethod
    def inc(cls) -> None:
        cls.live += 1
        if cls.live > cls.peak:
            cls.peak = cls.live


class ExecutionGraph:
    """A (partial) execution.

    ``threads[0]`` holds one initialising write per location; ``threads[t]``
    holds thread ``t``'s events in program order. ``co`` maps each location to
    its write keys in coherence order (init first). ``stamp`` records the
    exploration order <exe.
    """

    __slots__ = ("coords", "threads", "rf", "co", "stamp", "next_stamp", "reversible",
                 "__weakref__")

    def __init__(self, coords: tuple[ThreadCoord, ...], threads: list[list[Event]],
                 rf: dict[Key, Key], co: dict[str, list[Key]], stamp: dict[Key, int],
                 next_stamp: int, reversible: set[Key]):
        self.coords = coords
        self.threads = threads
        self.rf = rf
        self.co = co
        self.stamp = stamp
        self.next_stamp = next_stamp
        self.reversible = reversible
        LiveCounter.inc()

    def __del__(self) -> None:
        LiveCounter.live -= 1

    @classmethod
    def initial(cls, locations: dict[str, int] | Iterable[tuple[str, int]],
                coords: Iterable[ThreadCoord]) -> ExecutionGraph:
        locs = dict(locations)
        coords = (INIT_THREAD,) + tuple(coords)
        for i, c in enumerate(coords):
            if c.tid != i:
                raise GraphError(f"thread coordinate {i} carries tid {c.tid}")
        init = [Event(INIT_THREAD, i, "W", loc, MemOrder.NA, Scope.SYS, v, label="init")
                for i, (loc, v) in enumerate(locs.items())]
        threads = [init] + [[] for _ in coords[1:]]
        co = {e.loc: [e.key] for e in init}
        stamp = {e.key: i for i, e in enumerate(init)}
        return cls(coords, threads, {}, co, stamp, len(init), set())

    def copy(self) -> ExecutionGraph:
        return ExecutionGraph(self.coords, [list(t) for t in self.threads], dict(self.rf),
                              {k: list(v) for k, v in self.co.items()}, dict(self.stamp),
                              self.next_stamp, set(self.reversible))

    # -- queries -------------------------------------------------------------
    def __getitem__(self, key: Key) -> Event:
        return self.threads[key[0]][key[1]]

    def __contains__(self, key: Key) -> bool:
        tid, idx = key
        return 0 <= tid < len(self.threads) and 0 <= idx < len(self.threads[tid])

    def __len__(self) -> int:
        return sum(len(t) for t in self.threads)

    def events(self) -> Iterator[Event]:
        for t in self.threads:
            yield from t

    def keys(self) -> Iterator[Key]:
        for t in self.threads:
            for e in t:
                yield e.key

    @property
    def num_threads(self) -> int:
        return len(self.threads) - 1

    @property
    def locations(self) -> list[str]:
        return [e.loc for e in self.threads[0]]

    def init_key(self, loc: str) -> Key:
        return self.co[loc][0]

    def exe_order(self) -> list[Key]:
        return sorted(self.stamp, key=self.stamp.__getitem__)

    def exe_before(self, a: Key, b: Key) -> bool:
        return self.stamp[a] < self.stamp[b]

    def rmw_pairs(self) -> list[tuple[Key, Key]]:
        out = []
        for t in self.threads[1:]:
            for e in t:
                if e.rmw and e.is_write:
                    out.append(((e.tid, e.idx - 1), e.key))
        return out

    def reads_of(self, w: Key) -> list[Key]:
        return [r for r, src in self.rf.items() if src == w]

    def read_values(self, tid: int) -> tuple[int | None, ...]:
        return tuple(e.val if e.op == "R" else None for e in self.threads[tid])

    def final_memory(self) -> dict[str, int]:
        return {loc: self[ws[-1]].val for loc, ws in self.co.items()}

    def is_init_only(self) -> bool:
        return all(not t for t in self.threads[1:])

    def porf_prefix(self, key: Key) -> set[Key]:
        """``{e | e (po ∪ rf)* key}``, reflexive; init writes are po-before every event."""
        seen: set[Key] = set()
        stack = [key]
        has_thread_event = False
        while stack:
            tid, idx = stack.pop()
            if tid == 0:
                seen.add((tid, idx))
                continue
            has_thread_event = True
            # walk down the thread until an already visited event
            for i in range(idx, -1, -1):
                k = (tid, i)
                if k in seen:
                    break
                seen.add(k)
                src = self.rf.get(k)
                if src is not None and src not in seen:
                    stack.append(src)
        if has_thread_event:
            seen.update(e.key for e in self.threads[0])
        return seen

    def canonical(self) -> tuple:
        """Identity of the execution: events, rf and co (the exploration order excluded)."""
        evs = tuple(e.canon() for t in self.threads for e in t)
        rf = tuple(sorted(self.rf.items()))
        co = tuple((loc, tuple(ws)) for loc, ws in sorted(self.co.items()))
        return (evs, rf, co)

    def snapshot(self) -> Snapshot:
        return Snapshot(self.coords, tuple(tuple(t) for t in self.threads),
                        tuple(sorted(self.rf.items())),
                        tuple((loc, tuple(ws)) for loc, ws in self.co.items()),
                        tuple(sorted(self.stamp.items())), frozenset(self.reversible))

    # -- mutation (in place) -------------------------------------------------
    def push(self, e: Event) -> None:
        """Append ``e`` to its thread and stamp it as the newest event."""
        tid = e.tid
        if not 1 <= tid < len(self.threads):
            raise GraphError(f"unknown thread {tid}")
        if e.coord != self.coords[tid]:
            raise GraphError(f"event {e} carries coordinate {e.coord}, thread has {self.coords[tid]}")
        if e.idx != len(self.threads[tid]):
            if e.idx < len(self.threads[tid]):
                raise GraphError(f"duplicate event {e.key}")
            raise GraphError(f"po gap: thread {tid} has {len(self.threads[tid])} events, got index {e.idx}")
        self.threads[tid].append(e)
        self.stamp[e.key] = self.next_stamp
        self.next_stamp += 1

    def pop(self, tid: int) -> Event:
        """Undo the last ``push`` on thread ``tid`` (with its rf, co and flags)."""
        t = self.threads[tid]
        if tid == 0 or not t:
            raise GraphError(f"thread {tid} has no event to pop")
        e = t.pop()
        k = e.key
        if self.stamp.pop(k) == self.next_stamp - 1:
            self.next_stamp -= 1
        self.rf.pop(k, None)
        self.reversible.discard(k)
        if e.is_write:
            chain = self.co[e.loc]
            if k in chain:
                chain.remove(k)
        return e

    def set_rf(self, w: Key, r: Key) -> None:
        wr, rd = self[w], self[r]
        if not wr.is_write or not rd.is_read:
            raise GraphError(f"rf must go from a write to a read: {wr} -> {rd}")
        if wr.loc != rd.loc:
            raise GraphError(f"rf location mismatch: {wr.loc} vs {rd.loc}")
        self.rf[r] = w
        if rd.val != wr.val:
            self.threads[r[0]][r[1]] = replace(rd, val=wr.val)

    def insert_co(self, w: Key, pos: int) -> None:
        """Insert write ``w`` at index ``pos`` of its location's co chain (pos ≥ 1)."""
        e = self[w]
        chain = self.co[e.loc]
        if w in chain:
            raise GraphError(f"{w} already placed in co")
        if not 1 <= pos <= len(chain):
            raise GraphError(f"co position {pos} out of range (init must stay first)")
        chain.insert(pos, w)

    def remove(self, drop: set[Key]) -> None:
        """Remove the events ``drop`` (po-suffix-closed per thread) and every edge touching them."""
        for tid, t in enumerate(self.threads):
            if tid == 0:
                continue
            n = len(t)
            while n and (tid, n - 1) in drop:
                n -= 1
            for i in range(n):
                if (tid, i) in drop:
                    raise GraphError(f"removal of {(tid, i)} leaves a po gap")
            del t[n:]
        for k in drop:
            self.stamp.pop(k, None)
            self.rf.pop(k, None)
            self.reversible.discard(k)
        for r in [r for r, w in self.rf.items() if w in drop]:
            del self.rf[r]
        for loc, chain in self.co.items():
            if any(w in drop for w in chain):
                self.co[loc] = [w for w in chain if w not in drop]

    # -- validation ------------------------------------------------------------
    def check(self) -> None:
        """Raise GraphError if a structural invariant is broken."""
        for tid, t in enumerate(self.threads):
            for i, e in enumerate(t):
                if e.idx != i or e.tid != tid:
                    raise GraphError(f"event {e} stored at {(tid, i)}")
                if e.key not in self.stamp:
                    raise GraphError(f"event {e} has no exe stamp")
        for loc, chain in self.co.items():
            if not chain or chain[0] != (0, self.locations.index(loc)):
                raise GraphError(f"co on {loc} does not start at its init write")
            if len(set(chain)) != len(chain):
                raise GraphError(f"co on {loc} repeats a write")
            for w in chain:
                if w not in self or not self[w].is_write or self[w].loc != loc:
                    raise GraphError(f"co on {loc} holds {w}")
        for r, w in self.rf.items():
            if r not in self or w not in self:
                raise GraphError(f"dangling rf {w} -> {r}")
            if self[r].val != self[w].val or self[r].loc != self[w].loc:
                raise GraphError(f"rf {w} -> {r} disagrees on location or value")
        for e in self.events():
            if e.is_read and e.key not in self.rf:
                raise GraphError(f"read {e} has no rf source")
        for t in self.threads[1:]:
            for a, b in zip(t, t[1:]):
                if self.stamp[a.key] > self.stamp[b.key]:
                    raise GraphError(f"exe order contradicts po at {a} / {b}")
            for e in t:
                if e.rmw and e.is_write:
                    prev = t[e.idx - 1] if e.idx else None
                    if prev is None or not (prev.is_read and prev.rmw and prev.loc == e.loc):
                        raise GraphError(f"rmw write {e} lacks its read half")

    def __repr__(self) -> str:
        lines = [f"ExecutionGraph({len(self)} events)"]
        for k in self.exe_order():
            e = self[k]
            extra = f" rf<-{self.rf[k]}" if k in self.rf else ""
            lines.append(f"  {self.stamp[k]:>3} {e}{extra}")
        for loc, chain in self.co.items():
            lines.append(f"  co[{loc}] = {chain}")
        return "\n".join(lines)


@dataclass(frozen=True)
class Snapshot:
    """An immutable copy of a graph kept in reports (not counted as a live graph)."""

    coords: tuple[ThreadCoord, ...]
    threads: tuple[tuple[Event, ...], ...]
    rf: tuple[tuple[Key, Key], ...]
    co: tuple[tuple[str, tuple[Key, ...]], ...]
    stamp: tuple[tuple[Key, int], ...]
    reversible: frozenset[Key] = frozenset()

    def graph(self) -> ExecutionGraph:
        stamp = dict(self.stamp)
        return ExecutionGraph(self.coords, [list(t) for t in self.threads], dict(self.rf),
                              {loc: list(ws) for loc, ws in self.co},
                              stamp, max(stamp.values(), default=-1) + 1, set(self.reversible))

    def canonical(self) -> tuple:
        g = self.graph()
        return g.canonical()


# -- functional wrappers ---------------------------------------------------------


def add_event(g: ExecutionGraph, e: Event) -> ExecutionGraph:
    h = g.copy()
    h.push(e)
    return h


def add_rf(g: ExecutionGraph, w: Key, r: Key) -> ExecutionGraph:
    h = g.copy()
    h.set_rf(w, r)
    return h


def co_positions(g: ExecutionGraph, w: Key) -> list[int]:
    """Insertion indices for ``w`` into its co chain, co-maximal first."""
    n = len(g.co[g[w].loc])
    return list(range(n, 0, -1))


def co_placements(g: ExecutionGraph, w: Key, consistent=None) -> list[ExecutionGraph]:
    """One graph per insertion position of ``w`` in co, co-maximal first.

    With ``consistent`` (a predicate), inconsistent placements are dropped.
    """
    out = []
    for pos in co_positions(g, w):
        h = g.copy()
        h.insert_co(w, pos)
        if consistent is None or consistent(h):
            out.append(h)
    return out


def restrict(g: ExecutionGraph, keep: Iterable[Key]) -> ExecutionGraph:
    keep = set(keep)
    h = g.copy()
    h.remove({k for k in g.keys() if k not in keep and k[0] != 0})
    return h


def porf_prefix(g: ExecutionGraph, key: Key) -> set[Key]:
    return g.porf_prefix(key)


def porf_maximal(g: ExecutionGraph) -> list[Key]:
    """Thread events with no po or rf successor."""
    sources = set(g.rf.values())
    out = []
    for t in g.threads[1:]:
        if t and t[-1].key not in sources:
            out.append(t[-1].key)
    return out


def nev_key(key: Key) -> tuple[int, int]:
    """Scheduler order ≤nev: round-robin over threads, i.e. by (po index, tid)."""
    return (key[1], key[0])


def schedule_key(e: Event) -> tuple[int, int, int]:
    """≤nev, with an RMW's write half placed right after its read half."""
    if e.rmw and e.is_write:
        return nev_key((e.tid, e.idx - 1)) + (1,)
    return nev_key(e.key) + (0,)


def last_of_g(g: ExecutionGraph) -> Key | None:
    """The porf-maximal event the scheduler would have added last."""
    cands = porf_maximal(g)
    if not cands:
        return None
    return max(cands, key=lambda k: schedule_key(g[k]))


def to_dot(g: ExecutionGraph, title: str = "G") -> str:
    """Graphviz rendering with po, rf, co and fr edges."""
    def name(k: Key) -> str:
        return f"e{k[0]}_{k[1]}"

    lines = [f'digraph "{title}" {{', "  rankdir=TB;", "  node [shape=box, fontname=monospace];"]
    for tid, t in enumerate(g.threads):
        if not t:
            continue
        lines.append(f"  subgraph cluster_t{tid} {{")
        lines.append(f'    label="{"init" if tid == 0 else f"T{tid} {g.coords[tid].cta},{g.coords[tid].gpu}"}";')
        for e in t:
            lines.append(f'    {name(e.key)} [label="{e}"];')
        lines.append("  }")
        for a, b in zip(t, t[1:]):
            if tid:
                lines.append(f'  {name(a.key)} -> {name(b.key)} [label="po"];')
    for r, w in sorted(g.rf.items()):
        lines.append(f'  {name(w)} -> {name(r)} [label="rf", color=green];')
    for loc, chain in sorted(g.co.items()):
        for a, b in zip(chain, chain[1:]):
            lines.append(f'  {name(a)} -> {name(b)} [label="co", color=orange];')
    for r, w in sorted(g.rf.items()):
        chain = g.co[g[w].loc]
        for w2 in chain[chain.index(w) + 1:]:
            lines.append(f'  {name(r)} -> {name(w2)} [label="fr", color=red, style=dashed];')
    lines.append("}")
    return "\n".join(lines) + "\n"
