"""Derived scoped-RC11 relations over an execution graph, as successor bitsets.

Events are indexed densely (init writes first, then each thread in program
order), so a relation is a list of Python ints where bit ``j`` of entry ``i``
means ``(i, j)`` is in the relation. The module-level functions return sets of
event-key pairs for tests and reports.
"""

from __future__ import annotations

from functools import cached_property
from typing import Callable

from scopedmc.graph import Event, ExecutionGraph, Key
from scopedmc.scopes import MemOrder, inclusive

Masks = list[int]
Pairs = set[tuple[Key, Key]]


def bits(m: int):
    while m:
        low = m & -m
        yield low.bit_length() - 1
        m ^= low


def compose(a: Masks, b: Masks) -> Masks:
    out = []
    for m in a:
        acc = 0
        for j in bits(m):
            acc |= b[j]
        out.append(acc)
    return out


def union(*rs: Masks) -> Masks:
    out = list(rs[0])
    for r in rs[1:]:
        for i, m in enumerate(r):
            out[i] |= m
    return out


def transpose(a: Masks) -> Masks:
    out = [0] * len(a)
    for i, m in enumerate(a):
        bi = 1 << i
        for j in bits(m):
            out[j] |= bi
    return out


def closure(a: Masks) -> Masks:
    """Transitive closure (Warshall over bitsets)."""
    out = list(a)
    n = len(out)
    for k in range(n):
        bk = 1 << k
        row = out[k]
        for i in range(n):
            if out[i] & bk:
                out[i] |= row
    return out


def acyclic(a: Masks) -> bool:
    """Kahn's algorithm over successor masks."""
    n = len(a)
    indeg = [0] * n
    for m in a:
        for j in bits(m):
            indeg[j] += 1
    stack = [i for i in range(n) if indeg[i] == 0]
    seen = 0
    while stack:
        i = stack.pop()
        seen += 1
        for j in bits(a[i]):
            indeg[j] -= 1
            if indeg[j] == 0:
                stack.append(j)
    return seen == n


def identity_on(mask: int, n: int) -> Masks:
    return [(1 << i) if mask >> i & 1 else 0 for i in range(n)]


class Relations:
    """Lazily computed relations of one frozen graph snapshot."""

    def __init__(self, g: ExecutionGraph, mode: str = "symmetric"):
        self.g = g
        self.mode = mode
        threads = g.threads
        starts = []
        base = 0
        for t in threads:
            starts.append(base)
            base += len(t)
        self.starts = starts
        self.n = n = base
        self.events = evs = [e for t in threads for e in t]
        self.thread_of = [tid for tid, t in enumerate(threads) for _ in t]
        self.n_init = ni = len(threads[0])
        self.init_mask = (1 << ni) - 1
        rf_src = [-1] * n
        for r, w in g.rf.items():
            rf_src[starts[r[0]] + r[1]] = starts[w[0]] + w[1]
        self.rf_src = rf_src
        co_pos = [-1] * n
        chains: dict[str, list[int]] = {}
        for loc, ws in g.co.items():
            chain = [starts[w[0]] + w[1] for w in ws]
            chains[loc] = chain
            for p, i in enumerate(chain):
                co_pos[i] = p
        self.chains = chains
        self.co_pos = co_pos

    def ix(self, key: Key) -> int:
        return self.starts[key[0]] + key[1]

    @cached_property
    def index(self) -> dict[Key, int]:
        return {e.key: i for i, e in enumerate(self.events)}

    @cached_property
    def po(self) -> Masks:
        """po successors (transitive); init writes precede every thread event."""
        n = self.n
        po = [0] * n
        all_thread = ((1 << n) - 1) ^ self.init_mask
        for i in range(self.n_init):
            po[i] = all_thread
        g = self.g
        for tid in range(1, len(g.threads)):
            base = self.starts[tid]
            end = base + len(g.threads[tid])
            endmask = (1 << end) - 1
            for i in range(base, end):
                po[i] = endmask ^ ((1 << (i + 1)) - 1)
        return po

    # -- helpers ---------------------------------------------------------------
    def incl(self, i: int, j: int) -> bool:
        return inclusive(self.events[i], self.events[j], self.mode)

    def pairs(self, masks: Masks) -> Pairs:
        evs = self.events
        return {(evs[i].key, evs[j].key) for i, m in enumerate(masks) for j in bits(m)}

    def mask_of(self, pred: Callable[[Event], bool]) -> int:
        m = 0
        for i, e in enumerate(self.events):
            if pred(e):
                m |= 1 << i
        return m

    def first_of_thread(self, i: int) -> bool:
        return i >= self.n_init and self.events[i].idx == 0

    # -- base relations ----------------------------------------------------------
    @cached_property
    def rf(self) -> Masks:
        out = [0] * self.n
        for r, w in enumerate(self.rf_src):
            if w >= 0:
                out[w] |= 1 << r
        return out

    @cached_property
    def co(self) -> Masks:
        out = [0] * self.n
        for chain in self.chains.values():
            later = 0
            for i in reversed(chain):
                out[i] = later
                later |= 1 << i
        return out

    @cached_property
    def fr(self) -> Masks:
        co = self.co
        return [co[w] if w >= 0 else 0 for w in self.rf_src]

    @cached_property
    def rmw(self) -> Masks:
        out = [0] * self.n
        for i, e in enumerate(self.events):
            if e.rmw and e.op == "W":
                out[i - 1] |= 1 << i
        return out

    @cached_property
    def eco(self) -> Masks:
        """(rf ∪ co ∪ fr)⁺, built per location from the co chain and its readers."""
        out = [0] * self.n
        readers = self.rf
        later_of = [0] * self.n
        for chain in self.chains.values():
            later = 0
            for w in reversed(chain):
                later_of[w] = later
                out[w] = later | readers[w]
                later |= (1 << w) | readers[w]
        for r, w in enumerate(self.rf_src):
            if w >= 0:
                out[r] = later_of[w]
        return out

    # -- No-Thin-Air ---------------------------------------------------------------
    @cached_property
    def porf_order(self) -> list[int] | None:
        """A topological order of po ∪ rf, or None if it has a cycle."""
        g = self.g
        done = self.init_mask
        order = list(range(self.n_init))
        ptr = [0] * len(g.threads)
        rf_src = self.rf_src
        progress = True
        while progress:
            progress = False
            for tid in range(1, len(g.threads)):
                base = self.starts[tid]
                t_len = len(g.threads[tid])
                p = ptr[tid]
                while p < t_len:
                    i = base + p
                    src = rf_src[i]
                    if src >= 0 and not done >> src & 1:
                        break
                    done |= 1 << i
                    order.append(i)
                    p += 1
                    progress = True
                ptr[tid] = p
        return order if len(order) == self.n else None

    # -- synchronisation -----------------------------------------------------------
    def _fences_before(self, i: int, order: MemOrder) -> int:
        """Fences ⊒order po-before thread event ``i``."""
        m = 0
        evs = self.events
        j = i - 1
        while j >= self.n_init and self.thread_of[j] == self.thread_of[i]:
            e = evs[j]
            if e.op == "F" and e.ord.at_least(order):
                m |= 1 << j
            j -= 1
        return m

    @cached_property
    def _rseq_pred(self) -> dict[int, int]:
        """For each write w, the writes x with (x, w) ∈ rseq."""
        out: dict[int, int] = {}
        evs = self.events
        for w, e in enumerate(evs):
            if e.op != "W":
                continue
            chain = [w]
            cur = w
            seen = {w}
            while evs[cur].rmw and evs[cur].op == "W":
                rd = cur - 1
                src = self.rf_src[rd]
                if src < 0 or src in seen or not self.incl(src, rd):
                    break
                chain.append(src)
                seen.add(src)
                cur = src
            m = 0
            for b in chain:
                eb = evs[b]
                if not eb.ord.atomic:
                    continue
                m |= 1 << b
                j = b - 1
                while j >= self.n_init and self.thread_of[j] == self.thread_of[b]:
                    ej = evs[j]
                    if ej.op == "W" and ej.loc == eb.loc:
                        m |= 1 << j
                    j -= 1
                if b >= self.n_init:
                    m |= 1 << self.index[self.g.init_key(eb.loc)]
            out[w] = m
        return out

    @cached_property
    def rseq(self) -> Masks:
        out = [0] * self.n
        for w, m in self._rseq_pred.items():
            for x in bits(m):
                out[x] |= 1 << w
        return out

    @cached_property
    def prel(self) -> Masks:
        out = [0] * self.n
        for i, e in enumerate(self.events):
            if e.ord.at_least(MemOrder.REL):
                out[i] |= 1 << i
                if e.op == "F":
                    out[i] |= self.po[i]
        return out

    @cached_property
    def pacq(self) -> Masks:
        out = [0] * self.n
        for i, e in enumerate(self.events):
            if e.ord.at_least(MemOrder.ACQ):
                out[i] |= 1 << i
                if e.op == "F":
                    for j in bits(self._po_pred(i)):
                        out[j] |= 1 << i
        return out

    def _po_pred(self, i: int) -> int:
        if i < self.n_init:
            return 0
        return self.init_mask | ((1 << i) - (1 << self.starts[self.thread_of[i]]))

    def _release_heads(self, w: int, cache: dict[int, int]) -> int:
        """Events a with (a, w) ∈ prel;rseq."""
        m = cache.get(w)
        if m is None:
            m = 0
            evs = self.events
            for x in bits(self._rseq_pred.get(w, 0)):
                if evs[x].ord.at_least(MemOrder.REL):
                    m |= 1 << x
                m |= self._fences_before(x, MemOrder.REL)
            cache[w] = m
        return m

    def _acquire_tails(self, r: int) -> int:
        """Events z with (r, z) ∈ pacq."""
        e = self.events[r]
        m = (1 << r) if e.ord.at_least(MemOrder.ACQ) else 0
        j = r + 1
        evs = self.events
        while j < self.n and self.thread_of[j] == self.thread_of[r]:
            ej = evs[j]
            if ej.op == "F" and ej.ord.at_least(MemOrder.ACQ):
                m |= 1 << j
            j += 1
        return m

    @cached_property
    def sw(self) -> Masks:
        """prel;rseq;(incl ∩ rf);pacq as successor masks (not yet incl-gated)."""
        out = [0] * self.n
        cache: dict[int, int] = {}
        for r, w in enumerate(self.rf_src):
            if w < 0 or w < self.n_init:
                continue  # init writes are non-atomic: never inclusive
            tails = self._acquire_tails(r)
            if not tails or not self.incl(w, r):
                continue
            heads = self._release_heads(w, cache)
            for a in bits(heads):
                out[a] |= tails
        return out

    @cached_property
    def incl_sw(self) -> Masks:
        out = [0] * self.n
        for a, m in enumerate(self.sw):
            for z in bits(m):
                if self.incl(a, z):
                    out[a] |= 1 << z
        return out

    @cached_property
    def hb_pred(self) -> Masks:
        """For each event, the events happening before it."""
        n = self.n
        order = self.porf_order
        sw_in = transpose(self.incl_sw)
        if order is None:
            succ = closure(union(self.po, self.incl_sw))
            return transpose(succ)
        hbp = [0] * n
        init_mask = self.init_mask
        evs = self.events
        for i in order:
            if i < self.n_init:
                continue
            m = init_mask if evs[i].idx == 0 else hbp[i - 1] | (1 << (i - 1))
            for a in bits(sw_in[i]):
                m |= hbp[a] | (1 << a)
            hbp[i] = m
        return hbp

    @cached_property
    def hb(self) -> Masks:
        return transpose(self.hb_pred)

    def hb_related(self, i: int, j: int) -> bool:
        hbp = self.hb_pred
        return bool(hbp[j] >> i & 1 or hbp[i] >> j & 1)

    # -- SC ------------------------------------------------------------------------
    @cached_property
    def sc_mask(self) -> int:
        m = 0
        sc = MemOrder.SC
        for i, e in enumerate(self.events):
            if e.ord is sc:
                m |= 1 << i
        return m

    @cached_property
    def scb(self) -> Masks:
        n = self.n
        evs = self.events
        po_same = [0] * n
        for i in range(n):
            li = evs[i].loc
            if li is None:
                continue
            for j in bits(self.po[i]):
                if evs[j].loc == li:
                    po_same[i] |= 1 << j
        po_diff = [self.po[i] ^ po_same[i] for i in range(n)]
        hb = self.hb
        hb_loc = [0] * n
        for i in range(n):
            li = evs[i].loc
            if li is None:
                continue
            for j in bits(hb[i]):
                if evs[j].loc == li:
                    hb_loc[i] |= 1 << j
        mid = compose(compose(po_diff, hb), po_diff)
        return union(self.po, mid, hb_loc, self.co, self.fr)

    @cached_property
    def pscb(self) -> Masks:
        n = self.n
        e_sc = self.sc_mask
        f_sc = e_sc & self.mask_of(lambda e: e.op == "F")
        hb = self.hb
        left = [0] * n
        right = [0] * n
        for i in range(n):
            if e_sc >> i & 1:
                left[i] |= 1 << i
            if f_sc >> i & 1:
                left[i] |= (1 << i) | hb[i]
        hbp = self.hb_pred
        for d in bits(f_sc):
            right[d] |= 1 << d
            for c in bits(hbp[d]):
                right[c] |= 1 << d
        for i in bits(e_sc):
            right[i] |= 1 << i
        return compose(compose(left, self.scb), right)

    @cached_property
    def pscf(self) -> Masks:
        n = self.n
        f_sc = self.sc_mask & self.mask_of(lambda e: e.op == "F")
        hb = self.hb
        mid = union(hb, compose(compose(hb, self.eco), hb))
        return [(mid[i] & f_sc) if f_sc >> i & 1 else 0 for i in range(n)]

    @cached_property
    def psc(self) -> Masks:
        if not self.sc_mask:
            return [0] * self.n
        return union(self.pscb, self.pscf)

    @cached_property
    def incl_psc(self) -> Masks:
        out = [0] * self.n
        for a, m in enumerate(self.psc):
            for b in bits(m):
                if self.incl(a, b):
                    out[a] |= 1 << b
        return out


# -- pair-set views ------------------------------------------------------------------


def _view(name: str):
    def fn(g: ExecutionGraph, mode: str = "symmetric") -> Pairs:
        rel = Relations(g, mode)
        return rel.pairs(getattr(rel, name))

    fn.__name__ = name
    fn.__doc__ = f"The ``{name}`` relation of ``g`` as a set of event-key pairs."
    return fn


po = _view("po")
rf = _view("rf")
co = _view("co")
rmw = _view("rmw")
fr = _view("fr")
eco = _view("eco")
rseq = _view("rseq")
prel = _view("prel")
pacq = _view("pacq")
sw = _view("sw")
hb = _view("hb")
scb = _view("scb")
pscb = _view("pscb")
pscf = _view("pscf")
psc = _view("psc")
