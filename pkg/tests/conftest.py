from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scopedmc.benchmarks import corpus_files, corpus_source  # noqa: E402
from scopedmc.dpor import CONTINUE, ExploreContext, run  # noqa: E402
from scopedmc.litmus import parse  # noqa: E402
from scopedmc.program import lower  # noqa: E402


def program(src: str, unroll: int = 2):
    return lower(parse(src), unroll)


def corpus(name: str, unroll: int = 2):
    return lower(parse(corpus_source(name), name + ".lit"), unroll)


def explore_all(p, mode: str = "symmetric", **kw):
    """Run to completion under the continue policies; return (ctx, graphs by status)."""
    found: list = []
    kw.setdefault("on_race", CONTINUE)
    kw.setdefault("on_assert", CONTINUE)
    kw.setdefault("on_divergence", CONTINUE)
    ctx = ExploreContext(p, mode=mode, sink=lambda g, status: found.append((g.copy(), status)),
                         **kw)
    run(ctx)
    return ctx, found


CORPUS = [p.stem for p in corpus_files()]


@pytest.fixture(params=CORPUS)
def corpus_name(request) -> str:
    return request.param


# -- hand-built graphs ---------------------------------------------------------

from scopedmc.graph import Event, ExecutionGraph  # noqa: E402
from scopedmc.scopes import MemOrder, Scope, ThreadCoord  # noqa: E402

ORD = {o.value: o for o in MemOrder}
SCO = {"cta": Scope.CTA, "gpu": Scope.GPU, "sys": Scope.SYS}


def build_graph(locs: dict[str, int], coords: list[tuple[int, int]], events: list[str],
                rf: dict | None = None, co: dict | None = None) -> ExecutionGraph:
    """A graph from compact event specs added in the given (exe) order.

    An event spec is ``"tid op loc sco_ord val"`` (``"tid F - sco_ord"`` for a
    fence; a trailing ``u`` marks an RMW half). ``rf`` maps read keys to write
    keys; ``co`` lists each location's non-init writes in order (default: the
    order of addition). Init write keys are ``(0, i)`` in location order.
    """
    tcs = [ThreadCoord(i + 1, c, g) for i, (c, g) in enumerate(coords)]
    g = ExecutionGraph.initial(locs, tcs)
    placed: dict[str, list] = {}
    for spec in events:
        parts = spec.split()
        tid, op, loc, so = int(parts[0]), parts[1], parts[2], parts[3]
        sco, ord_ = so.split("_", 1)
        val = int(parts[4]) if op != "F" and len(parts) > 4 and parts[4] != "u" else None
        rmw = parts[-1] == "u"
        e = Event(tcs[tid - 1], len(g.threads[tid]), op, None if op == "F" else loc,
                  ORD[ord_], SCO[sco], val, rmw)
        g.push(e)
        if op == "W":
            placed.setdefault(loc, []).append(e.key)
        if op == "R":
            g.reversible.add(e.key)
    for loc, ws in (co or placed).items():
        for w in ws:
            g.co[loc].append(w)
    for r, w in (rf or {}).items():
        g.set_rf(w, r)
    g.check()
    return g


INIT_X, INIT_Y = (0, 0), (0, 1)
E1, E2, E3, E4 = (1, 0), (2, 0), (1, 1), (2, 1)  # SEG: R Y, W X, R X, W Y


def seg(kind: str) -> ExecutionGraph:
    """The running example's graphs, by name (G1..G8)."""
    coords = [(0, 0), (0, 0)]
    r_y, w_x, r_x, w_y = ("1 R Y cta_na 0", "2 W X cta_rel 1", "1 R X cta_acq 0",
                          "2 W Y cta_rel 1")
    table = {
        "G1": ([r_y], {E1: INIT_Y}),
        "G2": ([r_y, w_x, r_x], {E1: INIT_Y, E3: INIT_X}),
        "G3": ([r_y, w_x, r_x], {E1: INIT_Y, E3: E2}),
        "G7": ([r_y, w_x, r_x, w_y], {E1: INIT_Y, E3: INIT_X}),
        "G4": ([r_y, w_x, r_x, w_y], {E1: INIT_Y, E3: E2}),
        "G5": ([r_y, w_x, w_y], {E1: E4}),
        "G6": ([r_y, w_x, w_y, r_x], {E1: E4, E3: E2}),
        "G8": ([r_y, w_x, w_y, r_x], {E1: E4, E3: INIT_X}),
    }
    evs, rf = table[kind]
    return build_graph({"X": 0, "Y": 0}, coords, evs, rf)
