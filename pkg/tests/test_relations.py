from __future__ import annotations

import random

from hypothesis import given, settings, strategies as st

from conftest import INIT_X, build_graph, explore_all, program
from progen import random_program
from scopedmc import relations as R
from scopedmc.consistency import is_consistent
from scopedmc.dpor import Limits
from scopedmc.oracle import naive_relations

SAME, DIFF = [(0, 0), (0, 0)], [(0, 0), (1, 0)]
MP_EVENTS = ["1 W X cta_rlx 1", "1 W Y cta_rel 1", "2 R Y cta_acq 1", "2 R X cta_rlx 0"]
W_X, W_Y, R_Y, R_X = (1, 0), (1, 1), (2, 0), (2, 1)


def mp(coords, x_src=INIT_X):
    """Writer: X rlx then Y rel. Reader: Y acq (reads the Y write), then X rlx."""
    return build_graph({"X": 0, "Y": 0}, coords, MP_EVENTS, rf={R_Y: W_Y, R_X: x_src})


def test_fr_from_stale_read():
    g = mp(DIFF)
    assert (R_X, W_X) in R.fr(g)
    assert not {p for p in R.fr(g) if p[0] == R_Y}  # reads the co-maximal write


def test_fr_three_writes():
    g = build_graph({"X": 0}, [(0, 0), (0, 0)],
                    ["1 W X cta_rlx 1", "1 W X cta_rlx 2", "2 R X cta_rlx 0"],
                    rf={(2, 0): INIT_X})
    assert {p for p in R.fr(g) if p[0] == (2, 0)} == {((2, 0), (1, 0)), ((2, 0), (1, 1))}


def test_eco():
    g = build_graph({"X": 0}, [(0, 0), (0, 0)], ["1 W X cta_rlx 1", "2 R X cta_rlx 1"],
                    rf={(2, 0): (1, 0)})
    assert ((1, 0), (2, 0)) in R.eco(g)
    g = mp(DIFF)
    eco = R.eco(g)
    assert {(INIT_X, R_X), (R_X, W_X), (INIT_X, W_X)} <= eco
    assert all(g[a].loc == g[b].loc for a, b in eco)


def test_rseq_lone_release_write():
    g = build_graph({"X": 0}, [(0, 0)], ["1 W X cta_rel 1"])
    assert ((1, 0), (1, 0)) in R.rseq(g)


def test_rseq_po_same_location_tail():
    g = build_graph({"X": 0}, [(0, 0)], ["1 W X cta_rel 1", "1 W X cta_rlx 2"])
    assert {((1, 0), (1, 0)), ((1, 0), (1, 1))} <= R.rseq(g)


def test_rseq_stops_at_non_inclusive_rmw():
    events = ["1 W X cta_rel 1", "2 R X cta_rlx 1 u", "2 W X cta_rlx 2 u"]
    same = build_graph({"X": 0}, SAME, events, rf={(2, 0): (1, 0)})
    diff = build_graph({"X": 0}, DIFF, events, rf={(2, 0): (1, 0)})
    assert ((1, 0), (2, 1)) in R.rseq(same)
    assert ((1, 0), (2, 1)) not in R.rseq(diff)


def test_sw_needs_inclusion():
    assert (W_Y, R_Y) in R.sw(mp(SAME, W_X))
    assert (W_Y, R_Y) not in R.sw(mp(DIFF))


def test_sw_needs_acquire():
    g = build_graph({"Y": 0}, SAME, ["1 W Y cta_rel 1", "2 R Y cta_rlx 1"],
                    rf={(2, 0): (1, 0)})
    assert not R.sw(g)


def test_prel_and_pacq():
    g = build_graph({"X": 0}, SAME, ["1 F - cta_rel", "1 W X cta_rlx 1", "2 R X cta_acq 1",
                                     "2 W X cta_na 2"], rf={(2, 0): (1, 1)})
    assert ((1, 0), (1, 1)) in R.prel(g)
    assert ((2, 0), (2, 0)) in R.pacq(g)
    assert not any(g[a].ord.value == "na" for a, _ in R.prel(g))
    assert ((1, 0), (2, 0)) in R.sw(g)  # fence-based release


def test_hb_message_passing_same_cta():
    g = build_graph({"X": 0}, SAME, ["1 W X cta_rel 1", "2 R X cta_acq 1", "2 R X cta_na 1"],
                    rf={(2, 0): (1, 0), (2, 1): (1, 0)})
    assert ((1, 0), (2, 1)) in R.hb(g)


def test_hb_contains_po():
    g = mp(DIFF)
    assert R.po(g) <= R.hb(g)


def test_no_cross_thread_hb_without_inclusion():
    g = mp(DIFF)
    assert not {(a, b) for a, b in R.hb(g) if a[0] and b[0] and a[0] != b[0]}


def test_psc_empty_without_sc():
    assert not R.psc(mp(SAME))


def test_pscb_orders_sc_writes_by_co():
    g = build_graph({"X": 0}, SAME, ["1 W X cta_sc 1", "2 W X cta_sc 2"])
    assert ((1, 0), (2, 0)) in R.pscb(g)


SB_FENCES = ["1 W X cta_rlx 1", "1 F - cta_sc", "1 R Y cta_rlx 0",
             "2 W Y cta_rlx 1", "2 F - cta_sc", "2 R X cta_rlx 0"]


def _cyclic(pairs) -> bool:
    import networkx as nx
    return not nx.is_directed_acyclic_graph(nx.DiGraph(list(pairs)))


def test_store_buffering_with_sc_fences_has_psc_cycle():
    g = build_graph({"X": 0, "Y": 0}, SAME, SB_FENCES, rf={(1, 2): (0, 1), (2, 2): (0, 0)})
    psc = R.psc(g)
    assert ((1, 1), (2, 1)) in psc and ((2, 1), (1, 1)) in psc
    assert _cyclic(psc)


# -- properties over explored graphs ----------------------------------------------

def _graphs(seed: int, mode: str = "symmetric"):
    src = random_program(random.Random(seed), min_threads=2, min_instrs=2, max_instrs=4)
    _, found = explore_all(program(src), mode, limits=Limits(max_execs=6))
    return [g for g, _ in found]


NAMES = ("po", "rf", "co", "rmw", "fr", "eco", "rseq", "prel", "pacq", "sw", "hb")


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.sampled_from(["symmetric", "either"]))
def test_relations_match_from_scratch_sets(seed, mode):
    for g in _graphs(seed, mode)[:4]:
        naive = naive_relations(g, mode)
        for name in NAMES:
            assert getattr(R, name)(g, mode) == getattr(naive, name), name
        rel = R.Relations(g, mode)
        assert rel.pairs(rel.incl_psc) == naive.psc


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_hb_is_a_strict_order_containing_po(seed):
    for g in _graphs(seed)[:4]:
        assert is_consistent(g)
        hb = R.hb(g)
        assert R.po(g) <= hb
        assert not any(a == b for a, b in hb)
        assert {(a, c) for a, b in hb for b2, c in hb if b == b2} <= hb


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_sw_goes_through_an_inclusive_rf(seed):
    for g in _graphs(seed)[:4]:
        rel = R.Relations(g)
        incl_rf = {(w, r) for w, r in R.rf(g) if rel.incl(rel.ix(w), rel.ix(r))}
        prel_rseq = {(a, c) for a, b in R.prel(g) for b2, c in R.rseq(g) if b == b2}
        for a, b in R.sw(g):
            assert any((a, w) in prel_rseq and (r, b) in R.pacq(g) for w, r in incl_rf)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_fr_and_eco_stay_on_one_location(seed):
    for g in _graphs(seed)[:4]:
        for a, b in R.fr(g) | R.eco(g):
            assert g[a].loc == g[b].loc


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_ignoring_scopes_only_adds_hb(seed):
    for g in _graphs(seed)[:4]:
        assert R.hb(g) <= R.hb(g, "unscoped")


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_single_cta_cta_scope_matches_unscoped(seed):
    src = random_program(random.Random(seed), min_threads=2, min_instrs=2)
    src = src.replace("gpu_", "cta_").replace("sys_", "cta_")
    src = src.replace("grid 2, 3;", "grid 1, 3;")
    for c in ("<1, 0>", "<0, 1>", "<1, 1>", "<0, 2>", "<1, 2>"):
        src = src.replace(c, "<0, 0>")
    _, found = explore_all(program(src))
    for g, _ in found[:4]:
        assert R.hb(g) == R.hb(g, "unscoped")
        assert R.psc(g) == R.psc(g, "unscoped")
