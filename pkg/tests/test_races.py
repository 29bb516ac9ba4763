from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import build_graph, explore_all, program
from progen import random_program
from scopedmc.benchmarks import corpus_source
from scopedmc.dpor import CONTINUE, REPAIR, ExploreContext, run
from scopedmc.litmus import parse
from scopedmc.program import lower
from scopedmc.races import (
    DATA,
    HETEROGENEOUS,
    Unrepairable,
    apply_edits,
    check_race,
    plan_repair,
    race_kind,
    repair,
    rewrite_source,
)
from scopedmc.scopes import MemOrder, Scope


def races_of(src: str, **kw):
    ctx, _ = explore_all(program(src), **kw)
    return ctx.races


def test_message_passing_across_ctas_has_both_kinds():
    found = races_of(corpus_source("mp_diff_cta"))
    assert {f.kind for f in found} == {DATA, HETEROGENEOUS}
    assert all(f.loc == "X" for f in found)


@pytest.mark.parametrize("name", ["mp_same_cta", "caslock", "fadd2", "empty"])
def test_synchronised_programs_are_race_free(name):
    assert races_of(corpus_source(name)) == []


def test_relaxed_gpu_accesses_on_two_gpus_race():
    (f,) = races_of(corpus_source("hetero_gpu"))
    assert f.kind == HETEROGENEOUS


def test_running_example_races_on_the_plain_read():
    found = races_of(corpus_source("seg"))
    assert {(f.kind, f.loc) for f in found} == {(DATA, "Y")}


def test_two_reads_never_race():
    src = ("grid 2, 1; X = 0; thread <0, 0> { a = X^cta_na; }"
           " thread <1, 0> { b = X^cta_na; }")
    assert races_of(src) == []


def test_race_kind_is_symmetric():
    g = build_graph({"X": 0}, [(0, 0), (1, 0)],
                    ["1 W X cta_rlx 1", "2 R X cta_rlx"], rf={(2, 0): (1, 0)})
    a, b = g[(1, 0)], g[(2, 0)]
    assert race_kind(a, b) == race_kind(b, a) == HETEROGENEOUS
    assert race_kind(a, b, "unscoped") is None


def test_check_race_skips_hb_ordered_pairs():
    g = build_graph({"X": 0}, [(0, 0), (0, 0)],
                    ["1 W X cta_rlx 1", "2 R X cta_rlx"], rf={(2, 0): (1, 0)})
    assert check_race(g, (2, 0)) == []
    g = build_graph({"X": 0}, [(0, 0), (1, 0)],
                    ["1 W X cta_rlx 1", "2 R X cta_rlx"], rf={(2, 0): (1, 0)})
    (f,) = check_race(g, (2, 0))
    assert f.keys == ((1, 0), (2, 0)) and f.witness is not None


def test_findings_are_deduplicated_by_instruction_pair():
    found = races_of(corpus_source("mp_diff_cta"))
    ids = [f.identity() for f in found]
    assert len(ids) == len(set(ids)) == 2


def _finding(name, kind):
    p = program(corpus_source(name))
    ctx, _ = explore_all(p)
    return p, next(f for f in ctx.races if f.kind == kind)


def test_heterogeneous_repair_raises_cta_to_gpu():
    p, f = _finding("mp_diff_cta", HETEROGENEOUS)
    edits = plan_repair(p, f)
    assert {(e.old_sco, e.new_sco) for e in edits} == {(Scope.CTA, Scope.GPU)}
    assert all(e.new_ord == e.old_ord for e in edits)


def test_heterogeneous_repair_across_gpus_goes_to_sys():
    p, f = _finding("hetero_gpu", HETEROGENEOUS)
    assert {e.new_sco for e in plan_repair(p, f)} == {Scope.SYS}


def test_data_repair_makes_the_plain_access_atomic():
    p, f = _finding("na_race_cta", DATA)
    edits = plan_repair(p, f)
    assert {(e.old_ord, e.new_ord) for e in edits} >= {(MemOrder.NA, MemOrder.RLX)}
    assert {e.new_sco for e in edits} == {Scope.GPU}


def test_plain_locations_are_not_repaired():
    src = ("grid 2, 1; plain X = 0; thread <0, 0> { X^cta_rlx = 1; }"
           " thread <1, 0> { a = X^cta_na; }")
    p = program(src)
    ctx, _ = explore_all(p)
    with pytest.raises(Unrepairable):
        plan_repair(p, ctx.races[0])


def test_inclusive_pair_has_nothing_to_repair():
    p, f = _finding("hetero_gpu", HETEROGENEOUS)
    # the same pair already at sys scope
    with pytest.raises(Unrepairable):
        plan_repair(p, type(f)(f.kind, *[type(a)(**{**a.__dict__, "sco": Scope.SYS})
                                        for a in (f.first, f.second)], f.keys, f.coords))


def test_barrier_counter_races_are_unrepairable():
    p, f = _finding("mp_diff_cta", DATA)
    bogus = type(f)(f.kind, type(f.first)(**{**f.first.__dict__, "loc": "__bar_1"}),
                    type(f.second)(**{**f.second.__dict__, "loc": "__bar_1"}), f.keys, f.coords)
    with pytest.raises(Unrepairable):
        plan_repair(p, bogus)


@pytest.mark.parametrize("name", ["mp_diff_cta", "hetero_gpu", "na_race_cta", "seg_diff_cta"])
def test_source_rewrite_matches_program_rewrite(name):
    src = corpus_source(name)
    p = program(src)
    ctx, _ = explore_all(p)
    f = next(f for f in ctx.races if f.loc not in p.exempt)
    fixed, edits = repair(p, f)
    assert parse(rewrite_source(src, edits)) == fixed


def test_rewrite_keeps_comments():
    src = corpus_source("mp_diff_cta")
    p, f = _finding("mp_diff_cta", HETEROGENEOUS)
    out = rewrite_source(src, plan_repair(p, f))
    assert out.splitlines()[:2] == src.splitlines()[:2]
    assert "X^gpu_rel" in out and "X^gpu_acq" in out


def test_rewrite_reports_missing_access():
    p, f = _finding("mp_diff_cta", HETEROGENEOUS)
    with pytest.raises(ValueError):
        rewrite_source("grid 1, 1;\n", plan_repair(p, f))


def _repair_until_quiet(p, rounds=32):
    for _ in range(rounds):
        ctx = run(ExploreContext(lower(p), on_race=REPAIR, on_assert=CONTINUE))
        fixable = []
        for f in ctx.races:
            try:
                fixable.extend(plan_repair(p, f))
            except Unrepairable:
                pass
        if not fixable:
            return p, ctx
        p = apply_edits(p, fixable)
    raise AssertionError("repair did not converge")


@pytest.mark.parametrize("name", ["mp_diff_cta", "hetero_gpu", "na_race_cta"])
def test_repair_loop_removes_every_race(name):
    p, ctx = _repair_until_quiet(parse(corpus_source(name)))
    assert ctx.races == []


def test_seg_across_ctas_only_repairs_x():
    p, ctx = _repair_until_quiet(parse(corpus_source("seg_diff_cta")))
    assert {f.loc for f in ctx.races} <= {"Y"}
    text = rewrite_source(corpus_source("seg_diff_cta"), [])
    assert "X^cta" in text


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_edits_only_strengthen(seed):
    p = parse_random(seed)
    ctx = run(ExploreContext(lower(p), on_race=CONTINUE, on_assert=CONTINUE))
    for f in ctx.races:
        try:
            edits = plan_repair(p, f)
        except Unrepairable:
            continue
        for e in edits:
            assert e.new_sco >= e.old_sco and e.new_ord.at_least(e.old_ord)
            assert (e.new_sco, e.new_ord) != (e.old_sco, e.old_ord)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_repair_reaches_a_race_free_program(seed):
    p = parse_random(seed)
    _, ctx = _repair_until_quiet(p)
    assert all(f.loc in p.exempt or f.loc.startswith("__bar_") for f in ctx.races)


def parse_random(seed):
    return parse(random_program(random.Random(seed)))
