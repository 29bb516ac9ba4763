from __future__ import annotations

import random

import pytest
from hypothesis import given, settings, strategies as st

from conftest import corpus
from progen import random_program
from scopedmc.benchmarks import corpus_source
from scopedmc.litmus import format_program, parse
from scopedmc.program import (
    BarrierWait,
    Block,
    Cas,
    Fadd,
    If,
    Load,
    ProgramError,
    Read,
    While,
    Write,
    desugar_barriers,
    lower,
    unroll,
    walk,
)
from scopedmc.scopes import MemOrder, Scope

SEG = corpus_source("seg")


def stmts(p, tid):
    return list(walk(p.thread(tid).body))


def test_parse_seg():
    p = parse(SEG)
    assert p.grid == (1, 2)
    assert p.locations == {"X": 0, "Y": 0}
    assert [len(t.body) for t in p.threads] == [2, 2]
    a, b = p.thread(1).body
    assert isinstance(a, Read) and (a.loc, a.sco, a.ord) == ("Y", Scope.CTA, MemOrder.NA)
    assert isinstance(b, Read) and (b.loc, b.ord) == ("X", MemOrder.ACQ)
    w = p.thread(2).body[0]
    assert isinstance(w, Write) and (w.loc, w.ord) == ("X", MemOrder.REL)
    assert p.assertion.quantifier == "exists"
    assert p.thread(1).coord.tid == 1 and p.thread(2).coord.tid == 2


def test_labels_carry_source_positions():
    p = parse(SEG, "seg.lit")
    assert p.thread(1).body[0].label == "seg.lit:7:3"


def test_empty_thread_body():
    p = parse("grid 1, 1;\nthread <0, 0> {\n}\n")
    assert p.thread(1).body == ()


@pytest.mark.parametrize("src, fragment", [
    ("grid 1, 1; X = 0; thread <0, 0> { r = X^cta_rel; }", "rel"),
    ("grid 1, 1; X = 0; thread <0, 0> { X^cta_acq = 1; }", "acq"),
    ("grid 1, 1; X = 0; thread <0, 0> { fence^cta_rlx; }", "rlx"),
    ("grid 1, 1; X = 0; thread <0, 0> { r = RMW^cta_na(X, 0, 1); }", "na"),
    ("grid 1, 1; thread <0, 0> { r = Z^cta_rlx; }", "Z"),
    ("grid 1, 1; X = 0; thread <0, 0> { r = X^cta_rlx }", "';'"),
    ("grid 1, 1; X = 0; thread <3, 0> { }", "grid"),
    ("grid 1, 1; X = 0; X = 1; thread <0, 0> { }", "X"),
    ("grid 1, 1; X = 0; thread <0, 0> { r = X^blk_rlx; }", "blk"),
])
def test_parse_errors(src, fragment):
    with pytest.raises(ProgramError) as err:
        parse(src)
    assert fragment in str(err.value)


def test_parse_error_reports_line_and_column():
    src = "grid 1, 1;\nX = 0;\nthread <0, 0> {\n  r = X^cta_rel;\n}\n"
    with pytest.raises(ProgramError) as err:
        parse(src, "bad.lit")
    assert "bad.lit:4:" in str(err.value)


@pytest.mark.parametrize("name", ["seg", "caslock", "divergence", "fadd2", "mp_same_cta",
                                  "sb_sc_fence", "empty", "seg_diff_cta"])
def test_round_trip_corpus(name):
    p = parse(corpus_source(name))
    assert parse(format_program(p)) == p


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_round_trip_random_programs(seed):
    p = parse(random_program(random.Random(seed)))
    text = format_program(p)
    assert parse(text) == p
    assert format_program(parse(text)) == text


SPIN = "grid 1, 1; X = 0; thread <0, 0> { while (X^cta_acq == 0) { } }"


def test_unroll_spinloop():
    p = unroll(parse(SPIN), 2)
    (outer,) = p.thread(1).body
    assert isinstance(outer, If) and isinstance(outer.cond.lhs, Load)
    (inner,) = outer.then
    assert isinstance(inner, If) and inner.cond == outer.cond
    assert inner.then == (Block(label=inner.then[0].label),)
    assert p.is_loop_free()


def test_unroll_caslock_once():
    p = unroll(parse(corpus_source("caslock")), 1)
    body = p.thread(1).body
    loop = body[1]
    assert isinstance(loop, If)
    cas = [s for s in loop.then if isinstance(s, Cas)]
    assert len(cas) == 1 and isinstance(loop.then[-1], Block)


def test_unroll_straight_line_is_identity():
    p = parse(SEG)
    assert unroll(p, 3) == p


def test_unroll_rejects_zero():
    with pytest.raises(ValueError):
        unroll(parse(SEG), 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 4), st.integers(0, 10**6))
def test_unroll_removes_all_loops(bound, seed):
    src = random_program(random.Random(seed)).replace(
        "thread <0, 0> {", "thread <0, 0> {\n  while (X^cta_rlx == 1) { }", 1)
    if "X = " not in src:
        return
    p = unroll(parse(src), bound)
    assert p.is_loop_free()
    assert not any(isinstance(s, While) for t in p.threads for s in walk(t.body))


def test_desugar_two_thread_barrier():
    src = "grid 1, 2; thread <0, 0> { bar^cta(1); } thread <0, 0> { bar^cta(1); }"
    p = desugar_barriers(parse(src))
    assert p.locations == {"__bar_cta_1": 0}
    body = stmts(p, 1)
    arrive = body[0]
    assert isinstance(arrive, Fadd) and arrive.ord is MemOrder.ACQ_REL
    assert arrive.loc == "__bar_cta_1" and arrive.sco is Scope.CTA
    waits = [s for s in body if isinstance(s, If)]
    assert len(waits) == 2
    assert all(isinstance(w.cond.lhs, Load) and w.cond.lhs.ord is MemOrder.ACQ for w in waits)
    (block,) = [s for s in body if isinstance(s, Block)]
    assert block.origin == BarrierWait(Scope.CTA, 1, "__bar_cta_1", 2)


def test_desugar_divergent_barriers_get_distinct_counters():
    p = corpus("divergence")
    assert {"__bar_cta_1", "__bar_cta_2"} <= set(p.locations)


def test_desugar_per_cta_instances():
    src = ("grid 2, 2; thread <0, 0> { bar^cta(1); } thread <0, 0> { bar^cta(1); }"
           " thread <1, 0> { bar^cta(1); } thread <1, 0> { bar^cta(1); }")
    p = desugar_barriers(parse(src))
    counters = sorted(loc for loc in p.locations if loc.startswith("__bar_"))
    assert len(counters) == 2


def test_desugar_without_barriers_is_identity():
    p = parse(SEG)
    assert desugar_barriers(p) is p


def test_desugar_only_introduces_rmw_and_conditional_reads():
    p = corpus("divergence_fixed")
    plain = parse(corpus_source("divergence_fixed"))
    before = {type(s) for t in plain.threads for s in walk(t.body)}
    after = {type(s) for t in p.threads for s in walk(t.body)}
    assert after - before <= {Fadd, If, Block}


def test_lower_validates():
    p = lower(parse(SEG))
    assert p.is_loop_free() and not p.has_barriers()
