"""``scoped-mc``: model-check a litmus program under scoped RC11.

Exit codes: 0 clean, 1 assertion violation, 2 races, 3 barrier divergence,
4 usage or parse error, 5 exploration limit reached.
"""

from __future__ import annotations

import argparse
import difflib
import json
import sys
import time
from pathlib import Path

from scopedmc import __version__
from scopedmc.dpor import (
    CONTINUE,
    RACE_POLICIES,
    REPAIR,
    STOP,
    ExploreContext,
    Limits,
    run,
)
from scopedmc.graph import to_dot
from scopedmc.litmus import format_expr, format_program, parse
from scopedmc.program import Program, ProgramError, lower
from scopedmc.races import apply_edits, rewrite_source
from scopedmc.scopes import INCLUSION_MODES

EXIT_CLEAN, EXIT_ASSERT, EXIT_RACE, EXIT_DIVERGENCE, EXIT_USAGE, EXIT_LIMIT = 0, 1, 2, 3, 4, 5


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # usage errors exit 4, not argparse's 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="scoped-mc", description="Stateless model checker for scoped-RC11 "
                 "litmus programs (optimal DPOR).")
    ap.add_argument("file", help="litmus program (.lit)")
    ap.add_argument("--unroll", type=int, default=2, metavar="N",
                    help="loop unrolling bound (default 2)")
    ap.add_argument("--on-race", choices=RACE_POLICIES, default=STOP,
                    help="stop at the first race, continue, or repair and re-run")
    ap.add_argument("--on-assert", choices=(STOP, CONTINUE), default=STOP,
                    help="stop at the first assertion violation or keep exploring")
    ap.add_argument("--on-divergence", choices=(STOP, CONTINUE), default=STOP)
    ap.add_argument("--assert-mode", choices=("forall", "exists"),
                    help="override the quantifier of the program's assertion")
    ap.add_argument("--incl", choices=INCLUSION_MODES, default="symmetric",
                    help="scope inclusion: both scopes contain the other thread "
                    "(symmetric) or either does")
    ap.add_argument("--max-execs", type=int, metavar="N")
    ap.add_argument("--max-events", type=int, metavar="N",
                    help="truncate executions longer than N events")
    ap.add_argument("--max-iter-repair", type=int, default=32, metavar="N")
    ap.add_argument("--dot", metavar="DIR", help="write witness graphs as DOT files")
    ap.add_argument("--stats", action="store_true", help="print exploration statistics")
    ap.add_argument("--json", action="store_true", help="print a JSON summary instead")
    ap.add_argument("--jobs", type=int, default=1, metavar="N",
                    help="accepted for compatibility; exploration is sequential")
    ap.add_argument("--debug", action="store_true", help="validate every explored graph")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    return ap


def _context(p: Program, args) -> ExploreContext:
    return ExploreContext(
        lower(p, args.unroll),
        on_race=args.on_race,
        on_assert=args.on_assert,
        on_divergence=args.on_divergence,
        mode=args.incl,
        limits=Limits(args.max_execs, args.max_events),
        assert_mode=args.assert_mode,
        debug=args.debug,
    )


def _access_json(a) -> dict:
    return {"label": a.label, "tid": a.tid, "op": a.op, "loc": a.loc, "ord": str(a.ord),
            "sco": str(a.sco)}


def _edit_json(e) -> dict:
    return {"label": e.label, "loc": e.loc, "from": f"{e.old_sco}_{e.old_ord}",
            "to": f"{e.new_sco}_{e.new_ord}"}


def exit_code(ctx: ExploreContext) -> int:
    if ctx.assertion is not None:
        return EXIT_ASSERT
    if ctx.races:
        return EXIT_RACE
    if ctx.divergences:
        return EXIT_DIVERGENCE
    if ctx.stats.truncated:
        return EXIT_LIMIT
    return EXIT_CLEAN


_VERDICTS = {EXIT_CLEAN: "clean", EXIT_ASSERT: "assertion-violation", EXIT_RACE: "race",
             EXIT_DIVERGENCE: "divergence", EXIT_LIMIT: "incomplete"}


def check(p: Program, args) -> tuple[ExploreContext, Program, list, int, int]:
    """Explore ``p``; under the repair policy, repair and re-run until quiescent.

    Returns the last context, the final program, all edits, the races seen
    over all rounds, and the number of rounds.
    """
    edits: list = []
    races_total = 0
    rounds = 0
    while True:
        rounds += 1
        ctx = run(_context(p, args))
        races_total += len(ctx.races)
        if args.on_race != REPAIR or not ctx.repairs or rounds > args.max_iter_repair:
            return ctx, p, edits, races_total, rounds
        edits.extend(ctx.repairs)
        p = apply_edits(p, ctx.repairs)


def report(ctx: ExploreContext, path: Path, program: Program, edits: list, races_total: int,
           rounds: int, args, out) -> int:
    st = ctx.stats
    code = exit_code(ctx)
    a = program.assertion
    assertion = None
    if a is not None:
        q = ctx.quantifier
        assertion = {"quantifier": q, "expr": format_expr(a.expr),
                     "witnessed": ctx.assertion is not None}
        if ctx.assertion is not None:
            assertion["registers"] = {str(t): r for t, r in ctx.assertion.registers.items()}
            assertion["memory"] = ctx.assertion.witness.graph().final_memory()
    summary = {
        "file": str(path),
        "executions": st.executions,
        "blocked": st.blocked,
        "max_events": st.max_events,
        "races": [{"kind": f.kind, "loc": f.loc, "first": _access_json(f.first),
                   "second": _access_json(f.second)} for f in ctx.races],
        "unrepairable": [{"race": str(f), "reason": why} for f, why in ctx.unrepairable],
        "repairs": [_edit_json(e) for e in edits],
        "divergences": [{"barriers": d.barriers,
                         "threads": [{"tid": t.tid, "scope": t.scope, "barrier": t.barrier,
                                      "counter": t.counter, "value": t.value,
                                      "target": t.target} for t in d.threads]}
                        for d in ctx.divergences],
        "assertion": assertion,
        "complete": ctx.complete,
        "verdict": _VERDICTS[code],
        "exit_code": code,
    }
    if args.stats:
        summary["stats"] = {"explore_calls": st.explore_calls, "revisits": st.revisits,
                            "revisits_rejected": st.revisits_rejected,
                            "inconsistent": st.inconsistent, "races_seen": races_total,
                            "repair_rounds": rounds, "peak_live_graphs": st.peak_live_graphs,
                            "elapsed": round(st.elapsed, 3)}
    if args.dot:
        _write_dots(ctx, Path(args.dot), path.stem)
    if args.json:
        print(json.dumps(summary, indent=2, sort_keys=True), file=out)
        return code
    w = lambda s="": print(s, file=out)  # noqa: E731
    w(f"file: {path}")
    for f in ctx.races:
        w(f"race: {f}")
    for f, why in ctx.unrepairable:
        w(f"unrepairable: {why}")
    for d in ctx.divergences:
        stuck = ", ".join(f"T{t.tid} at bar^{t.scope}({t.barrier}) [{t.counter}={t.value}/{t.target}]"
                          for t in d.threads)
        w(f"divergence: barriers {d.barriers}: {stuck}")
    if assertion is not None:
        state = "witnessed" if assertion["witnessed"] else "not witnessed"
        if assertion["quantifier"] == "forall":
            state = "violated" if assertion["witnessed"] else "holds"
            if not ctx.complete and not assertion["witnessed"]:
                state = "not violated (search incomplete)"
        w(f"assertion: {assertion['quantifier']} ({assertion['expr']}) {state}")
        if ctx.assertion is not None:
            for tid, regs in sorted(ctx.assertion.registers.items()):
                if not regs:
                    continue
                vals = " ".join(f"{k}={v}" for k, v in sorted(regs.items()))
                w(f"  T{tid}: {vals}")
            g = ctx.assertion.witness.graph()
            w("  witness:")
            for line in repr(g).splitlines()[1:]:
                w("  " + line)
    if edits:
        w(f"repairs ({len(edits)} edits, {rounds - 1} rounds):")
        for e in edits:
            w(f"  {e}")
    if st.truncated:
        w("limit reached: exploration truncated")
    line = (f"summary: executions={st.executions} blocked={st.blocked} "
            f"max_events={st.max_events} races={races_total} repairs={len(edits)}")
    if args.stats:
        line += (f" explore_calls={st.explore_calls} revisits={st.revisits} "
                 f"rejected={st.revisits_rejected} peak_graphs={st.peak_live_graphs} "
                 f"time={st.elapsed:.3f}s")
    w(line)
    w(f"verdict: {_VERDICTS[code]}")
    return code


def _write_dots(ctx: ExploreContext, outdir: Path, stem: str) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    if ctx.assertion is not None:
        (outdir / f"{stem}.assertion.dot").write_text(to_dot(ctx.assertion.witness.graph(),
                                                             "assertion"))
    for i, f in enumerate(ctx.races):
        if f.witness is not None:
            (outdir / f"{stem}.race{i}.dot").write_text(to_dot(f.witness.graph(), f"race {i}"))
    for i, d in enumerate(ctx.divergences):
        (outdir / f"{stem}.divergence{i}.dot").write_text(to_dot(d.witness.graph(),
                                                                 f"divergence {i}"))


def repaired_path(path: Path) -> Path:
    return path.with_name(path.stem + ".repaired.lit")


def main(argv: list[str] | None = None, out=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    out = out or sys.stdout
    if argv and argv[0] == "oracle-diff":
        return oracle_diff(argv[1:], out)
    args = build_parser().parse_args(argv)
    if args.unroll < 1:
        print("scoped-mc: error: --unroll must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    path = Path(args.file)
    try:
        src = path.read_text(encoding="utf-8")
        program = parse(src, path.name)
        lower(program, args.unroll)
    except OSError as exc:
        print(f"scoped-mc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ProgramError as exc:
        print(f"scoped-mc: {path}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    ctx, final, edits, races_total, rounds = check(program, args)
    code = report(ctx, path, final, edits, races_total, rounds, args, out)
    if edits:
        new_src = rewrite_source(src, edits)
        target = repaired_path(path)
        target.write_text(new_src, encoding="utf-8")
        if not args.json:
            print(f"repaired program written to {target}", file=out)
            diff = difflib.unified_diff(src.splitlines(), new_src.splitlines(), str(path),
                                        str(target), lineterm="")
            for line in diff:
                print(line, file=out)
    return code


def oracle_diff(argv: list[str], out) -> int:
    """Compare the explorer's executions with the brute-force enumeration."""
    from scopedmc.oracle import OracleBudgetExceeded, enumerate_all

    ap = _Parser(prog="scoped-mc oracle-diff")
    ap.add_argument("file")
    ap.add_argument("--unroll", type=int, default=2)
    ap.add_argument("--incl", choices=INCLUSION_MODES, default="symmetric")
    ap.add_argument("--budget", type=int, default=1_000_000)
    args = ap.parse_args(argv)
    try:
        p = lower(parse(Path(args.file).read_text(encoding="utf-8"), Path(args.file).name),
                  args.unroll)
    except (OSError, ProgramError) as exc:
        print(f"scoped-mc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    found: dict = {}
    ctx = ExploreContext(p, on_race=CONTINUE, on_assert=CONTINUE, on_divergence=CONTINUE,
                         mode=args.incl,
                         sink=lambda g, status: found.__setitem__(g.canonical(), status))
    run(ctx)
    start = time.perf_counter()
    try:
        expected = enumerate_all(p, args.incl, budget=args.budget)
    except OracleBudgetExceeded as exc:
        print(f"oracle: {exc}", file=out)
        return EXIT_LIMIT
    only_dpor = sorted(set(found) - set(expected))
    only_oracle = sorted(set(expected) - set(found))
    print(f"dpor: {len(found)} executions ({ctx.stats.terminal} emitted)", file=out)
    print(f"oracle: {len(expected)} executions ({time.perf_counter() - start:.2f}s)", file=out)
    for name, keys, table in (("only in dpor", only_dpor, found),
                              ("only in oracle", only_oracle, expected)):
        print(f"{name}: {len(keys)}", file=out)
        for k in keys:
            print(f"  [{table[k]}] {_describe(k)}", file=out)
    same = not only_dpor and not only_oracle and ctx.stats.terminal == len(found)
    print("equal" if same else "DIFFERENT", file=out)
    return EXIT_CLEAN if same else 1


def _describe(canon: tuple) -> str:
    evs, rf, co = canon
    reads = " ".join(f"{r[0]}.{r[1]}<-{w[0]}.{w[1]}" for r, w in rf)
    cos = " ".join(f"{loc}:" + ",".join(f"{k[0]}.{k[1]}" for k in ws) for loc, ws in co)
    return f"rf[{reads}] co[{cos}]"


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
