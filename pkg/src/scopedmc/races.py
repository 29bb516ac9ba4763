"""Race detection on a freshly extended graph, and the scope/order repair."""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

from scopedmc.graph import Event, ExecutionGraph, Key, Snapshot
from scopedmc.program import (
    BinOp,
    Cas,
    Expr,
    Fadd,
    If,
    Load,
    Not,
    Program,
    Read,
    Stmt,
    While,
    Write,
    map_body,
)
from scopedmc.relations import Relations
from scopedmc.scopes import MemOrder, Scope, common_scope, inclusive

DATA = "data"
HETEROGENEOUS = "heterogeneous"


@dataclass(frozen=True)
class Access:
    """The source-level view of one racing event."""

    label: str
    tid: int
    op: str
    loc: str
    ord: MemOrder
    sco: Scope

    @classmethod
    def of(cls, e: Event) -> Access:
        return cls(e.label, e.tid, e.op, e.loc, e.ord, e.sco)

    def __str__(self) -> str:
        return f"{self.op}^{self.sco}_{self.ord}({self.loc}) T{self.tid} @{self.label}"


@dataclass(frozen=True)
class RaceFinding:
    kind: str  # DATA | HETEROGENEOUS
    first: Access  # the earlier event in exploration order
    second: Access  # the event just added
    keys: tuple[Key, Key]
    coords: tuple  # ThreadCoord pair, for repair
    witness: Snapshot | None = None

    @property
    def loc(self) -> str:
        return self.first.loc

    def identity(self) -> tuple:
        """Dedup key: the unordered pair of source instructions plus the kind."""
        a = (self.first.label, self.first.op, self.first.tid)
        b = (self.second.label, self.second.op, self.second.tid)
        return (self.kind,) + tuple(sorted((a, b)))

    def __str__(self) -> str:
        return f"{self.kind} race on {self.loc}: {self.first}  <->  {self.second}"


def race_kind(a: Event, b: Event, mode: str = "symmetric") -> str | None:
    """Classify two hb-unordered conflicting accesses, or None if they do not race."""
    if a.loc != b.loc or not (a.is_write or b.is_write):
        return None
    if not (a.ord.atomic and b.ord.atomic):
        return DATA
    if not inclusive(a, b, mode):
        return HETEROGENEOUS
    return None


def check_race(g: ExecutionGraph, key: Key, rel: Relations | None = None,
               mode: str = "symmetric", witness: bool = True) -> list[RaceFinding]:
    """Races between event ``key`` and the other same-location events of ``g``.

    A write is compared with every read and write of its location, a read with
    every write. Pairs related by hb in either direction are skipped.
    """
    rel = rel or Relations(g, mode)
    e = g[key]
    if e.loc is None:
        return []
    i = rel.ix(key)
    out: list[RaceFinding] = []
    snap = None
    for j, other in enumerate(rel.events):
        if j == i or other.loc != e.loc or other.is_init:
            continue
        kind = race_kind(other, e, mode)
        if kind is None or rel.hb_related(i, j):
            continue
        if witness and snap is None:
            snap = g.snapshot()
        out.append(RaceFinding(kind, Access.of(other), Access.of(e), (other.key, e.key),
                               (other.coord, e.coord), snap))
    return out


# -- repair -----------------------------------------------------------------------


@dataclass(frozen=True)
class RepairEdit:
    label: str
    loc: str
    old_ord: MemOrder
    old_sco: Scope
    new_ord: MemOrder
    new_sco: Scope

    def __str__(self) -> str:
        return (f"{self.label}: {self.loc}^{self.old_sco}_{self.old_ord} -> "
                f"{self.loc}^{self.new_sco}_{self.new_ord}")


class Unrepairable(Exception):
    pass


def plan_repair(p: Program, f: RaceFinding) -> list[RepairEdit]:
    """The edits that make the two racing instructions inclusive (and atomic).

    Scopes only go up and orders only get stronger. Raises Unrepairable when
    the location is marked plain (exempt) or no edit would change anything.
    """
    if f.loc in p.exempt:
        raise Unrepairable(f"location {f.loc} is plain and exempt from repair")
    if f.loc.startswith("__bar_"):
        raise Unrepairable(f"race on barrier counter {f.loc}")
    a, b = f.first, f.second
    need = common_scope(*f.coords)
    if f.kind == HETEROGENEOUS:
        targets = [(a, a.ord, max(a.sco, need)), (b, b.ord, max(b.sco, need))]
    else:
        level = max(need, a.sco, b.sco)
        targets = [(x, MemOrder.RLX if x.ord is MemOrder.NA else x.ord, level) for x in (a, b)]
    edits = []
    seen = set()
    for acc, ord_, sco in targets:
        if (acc.ord, acc.sco) == (ord_, sco) or (acc.label, acc.loc) in seen:
            continue
        seen.add((acc.label, acc.loc))
        edits.append(RepairEdit(acc.label, acc.loc, acc.ord, acc.sco, ord_, sco))
    if not edits:
        raise Unrepairable(f"no edit strengthens {f}: the pair is already inclusive")
    return edits


def _edit_expr(e: Expr, edit: RepairEdit) -> Expr:
    if isinstance(e, Load) and e.loc == edit.loc:
        return replace(e, sco=max(e.sco, edit.new_sco), ord=_stronger(e.ord, edit.new_ord))
    if isinstance(e, BinOp):
        return replace(e, lhs=_edit_expr(e.lhs, edit), rhs=_edit_expr(e.rhs, edit))
    if isinstance(e, Not):
        return replace(e, arg=_edit_expr(e.arg, edit))
    return e


def _stronger(cur: MemOrder, new: MemOrder) -> MemOrder:
    return new if new.at_least(cur) else cur


def apply_edits(p: Program, edits: list[RepairEdit]) -> Program:
    """Rewrite the instructions named by ``edits`` (by source label and location)."""
    by_label: dict[str, list[RepairEdit]] = {}
    for ed in edits:
        by_label.setdefault(ed.label, []).append(ed)

    def fn(s: Stmt) -> tuple[Stmt, ...]:
        for ed in by_label.get(s.label, ()):
            if isinstance(s, (Read, Write, Cas, Fadd)) and s.loc == ed.loc:
                s = replace(s, sco=max(s.sco, ed.new_sco), ord=_stronger(s.ord, ed.new_ord))
            elif isinstance(s, (If, While)):
                s = replace(s, cond=_edit_expr(s.cond, ed))
        return (s,)

    threads = tuple(replace(t, body=map_body(t.body, fn)) for t in p.threads)
    return replace(p, threads=threads)


def repair(p: Program, f: RaceFinding) -> tuple[Program, list[RepairEdit]]:
    """The program with the race ``f`` repaired, and the edits applied."""
    edits = plan_repair(p, f)
    return apply_edits(p, edits), edits


def _label_position(label: str) -> tuple[int, int]:
    line, col = label.rsplit(":", 2)[-2:]
    return int(line), int(col)


def rewrite_source(src: str, edits: list[RepairEdit]) -> str:
    """Apply ``edits`` to litmus source text, keeping comments and layout.

    Each edit names the statement by its ``line:col`` label; the first access
    to the edited location at or after that position (``LOC^s_o`` or
    ``RMW^s_o(LOC`` / ``FADD^s_o(LOC``) is rewritten.
    """
    lines = src.split("\n")
    for ed in edits:
        line, col = _label_position(ed.label)
        if not 0 < line <= len(lines):
            raise ValueError(f"no line {line} for {ed.loc} at {ed.label}")
        text = lines[line - 1]
        old = f"{ed.old_sco}_{ed.old_ord}"
        new = f"{ed.new_sco}_{ed.new_ord}"
        plain = re.compile(rf"\b{re.escape(ed.loc)}(\s*\^\s*){old}\b")
        rmw = re.compile(rf"\b(RMW|FADD)(\s*\^\s*){old}(\s*\(\s*{re.escape(ed.loc)}\b)")
        hits = [m for m in (plain.search(text, col - 1), rmw.search(text, col - 1)) if m]
        if not hits:
            raise ValueError(f"cannot find {ed.loc}^{old} at {ed.label}")
        m = min(hits, key=lambda m: m.start())
        if m.re is plain:
            repl = f"{ed.loc}{m.group(1)}{new}"
        else:
            repl = f"{m.group(1)}{m.group(2)}{new}{m.group(3)}"
        lines[line - 1] = text[:m.start()] + repl + text[m.end():]
    return "\n".join(lines)
