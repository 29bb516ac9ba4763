"""Thread hierarchy, scope and memory-order lattices, and scope inclusion."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Protocol


class Scope(enum.IntEnum):
    CTA = 0
    GPU = 1
    SYS = 2

    @classmethod
    def parse(cls, text: str) -> Scope:
        try:
            return cls[text.upper()]
        except KeyError:
            raise ValueError(f"unknown scope {text!r}") from None

    def __str__(self) -> str:
        return self.name.lower()


class MemOrder(enum.Enum):
    NA = "na"
    RLX = "rlx"
    ACQ = "acq"
    REL = "rel"
    ACQ_REL = "acq_rel"
    SC = "sc"

    @classmethod
    def parse(cls, text: str) -> MemOrder:
        try:
            return cls(text)
        except ValueError:
            raise ValueError(f"unknown memory order {text!r}") from None

    def __str__(self) -> str:
        return self.value

    def at_least(self, other: MemOrder) -> bool:
        """``self ⊒ other`` in the strength partial order."""
        return other in _WEAKER_OR_EQUAL[self]

    @property
    def atomic(self) -> bool:
        return self is not MemOrder.NA


_WEAKER_OR_EQUAL: dict[MemOrder, frozenset[MemOrder]] = {
    MemOrder.NA: frozenset({MemOrder.NA}),
    MemOrder.RLX: frozenset({MemOrder.NA, MemOrder.RLX}),
    MemOrder.ACQ: frozenset({MemOrder.NA, MemOrder.RLX, MemOrder.ACQ}),
    MemOrder.REL: frozenset({MemOrder.NA, MemOrder.RLX, MemOrder.REL}),
    MemOrder.ACQ_REL: frozenset(
        {MemOrder.NA, MemOrder.RLX, MemOrder.ACQ, MemOrder.REL, MemOrder.ACQ_REL}
    ),
    MemOrder.SC: frozenset(MemOrder),
}

READ_ORDERS = frozenset({MemOrder.NA, MemOrder.RLX, MemOrder.ACQ, MemOrder.SC})
WRITE_ORDERS = frozenset({MemOrder.NA, MemOrder.RLX, MemOrder.REL, MemOrder.SC})
RMW_ORDERS = frozenset(
    {MemOrder.RLX, MemOrder.REL, MemOrder.ACQ, MemOrder.ACQ_REL, MemOrder.SC}
)
FENCE_ORDERS = frozenset({MemOrder.REL, MemOrder.ACQ, MemOrder.ACQ_REL, MemOrder.SC})


@dataclass(frozen=True, slots=True)
class ThreadCoord:
    """Position of a thread in the grid. ``tid`` 0 is the init pseudo-thread."""

    tid: int
    cta: int = 0
    gpu: int = 0

    @property
    def is_init(self) -> bool:
        return self.tid == 0


INIT_THREAD = ThreadCoord(0, -1, -1)


def scope_includes(s: Scope, owner: ThreadCoord, other: ThreadCoord) -> bool:
    """Whether the thread set of scope ``s`` centred at ``owner`` contains ``other``."""
    if s is Scope.SYS:
        return True
    if owner.is_init or other.is_init:
        return False
    if s is Scope.GPU:
        return owner.gpu == other.gpu
    return owner.gpu == other.gpu and owner.cta == other.cta


def common_scope(a: ThreadCoord, b: ThreadCoord) -> Scope:
    """Smallest scope level at which ``a`` and ``b`` include each other."""
    for s in Scope:
        if scope_includes(s, a, b) and scope_includes(s, b, a):
            return s
    return Scope.SYS


class Access(Protocol):
    loc: str | None
    ord: MemOrder
    sco: Scope

    @property
    def coord(self) -> ThreadCoord: ...


# "symmetric": each scope must contain the other thread.
# "either": one direction suffices (the disjunctive reading).
# "unscoped": scopes are ignored, which gives plain RC11 (used for comparison).
INCLUSION_MODES = ("symmetric", "either")
ALL_MODES = INCLUSION_MODES + ("unscoped",)


def inclusive(a: Access, b: Access, mode: str = "symmetric") -> bool:
    if not (a.ord.atomic and b.ord.atomic):
        return False
    if a.loc is not None and b.loc is not None and a.loc != b.loc:
        return False
    if mode == "unscoped":
        return True
    ab = scope_includes(a.sco, a.coord, b.coord)
    ba = scope_includes(b.sco, b.coord, a.coord)
    if mode == "symmetric":
        return ab and ba
    if mode == "either":
        return ab or ba
    raise ValueError(f"unknown inclusion mode {mode!r}")
