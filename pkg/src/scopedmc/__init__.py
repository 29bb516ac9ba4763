"""Stateless model checking of scoped GPU litmus programs under scoped RC11."""

from scopedmc.scopes import MemOrder, Scope, ThreadCoord, inclusive, scope_includes

__all__ = ["MemOrder", "Scope", "ThreadCoord", "inclusive", "scope_includes"]
__version__ = "0.1.0"
