"""Parametric benchmark programs and access to the bundled litmus corpus."""

from __future__ import annotations

from importlib import resources
from pathlib import Path


def lb(n: int, scope: str = "cta") -> str:
    """Load buffering ring of ``n`` threads in one CTA.

    Thread i reads X_i and then writes X_{i+1 mod n}, all relaxed.
    """
    if n < 2:
        raise ValueError("LB needs at least two threads")
    lines = [f"// LB-{n}", f"grid 1, {n};"]
    lines += [f"X{i} = 0;" for i in range(n)]
    for i in range(n):
        lines.append("thread <0, 0> {")
        lines.append(f"  r = X{i}^{scope}_rlx;")
        lines.append(f"  X{(i + 1) % n}^{scope}_rlx = 1;")
        lines.append("}")
    return "\n".join(lines) + "\n"


def corpus_dir() -> Path:
    return Path(str(resources.files("scopedmc") / "corpus"))


def corpus_files() -> list[Path]:
    return sorted(corpus_dir().glob("*.lit"))


def corpus_source(name: str) -> str:
    path = corpus_dir() / (name if name.endswith(".lit") else name + ".lit")
    return path.read_text()
