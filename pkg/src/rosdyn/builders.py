"""Repressilator-style instances built from repression digraphs.

An edge ``a -> b`` ("a represses b") becomes one smooth item on which ``a``
draws values from Beta(c, 2c) and ``b`` from Beta(2c, c).  Raising ``m_a``
then lowers ``U_b`` much more than raising ``m_b`` lowers ``U_a``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .market import Beta, ItemSpec, MarketInstance

__all__ = [
    "DEFAULT_SHARPNESS",
    "RepressionGraph",
    "build_edge_item",
    "build_repressilator",
    "build_cycle",
    "build_coupled",
    "COUPLING_PRESETS",
    "parse_edge_list",
    "bidder_name",
]

DEFAULT_SHARPNESS = 7


def bidder_name(node: int) -> str:
    return f"b{node}"


@dataclass(frozen=True)
class RepressionGraph:
    """Nodes are 1..n; ``edges`` holds (a, b) pairs meaning a represses b."""

    n: int
    edges: tuple[tuple[int, int], ...]
    c: int = DEFAULT_SHARPNESS

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple((int(a), int(b)) for a, b in self.edges))
        if self.n < 1:
            raise ValueError("graph needs at least one node")
        if not isinstance(self.c, int) or self.c < 1:
            raise ValueError("sharpness c must be a positive integer")
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"self-loop on node {a}")
            if not (1 <= a <= self.n and 1 <= b <= self.n):
                raise ValueError(f"edge {a}->{b} references a node outside 1..{self.n}")


def build_edge_item(a: str, b: str, c: int = DEFAULT_SHARPNESS) -> ItemSpec:
    """Item through which bidder ``a`` represses bidder ``b``."""
    if a == b:
        raise ValueError("an edge item needs two distinct bidders")
    if c < 1:
        raise ValueError("sharpness c must be >= 1")
    return ItemSpec({a: Beta(c, 2 * c), b: Beta(2 * c, c)})


def build_repressilator(g: RepressionGraph) -> MarketInstance:
    names = tuple(bidder_name(k) for k in range(1, g.n + 1))
    items = tuple(build_edge_item(bidder_name(a), bidder_name(b), g.c) for a, b in g.edges)
    return MarketInstance(names, items, 1.0)


def build_cycle(n: int, c: int = DEFAULT_SHARPNESS) -> MarketInstance:
    """Directed n-cycle 1 -> 2 -> ... -> n -> 1."""
    if n < 2:
        raise ValueError("a cycle needs at least 2 nodes")
    return build_repressilator(RepressionGraph(n, tuple((k, k % n + 1) for k in range(1, n + 1)), c))


def _three_cycles(groups: int):
    edges = []
    for g in range(groups):
        a, b, c = 3 * g + 1, 3 * g + 2, 3 * g + 3
        edges += [(a, b), (b, c), (c, a)]
    return edges


COUPLING_PRESETS: dict[str, tuple[int, list[tuple[int, int]]]] = {
    "coupling-A": (9, _three_cycles(3) + [(3, 4), (5, 7), (8, 5)]),
    "coupling-B": (9, _three_cycles(3) + [(3, 4), (5, 7), (8, 4)]),
    "pair": (6, _three_cycles(2) + [(3, 4), (6, 1)]),
}


def build_coupled(spec: str | tuple[int, Sequence[tuple[int, int]]],
                  c: int = DEFAULT_SHARPNESS, groups: int | None = None) -> MarketInstance:
    """Coupled 3-cycle repressilators.

    ``spec`` is a preset name from :data:`COUPLING_PRESETS`, or a pair
    ``(groups, inter_edges)`` where the 3-cycles 1->2->3->1, 4->5->6->4, ...
    are generated and ``inter_edges`` are added on top.
    """
    if isinstance(spec, str):
        if spec not in COUPLING_PRESETS:
            raise ValueError(f"unknown coupling preset {spec!r}; choose from {sorted(COUPLING_PRESETS)}")
        n, edges = COUPLING_PRESETS[spec]
    else:
        ngroups, inter = spec
        n, edges = 3 * ngroups, _three_cycles(ngroups) + list(inter)
    return build_repressilator(RepressionGraph(n, tuple(edges), c))


def parse_edge_list(lines: Iterable[str]) -> tuple[int, list[tuple[int, int]], int | None]:
    """Parse ``a b`` lines (``#`` comments allowed) plus optional ``n N`` / ``c C`` lines.

    Returns (node count, edges, sharpness or None).
    """
    edges: list[tuple[int, int]] = []
    n = None
    c = None
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        try:
            if parts[0] in ("n", "c") and len(parts) == 2:
                if parts[0] == "n":
                    n = int(parts[1])
                else:
                    c = int(parts[1])
                continue
            if len(parts) != 2:
                raise ValueError
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ValueError(f"line {lineno}: expected 'a b', 'n N' or 'c C', got {raw.strip()!r}") from None
    if n is None:
        n = max((max(e) for e in edges), default=0)
    return n, edges, c
