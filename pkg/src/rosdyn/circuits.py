"""Boolean NOR networks compiled into fixed-value ROS markets.

Each variable is a bidder whose multiplier settles at ``low`` (false) or
``high`` (true).  A gate ``y = NOR(x_1..x_k)`` uses two items:

* L: inputs value it at V, the output at C, no reserve; the output always wins
  it and pays the largest input bid;
* H: only the output values it (at T), reserve C, ties go against the output;
  the output wins it exactly when y > low.

``simplified`` mode imposes the reserve natively and clamps variables to
``[floor, ceiling]``.  ``full`` mode builds everything from plain auctions:
reserves come from pairs of auxiliary bidders resting at multiplier 1, the
ceiling from an expensive item, and the floor from a subsidised item pair.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .market import Fixed, ItemSpec, MarketInstance, TieBreak

__all__ = [
    "BooleanNetwork",
    "GateParams",
    "default_gate_params",
    "parse_network",
    "compile_nor_gate",
    "compile_reserve_gadget",
    "compile_ceiling_gadget",
    "compile_floor_gadget",
    "compile_network",
    "read_assignment",
    "build_clock",
    "design_point",
    "variable_indices",
]


@dataclass(frozen=True)
class BooleanNetwork:
    """Constraints ``X = NOR(inputs)``, exactly one per variable."""

    variables: tuple[str, ...]
    inputs: Mapping[str, tuple[str, ...]]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "inputs", {k: tuple(v) for k, v in self.inputs.items()})
        if len(set(self.variables)) != len(self.variables):
            raise ValueError("each variable needs exactly one constraint")
        if set(self.inputs) != set(self.variables):
            raise ValueError("constraints and variables do not match")
        for out, ins in self.inputs.items():
            for x in ins:
                if x not in self.inputs:
                    raise ValueError(f"{out}: unknown input {x!r}")
                if x == out:
                    raise ValueError(f"{out}: a gate cannot read its own output")
            if len(set(ins)) != len(ins):
                raise ValueError(f"{out}: repeated input")

    @property
    def is_acyclic(self) -> bool:
        return self._order() is not None

    def _order(self):
        indeg = {v: len(self.inputs[v]) for v in self.variables}
        users = {v: [] for v in self.variables}
        for out, ins in self.inputs.items():
            for x in ins:
                users[x].append(out)
        ready = [v for v in self.variables if indeg[v] == 0]
        order = []
        while ready:
            v = ready.pop(0)
            order.append(v)
            for u in users[v]:
                indeg[u] -= 1
                if indeg[u] == 0:
                    ready.append(u)
        return order if len(order) == len(self.variables) else None

    def satisfies(self, assignment: Mapping[str, bool]) -> bool:
        return all(assignment[v] == (not any(assignment[x] for x in self.inputs[v]))
                   for v in self.variables)

    def satisfying_assignments(self) -> list[dict[str, bool]]:
        out = []
        for bits in itertools.product([False, True], repeat=len(self.variables)):
            a = dict(zip(self.variables, bits))
            if self.satisfies(a):
                out.append(a)
        return out

    def evaluate(self) -> dict[str, bool]:
        """The unique assignment of an acyclic network."""
        order = self._order()
        if order is None:
            raise ValueError("network has a cycle")
        val: dict[str, bool] = {}
        for v in order:
            val[v] = not any(val[x] for x in self.inputs[v])
        return val


_LINE = re.compile(r"^\s*(\w+)\s*=\s*(NOR|NOT)\s*\(\s*([\w\s,]*)\)\s*$")


def parse_network(lines: Iterable[str]) -> BooleanNetwork:
    """Parse ``X = NOR(A, B, ...)`` / ``X = NOT(A)`` lines; ``#`` starts a comment."""
    variables, inputs = [], {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        mt = _LINE.match(line)
        if not mt:
            raise ValueError(f"line {lineno}: cannot parse {raw.strip()!r}")
        out, op, args = mt.groups()
        ins = tuple(a.strip() for a in args.split(",") if a.strip())
        if op == "NOT" and len(ins) != 1:
            raise ValueError(f"line {lineno}: NOT takes exactly one input")
        if out in inputs:
            raise ValueError(f"line {lineno}: second constraint for {out}")
        variables.append(out)
        inputs[out] = ins
    try:
        return BooleanNetwork(tuple(variables), inputs)
    except ValueError as exc:
        raise ValueError(f"invalid network: {exc}") from None


@dataclass(frozen=True)
class GateParams:
    floor: float = 1.2
    low: float = 1.5
    threshold: float = 2.1
    high: float = 3.0
    ceiling: float = 3.0
    V: float = 1.0
    m_factor: float = 1.5

    def __post_init__(self):
        f, lo, th, hi, ce = self.floor, self.low, self.threshold, self.high, self.ceiling
        if not (1 <= f < lo <= th < hi == ce < lo * th):
            raise ValueError("need 1 <= floor < low <= threshold < high = ceiling < low*threshold")
        if self.V <= 0 or self.m_factor <= 1:
            raise ValueError("V must be positive and m_factor above 1")
        T, C = self.T, self.C
        assert T - lo * self.V >= 0
        assert C - ce * self.V >= 0 and T - th * self.V <= 1e-12
        assert f * C > ce * self.V
        assert abs(lo * T - C) <= 1e-12 * C

    @property
    def T(self) -> float:
        return self.threshold * self.V

    @property
    def C(self) -> float:
        return self.low * self.threshold * self.V

    def other_value(self, fanout: int = 0) -> float:
        """Largest total value a variable bidder gets from all non-ceiling items."""
        return self.C + self.T + 1.0 + (self.floor - 1.0) + fanout * self.V

    def M(self, fanout: int = 0) -> float:
        """Ceiling-item value; (ceiling - 1) M exceeds the bidder's other value by ``m_factor``."""
        return self.m_factor * self.other_value(fanout) / (self.ceiling - 1.0)


def default_gate_params() -> GateParams:
    return GateParams()


def compile_nor_gate(inputs: Sequence[str], output: str, params: GateParams,
                     mode: str = "simplified") -> tuple[list[str], list[ItemSpec]]:
    """Items L and H of one gate, plus the H reserve gadget in full mode.

    Returns (auxiliary bidders added, items).
    """
    L = ItemSpec({**{x: Fixed(params.V) for x in inputs}, output: Fixed(params.C)})
    if mode == "simplified":
        H = ItemSpec({output: Fixed(params.T)}, reserve=params.C,
                     tie_break=TieBreak.disfavor(output))
        return [], [L, H]
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    H = ItemSpec({output: Fixed(params.T)}, tie_break=TieBreak.disfavor(output))
    aux, items = compile_reserve_gadget(H, params.C, f"{output}.h")
    return aux, [L] + items


def compile_reserve_gadget(item: ItemSpec, R: float, prefix: str) -> tuple[list[str], list[ItemSpec]]:
    """Two auxiliary bidders valuing ``item`` at R emulate a reserve R on it.

    They also share a private item U valued 1 by both; resting at multiplier 1
    they have zero utility and bid exactly R on ``item``.  Returns the new
    bidders and the items (the augmented target first, then U).
    """
    a1, a2 = f"{prefix}res1", f"{prefix}res2"
    if R == 0:
        return [], [item]
    target = ItemSpec({**item.values, a1: Fixed(R), a2: Fixed(R)}, 0.0, item.tie_break, item.copies)
    shared = ItemSpec({a1: Fixed(1.0), a2: Fixed(1.0)})
    return [a1, a2], [target, shared]


def compile_ceiling_gadget(bidder: str, ceiling: float, M: float,
                           mode: str = "full") -> tuple[list[str], list[ItemSpec]]:
    """An item worth M whose reserve ceiling*M makes winning it a net loss."""
    item = ItemSpec({bidder: Fixed(M)}, reserve=ceiling * M, tie_break=TieBreak.disfavor(bidder))
    if mode == "simplified":
        return [], [item]
    bare = ItemSpec({bidder: Fixed(M)}, tie_break=TieBreak.disfavor(bidder))
    return compile_reserve_gadget(bare, ceiling * M, f"{bidder}.c")


def compile_floor_gadget(bidder: str, floor: float,
                         mode: str = "full") -> tuple[list[str], list[ItemSpec]]:
    """Items E (value 1, reserve floor, ties favour the bidder) and F (value floor - 1, free).

    Below the floor the bidder collects F's surplus without paying for E.
    """
    F = ItemSpec({bidder: Fixed(floor - 1.0)})
    if mode == "simplified":
        E = ItemSpec({bidder: Fixed(1.0)}, reserve=floor, tie_break=TieBreak.favor(bidder))
        return [], [E, F]
    E = ItemSpec({bidder: Fixed(1.0)}, tie_break=TieBreak.favor(bidder))
    aux, items = compile_reserve_gadget(E, floor, f"{bidder}.e")
    return aux, items + [F]


def compile_network(net: BooleanNetwork, params: GateParams | None = None,
                    mode: str = "simplified") -> MarketInstance:
    """One bidder per variable, one gate per constraint; lambda = 1."""
    params = params or default_gate_params()
    if mode not in ("simplified", "full"):
        raise ValueError(f"unknown mode {mode!r}")
    fanout = {v: 0 for v in net.variables}
    for ins in net.inputs.values():
        for x in ins:
            fanout[x] += 1
    bidders = list(net.variables)
    items: list[ItemSpec] = []
    for v in net.variables:
        aux, its = compile_nor_gate(net.inputs[v], v, params, mode)
        bidders += aux
        items += its
        if mode == "full":
            for gadget in (compile_ceiling_gadget(v, params.ceiling, params.M(fanout[v])),
                           compile_floor_gadget(v, params.floor)):
                bidders += gadget[0]
                items += gadget[1]
    bounds = {v: (params.floor, params.ceiling) for v in net.variables} if mode == "simplified" else {}
    return MarketInstance(tuple(bidders), tuple(items), 1.0, bounds)


def variable_indices(inst: MarketInstance, net: BooleanNetwork) -> np.ndarray:
    return np.array([inst.index(v) for v in net.variables])


def design_point(inst: MarketInstance, net: BooleanNetwork, values: Mapping[str, float] | Sequence[float]) -> np.ndarray:
    """Full multiplier vector: variables as given, auxiliary bidders at 1."""
    m = np.ones(inst.n_bidders)
    if isinstance(values, Mapping):
        for k, x in values.items():
            m[inst.index(k)] = x
    else:
        m[variable_indices(inst, net)] = values
    return m


def read_assignment(m, variables: Sequence[str], threshold: float = 2.1,
                    names: Sequence[str] | None = None) -> dict[str, bool]:
    """X = [m_X > threshold] for each variable.

    ``m`` is a name -> multiplier mapping, or a vector ordered as ``names``
    (defaults to ``variables``).
    """
    if not isinstance(m, Mapping):
        m = dict(zip(names if names is not None else variables, np.asarray(m, dtype=float)))
    return {v: bool(m[v] > threshold) for v in variables}


def build_clock(n: int, params: GateParams | None = None, mode: str = "simplified") -> MarketInstance:
    """Odd ring of NOT gates X_i = NOT(X_{i+1})."""
    return compile_network(clock_network(n), params, mode)


def clock_network(n: int) -> BooleanNetwork:
    if n < 3 or n % 2 == 0:
        raise ValueError("the clock needs an odd number of gates, at least 3")
    names = tuple(f"X{i}" for i in range(1, n + 1))
    return BooleanNetwork(names, {names[i]: (names[(i + 1) % n],) for i in range(n)})
