"""Market domain types, structural validation and the JSON instance format.

Values are assumed to be target-normalised (every bidder's ROS target is 1);
use :func:`normalize_targets` once at ingestion if raw values and targets
are available.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Zero",
    "Fixed",
    "Beta",
    "ValueSpec",
    "TieBreak",
    "UNIFORM",
    "ItemSpec",
    "MarketInstance",
    "Violation",
    "InstanceFormatError",
    "normalize_targets",
    "validate_instance",
    "instance_to_dict",
    "instance_from_dict",
    "save_instance",
    "load_instance",
]


@dataclass(frozen=True)
class Zero:
    """The bidder has no interest in the item."""


@dataclass(frozen=True)
class Fixed:
    value: float


@dataclass(frozen=True)
class Beta:
    """Value distributed as ``scale * Beta(a, b)`` with integer shape parameters."""

    a: int
    b: int
    scale: float = 1.0

    @property
    def mean(self) -> float:
        return self.scale * self.a / (self.a + self.b)


ValueSpec = Union[Zero, Fixed, Beta]


def is_zero(spec: ValueSpec) -> bool:
    return isinstance(spec, Zero) or (isinstance(spec, Fixed) and spec.value == 0.0)


@dataclass(frozen=True)
class TieBreak:
    """Tie-break policy: ``uniform`` split, or ``favor``/``disfavor`` a named bidder."""

    kind: str = "uniform"
    bidder: str | None = None

    def __post_init__(self):
        if self.kind not in ("uniform", "favor", "disfavor"):
            raise ValueError(f"unknown tie-break kind {self.kind!r}")
        if (self.kind == "uniform") != (self.bidder is None):
            raise ValueError("favor/disfavor need a bidder; uniform takes none")

    @classmethod
    def favor(cls, bidder: str) -> "TieBreak":
        return cls("favor", bidder)

    @classmethod
    def disfavor(cls, bidder: str) -> "TieBreak":
        return cls("disfavor", bidder)


UNIFORM = TieBreak()


@dataclass(frozen=True)
class ItemSpec:
    """One auctioned item.

    ``values`` maps bidder name to its value distribution; bidders that are
    absent (or explicitly :class:`Zero`) do not take part.  ``copies`` is a
    non-negative weight on the item's utility contribution.
    """

    values: Mapping[str, ValueSpec]
    reserve: float = 0.0
    tie_break: TieBreak = UNIFORM
    copies: float = 1.0

    def __post_init__(self):
        # Zero entries carry no information; dropping them keeps equality and
        # the file round-trip canonical.
        kept = {k: v for k, v in self.values.items() if not isinstance(v, Zero)}
        object.__setattr__(self, "values", kept)

    @property
    def interested(self) -> list[str]:
        return [k for k, v in self.values.items() if not is_zero(v)]

    @property
    def is_smooth(self) -> bool:
        return any(isinstance(v, Beta) for v in self.values.values())


@dataclass(frozen=True)
class MarketInstance:
    """Bidders, items and the auction mix ``lam`` (1 = second price, 0 = first price).

    ``bounds`` optionally pins bidders' multipliers to ``[lo, hi]``; it is only
    used by the simplified boolean-circuit construction, where floors and
    ceilings are imposed natively instead of through gadgets.
    """

    bidders: tuple[str, ...]
    items: tuple[ItemSpec, ...] = ()
    lam: float = 1.0
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "bidders", tuple(self.bidders))
        object.__setattr__(self, "items", tuple(self.items))
        object.__setattr__(
            self, "bounds", {k: (float(lo), float(hi)) for k, (lo, hi) in self.bounds.items()}
        )

    @property
    def n_bidders(self) -> int:
        return len(self.bidders)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def item_multiplicity(self) -> float:
        """Number of items counting ``copies``."""
        return float(sum(it.copies for it in self.items))

    def index(self, name: str) -> int:
        return self.bidders.index(name)

    @property
    def is_smooth(self) -> bool:
        return bool(self.items) and all(it.is_smooth for it in self.items)

    def with_lambda(self, lam: float) -> "MarketInstance":
        return MarketInstance(self.bidders, self.items, lam, self.bounds)

    def fingerprint(self) -> str:
        blob = json.dumps(instance_to_dict(self), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class Violation:
    message: str
    item: int | None = None
    bidder: str | None = None

    def __str__(self):
        where = []
        if self.item is not None:
            where.append(f"item {self.item}")
        if self.bidder is not None:
            where.append(f"bidder {self.bidder!r}")
        return f"{', '.join(where)}: {self.message}" if where else self.message


class InstanceFormatError(ValueError):
    """Malformed or invalid instance file."""


def normalize_targets(raw_values, targets) -> np.ndarray:
    """Divide each bidder's row of values by its ROS target.

    >>> normalize_targets([[4, 2]], [2]).tolist()
    [[2.0, 1.0]]
    """
    values = np.asarray(raw_values, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if values.ndim != 2 or targets.shape != (values.shape[0],):
        raise ValueError("need a bidder x item value matrix and one target per bidder")
    for i, tau in enumerate(targets):
        if not tau > 0:
            raise ValueError(f"bidder {i}: target must be positive, got {tau}")
    return values / targets[:, None]


def _finite(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def validate_instance(inst: MarketInstance) -> list[Violation]:
    out: list[Violation] = []
    if not (_finite(inst.lam) and 0.0 <= inst.lam <= 1.0):
        out.append(Violation("lambda out of [0,1]"))
    names = set(inst.bidders)
    if len(names) != len(inst.bidders):
        out.append(Violation("duplicate bidder names"))
    for name in inst.bidders:
        if not isinstance(name, str) or not name:
            out.append(Violation("bidder names must be non-empty strings", bidder=name))

    for j, item in enumerate(inst.items):
        for name, spec in item.values.items():
            if name not in names:
                out.append(Violation("unknown bidder", j, name))
            if isinstance(spec, Fixed):
                if not (_finite(spec.value) and spec.value >= 0):
                    out.append(Violation("fixed value must be finite and >= 0", j, name))
            elif isinstance(spec, Beta):
                if not all(isinstance(p, int) and not isinstance(p, bool) and p >= 1
                           for p in (spec.a, spec.b)):
                    out.append(Violation("beta parameters must be integers >= 1", j, name))
                if not (_finite(spec.scale) and spec.scale > 0):
                    out.append(Violation("beta scale must be positive", j, name))
            else:
                out.append(Violation(f"unsupported value spec {spec!r}", j, name))
        if not item.interested:
            out.append(Violation("item has no interested bidder", j))
        if not (_finite(item.reserve) and item.reserve >= 0):
            out.append(Violation("reserve must be finite and >= 0", j))
        if not (_finite(item.copies) and item.copies > 0):
            out.append(Violation("copies must be positive", j))
        tb = item.tie_break
        if tb.kind != "uniform" and tb.bidder not in item.interested:
            out.append(Violation(f"{tb.kind} tie-break names a bidder with no value", j, tb.bidder))
        if item.is_smooth:
            if item.reserve != 0:
                out.append(Violation("smooth item with nonzero reserve", j))
            if tb.kind != "uniform":
                out.append(Violation("smooth item with directed tie-break", j))
            if any(isinstance(v, Fixed) and v.value != 0 for v in item.values.values()):
                out.append(Violation("smooth item mixes fixed and beta values", j))

    for name, (lo, hi) in inst.bounds.items():
        if name not in names:
            out.append(Violation("bounds for unknown bidder", bidder=name))
        if not (_finite(lo) and _finite(hi) and 0 <= lo <= hi):
            out.append(Violation("bounds must satisfy 0 <= lo <= hi", bidder=name))
    return out


# ---------------------------------------------------------------------------
# file format

_ITEM_KEYS = {"values", "reserve", "tie_break", "copies"}
_TOP_KEYS = {"lambda", "bidders", "items", "bounds"}


def _spec_to_json(spec: ValueSpec):
    if isinstance(spec, Fixed):
        return {"fixed": spec.value}
    return {"beta": [spec.a, spec.b, spec.scale]}


def _tie_to_json(tb: TieBreak):
    return "uniform" if tb.kind == "uniform" else {tb.kind: tb.bidder}


def instance_to_dict(inst: MarketInstance) -> dict:
    items = []
    for item in inst.items:
        items.append({
            "values": {k: _spec_to_json(v) for k, v in item.values.items()},
            "reserve": item.reserve,
            "tie_break": _tie_to_json(item.tie_break),
            "copies": item.copies,
        })
    d = {"lambda": inst.lam, "bidders": list(inst.bidders), "items": items}
    if inst.bounds:
        d["bounds"] = {k: [lo, hi] for k, (lo, hi) in inst.bounds.items()}
    return d


def _number(x, where: str) -> float:
    if not _finite(x):
        raise InstanceFormatError(f"{where}: expected a finite number, got {x!r}")
    return x


def _parse_spec(raw, where: str) -> ValueSpec:
    if not isinstance(raw, dict) or len(raw) != 1:
        raise InstanceFormatError(f"{where}: expected {{'fixed': v}} or {{'beta': [a, b, scale]}}")
    (kind, arg), = raw.items()
    if kind == "fixed":
        return Fixed(_number(arg, where + ".fixed"))
    if kind == "beta":
        if not isinstance(arg, list) or len(arg) not in (2, 3):
            raise InstanceFormatError(f"{where}.beta: expected [a, b] or [a, b, scale]")
        a, b = arg[0], arg[1]
        for p in (a, b):
            if not isinstance(p, int) or isinstance(p, bool):
                raise InstanceFormatError(f"{where}.beta: shape parameters must be integers")
        scale = _number(arg[2], where + ".beta[2]") if len(arg) == 3 else 1.0
        return Beta(a, b, scale)
    raise InstanceFormatError(f"{where}: unknown value kind {kind!r}")


def _parse_tie(raw, where: str) -> TieBreak:
    if raw == "uniform":
        return UNIFORM
    if isinstance(raw, dict) and len(raw) == 1:
        (kind, name), = raw.items()
        if kind in ("favor", "disfavor") and isinstance(name, str):
            return TieBreak(kind, name)
    raise InstanceFormatError(f"{where}: expected 'uniform', {{'favor': name}} or {{'disfavor': name}}")


def instance_from_dict(d) -> MarketInstance:
    if not isinstance(d, dict):
        raise InstanceFormatError("top level: expected an object")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise InstanceFormatError(f"top level: unknown fields {sorted(unknown)}")
    for key in ("lambda", "bidders"):
        if key not in d:
            raise InstanceFormatError(f"top level: missing {key!r}")
    lam = _number(d["lambda"], "lambda")
    if not 0 <= lam <= 1:
        raise InstanceFormatError("lambda out of [0,1]")
    bidders = d["bidders"]
    if not isinstance(bidders, list) or not all(isinstance(b, str) for b in bidders):
        raise InstanceFormatError("bidders: expected a list of strings")

    items = []
    for j, raw in enumerate(d.get("items", [])):
        where = f"items[{j}]"
        if not isinstance(raw, dict):
            raise InstanceFormatError(f"{where}: expected an object")
        unknown = set(raw) - _ITEM_KEYS
        if unknown:
            raise InstanceFormatError(f"{where}: unknown fields {sorted(unknown)}")
        values_raw = raw.get("values")
        if not isinstance(values_raw, dict):
            raise InstanceFormatError(f"{where}.values: expected an object")
        values = {}
        for name, spec in values_raw.items():
            if name not in bidders:
                raise InstanceFormatError(f"{where}: references missing bidder {name!r} (item {j})")
            values[name] = _parse_spec(spec, f"{where}.values.{name}")
        items.append(ItemSpec(
            values,
            reserve=_number(raw.get("reserve", 0.0), where + ".reserve"),
            tie_break=_parse_tie(raw.get("tie_break", "uniform"), where + ".tie_break"),
            copies=_number(raw.get("copies", 1.0), where + ".copies"),
        ))

    bounds = {}
    for name, pair in d.get("bounds", {}).items():
        if not isinstance(pair, list) or len(pair) != 2:
            raise InstanceFormatError(f"bounds.{name}: expected [lo, hi]")
        bounds[name] = (_number(pair[0], f"bounds.{name}[0]"), _number(pair[1], f"bounds.{name}[1]"))

    inst = MarketInstance(tuple(bidders), tuple(items), lam, bounds)
    problems = validate_instance(inst)
    if problems:
        raise InstanceFormatError("; ".join(str(p) for p in problems))
    return inst


def save_instance(inst: MarketInstance, path) -> None:
    Path(path).write_text(json.dumps(instance_to_dict(inst), indent=2) + "\n")


def load_instance(path) -> MarketInstance:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return instance_from_dict(raw)
    except InstanceFormatError as exc:
        raise InstanceFormatError(f"{path}: {exc}") from exc


def make_instance(bidders: Sequence[str], items: Sequence[ItemSpec], lam: float = 1.0,
                  bounds: Mapping[str, tuple[float, float]] | None = None) -> MarketInstance:
    """Build an instance and raise if it violates any structural invariant."""
    inst = MarketInstance(tuple(bidders), tuple(items), lam, bounds or {})
    problems = validate_instance(inst)
    if problems:
        raise ValueError("; ".join(str(p) for p in problems))
    return inst
