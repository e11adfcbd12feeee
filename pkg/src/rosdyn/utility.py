"""Per-bidder quasi-linear utilities U_i(m) under the lambda-mixed auction.

Two evaluation paths exist:

* readable reference functions (:func:`discrete_outcome`,
  :func:`smooth_item_utility`, :func:`mc_utility`) that work on one item and
  a name -> multiplier mapping;
* :class:`UtilityModel`, which compiles an instance into flat arrays and
  evaluates every item with numba kernels.  This is what the integrator uses.

For a smooth item and bidder ``i`` facing opponents whose highest bid has CDF
``G``, the expected utility is

    u_i = E_v[ v (1 - m_i) G(m_i v) + lam * H(m_i v) ],   H(b) = int_0^b G(x) dx

which is evaluated by Gauss-Legendre quadrature in ``v`` (outer) and ``x``
(inner), with both intervals split where an opponent's bid support ends so
every piece is a polynomial for integer Beta parameters.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass
from typing import Mapping

import numba
import numpy as np
from scipy import special

from .market import Beta, Fixed, ItemSpec, MarketInstance

__all__ = [
    "TIE_RTOL",
    "Quadrature",
    "ItemOutcome",
    "discrete_outcome",
    "smooth_item_utility",
    "mc_utility",
    "UtilityModel",
    "utilities",
    "utility_gradient",
]

# Bids closer than this (relative) count as tied; gadget constructions place
# bids exactly on reserves and rounding must not break those ties.
TIE_RTOL = 1e-12


@dataclass(frozen=True)
class Quadrature:
    nodes: int = 64

    def __post_init__(self):
        if self.nodes < 2:
            raise ValueError("quadrature needs at least 2 nodes")

    def unit_rule(self) -> tuple[np.ndarray, np.ndarray]:
        """Nodes and weights on [0, 1]."""
        x, w = np.polynomial.legendre.leggauss(self.nodes)
        return 0.5 * (x + 1.0), 0.5 * w


DEFAULT_QUAD = Quadrature()


@dataclass(frozen=True)
class ItemOutcome:
    allocation: dict[str, float]
    payment: dict[str, float]
    winners: tuple[str, ...]

    def utility(self, item: ItemSpec) -> dict[str, float]:
        return {
            k: self.allocation.get(k, 0.0) * item.values[k].value - self.payment.get(k, 0.0)
            for k in item.values
        }


def _tol(a: float, b: float) -> float:
    return TIE_RTOL * max(1.0, abs(a), abs(b))


# ---------------------------------------------------------------------------
# discrete items


def discrete_outcome(item: ItemSpec, m: Mapping[str, float], lam: float) -> ItemOutcome:
    """Allocation and payments of a fixed-value item at multipliers ``m``."""
    if item.is_smooth:
        raise ValueError("discrete_outcome needs an item with fixed values only")
    r = item.reserve
    bids = {}
    for name, spec in item.values.items():
        v, mi = spec.value, float(m[name])
        b = mi * v
        if v > 0 and mi > 0 and b >= r - _tol(b, r):
            bids[name] = b
    if not bids:
        return ItemOutcome({}, {}, ())

    top = max(bids.values())
    tied = [k for k, b in bids.items() if top - b <= _tol(top, b)]
    ordered = sorted(bids.values(), reverse=True)
    second = top if len(tied) > 1 else (ordered[1] if len(ordered) > 1 else 0.0)

    tb = item.tie_break
    if tb.kind == "favor" and tb.bidder in tied:
        winners = [tb.bidder]
    elif tb.kind == "disfavor" and tb.bidder in tied:
        if len(tied) > 1:
            winners = [k for k in tied if k != tb.bidder]
        elif top > r + _tol(top, r):
            winners = tied
        else:
            winners = []
    else:
        winners = tied
    if not winners:
        return ItemOutcome({}, {}, ())

    share = 1.0 / len(winners)
    alloc, pay = {}, {}
    for k in winners:
        price = lam * max(second, r) + (1.0 - lam) * bids[k]
        alloc[k] = share
        pay[k] = share * price
    return ItemOutcome(alloc, pay, tuple(winners))


# ---------------------------------------------------------------------------
# smooth items, reference path


def _beta_cdf(x, spec: Beta):
    return special.betainc(spec.a, spec.b, np.clip(x / spec.scale, 0.0, 1.0))


def _opponent_max_cdf(x, opp: list[tuple[float, Beta]]):
    g = np.ones_like(x)
    for ms, spec in opp:
        g = g * _beta_cdf(x / ms, spec)
    return g


def _pieces(points, lo, hi):
    cuts = sorted(p for p in points if lo < p < hi)
    edges = [lo] + cuts + [hi]
    return list(zip(edges[:-1], edges[1:]))


def _bidder_smooth_utility(spec: Beta, mi: float, opp, lam: float, t, w) -> float:
    mean = spec.scale * spec.a / (spec.a + spec.b)
    if not opp:
        return mean * (1.0 - (1.0 - lam) * mi)
    tops = sorted(ms * s.scale for ms, s in opp)

    # H at the kinks of G, accumulated piece by piece
    knots = [0.0] + tops
    h_knots = [0.0]
    for lo, hi in zip(knots[:-1], knots[1:]):
        x = lo + (hi - lo) * t
        h_knots.append(h_knots[-1] + (hi - lo) * np.dot(w, _opponent_max_cdf(x, opp)))
    knots_arr = np.array(knots)
    h_knots = np.array(h_knots)

    total = 0.0
    for lo, hi in _pieces([b / mi for b in tops], 0.0, spec.scale):
        v = lo + (hi - lo) * t
        b = mi * v
        k = np.searchsorted(knots_arr, b, side="right") - 1
        base = knots_arr[k]
        # inner tensor grid: x from the last kink below b up to b
        x = base[:, None] + (b - base)[:, None] * t[None, :]
        inner = (_opponent_max_cdf(x, opp) @ w) * (b - base)
        above = np.maximum(b - knots_arr[-1], 0.0)
        inner = np.where(b > knots_arr[-1], 0.0, inner)
        h = h_knots[k] + inner + above
        g = _opponent_max_cdf(b, opp)
        dens = special.beta(spec.a, spec.b)
        tt = v / spec.scale
        pdf = tt ** (spec.a - 1) * (1.0 - tt) ** (spec.b - 1) / dens / spec.scale
        total += (hi - lo) * np.dot(w, pdf * (v * (1.0 - mi) * g + lam * h))
    return float(total)


def smooth_item_utility(item: ItemSpec, m: Mapping[str, float], lam: float,
                        quad: Quadrature = DEFAULT_QUAD) -> dict[str, float]:
    """Expected utility of each bidder on an item with Beta values."""
    if not item.is_smooth:
        raise ValueError("smooth_item_utility needs an item with Beta values")
    t, w = quad.unit_rule()
    active = {k: s for k, s in item.values.items() if isinstance(s, Beta) and m[k] > 0}
    out = {k: 0.0 for k in item.values}
    for name, spec in active.items():
        opp = [(float(m[k]), s) for k, s in active.items() if k != name]
        out[name] = _bidder_smooth_utility(spec, float(m[name]), opp, lam, t, w)
    return out


def mc_utility(item: ItemSpec, m: Mapping[str, float], lam: float, samples: int,
               seed: int, chunk: int = 1_000_000) -> tuple[dict[str, float], dict[str, float]]:
    """Monte Carlo estimate and standard error of each bidder's utility on a smooth item."""
    if samples <= 0:
        raise ValueError("samples must be positive")
    names = [k for k, s in item.values.items() if isinstance(s, Beta)]
    rng = np.random.default_rng(seed)
    s1 = np.zeros(len(names))
    s2 = np.zeros(len(names))
    done = 0
    while done < samples:
        n = min(chunk, samples - done)
        vals = np.stack([item.values[k].scale * rng.beta(item.values[k].a, item.values[k].b, n)
                         for k in names])
        mult = np.array([float(m[k]) for k in names])[:, None]
        bids = mult * vals
        for r, k in enumerate(names):
            if mult[r, 0] <= 0:
                continue
            others = np.delete(bids, r, axis=0)
            top = others.max(axis=0) if len(others) else np.zeros(n)
            win = bids[r] > top
            u = np.where(win, vals[r] - lam * top - (1.0 - lam) * bids[r], 0.0)
            s1[r] += u.sum()
            s2[r] += (u * u).sum()
        done += n
    mean = s1 / samples
    var = np.maximum(s2 / samples - mean**2, 0.0)
    se = np.sqrt(var / samples)
    est = {k: 0.0 for k in item.values}
    err = {k: 0.0 for k in item.values}
    for r, k in enumerate(names):
        est[k], err[k] = float(mean[r]), float(se[r])
    return est, err


# ---------------------------------------------------------------------------
# compiled kernels


@numba.njit(cache=True)
def _tie_tol(a, b):
    return 1e-12 * max(1.0, abs(a), abs(b))


@numba.njit(cache=True)
def _discrete_kernel(m, idx, val, reserve, tiek, tiep, copies, lam, out):
    n_items, width = idx.shape
    bids = np.empty(width)
    elig = np.zeros(width, dtype=np.bool_)
    tied = np.zeros(width, dtype=np.bool_)
    for j in range(n_items):
        r = reserve[j]
        top = -1.0
        n_elig = 0
        for k in range(width):
            elig[k] = False
            i = idx[j, k]
            if i < 0:
                continue
            b = m[i] * val[j, k]
            bids[k] = b
            if val[j, k] > 0 and m[i] > 0 and b >= r - _tie_tol(b, r):
                elig[k] = True
                n_elig += 1
                if b > top:
                    top = b
        if n_elig == 0:
            continue
        n_tied = 0
        second = 0.0
        for k in range(width):
            tied[k] = False
            if not elig[k]:
                continue
            if top - bids[k] <= _tie_tol(top, bids[k]):
                tied[k] = True
                n_tied += 1
            elif bids[k] > second:
                second = bids[k]
        if n_tied > 1:
            second = top
        p = tiep[j]
        if tiek[j] == 1 and p >= 0 and tied[p]:
            for k in range(width):
                tied[k] = k == p
            n_tied = 1
        elif tiek[j] == 2 and p >= 0 and tied[p]:
            if n_tied > 1:
                tied[p] = False
                n_tied -= 1
            elif not top > r + _tie_tol(top, r):
                n_tied = 0
        if n_tied == 0:
            continue
        share = copies[j] / n_tied
        floor = max(second, r)
        for k in range(width):
            if tied[k]:
                price = lam * floor + (1.0 - lam) * bids[k]
                out[idx[j, k]] += share * (val[j, k] - price)


@numba.njit(cache=True)
def _log_binom(n, k):
    return math.lgamma(n + 1.0) - math.lgamma(k + 1.0) - math.lgamma(n - k + 1.0)


@numba.njit(cache=True)
def _betainc_int(y, a, b):
    """Regularised incomplete beta for integer a, b via the binomial tail sum."""
    if y <= 0.0:
        return 0.0
    if y >= 1.0:
        return 1.0
    return _betainc_logs(y, math.log(y), math.log1p(-y), a, b,
                         _log_binom(a + b - 1, a), _log_binom(a + b - 1, b))


@numba.njit(cache=True)
def _betainc_logs(y, ly, l1y, a, b, lc_a, lc_b):
    # sum_{j=a}^{n} C(n,j) y^j (1-y)^(n-j); the complement is summed instead
    # past the mean so that the leading term never underflows
    n = a + b - 1
    if y > a / (a + b):
        term = math.exp(lc_b + b * l1y + (n - b) * ly)
        ratio = (1.0 - y) / y
        total = 0.0
        for j in range(b, n + 1):
            total += term
            term *= (n - j) / (j + 1.0) * ratio
        return 1.0 - total
    term = math.exp(lc_a + a * ly + (n - a) * l1y)
    ratio = y / (1.0 - y)
    total = 0.0
    for j in range(a, n + 1):
        total += term
        term *= (n - j) / (j + 1.0) * ratio
    return total


def exact_pair_nodes(ai: int, bi: int, as_: int, bs: int) -> int:
    """Gauss-Legendre nodes that integrate one piece of the pair integrand exactly.

    On each piece the integrand is a polynomial in the bidder's value of
    degree at most ai + bi + as + bs - 1.
    """
    return (ai + bi + as_ + bs) // 2 + 1


@numba.njit(cache=True)
def _pair_bidder(mi, ai, bi, si, ms, as_, bs, ss, lam, tn, tw):
    if mi <= 0.0:
        return 0.0
    if ms <= 0.0:
        return si * ai / (ai + bi) * (1.0 - (1.0 - lam) * mi)
    top = ms * ss
    lb_i = math.lgamma(ai) + math.lgamma(bi) - math.lgamma(ai + bi)
    lb_s = math.lgamma(as_) + math.lgamma(bs) - math.lgamma(as_ + bs)
    lc_a = _log_binom(as_ + bs - 1, as_)
    lc_b = _log_binom(as_ + bs - 1, bs)
    mean_s = as_ / (as_ + bs)
    tstar = min(top / (mi * si), 1.0)
    total = 0.0
    for piece in range(2):
        lo = 0.0 if piece == 0 else tstar
        hi = tstar if piece == 0 else 1.0
        if hi <= lo:
            continue
        acc = 0.0
        for q in range(tn.shape[0]):
            t = lo + (hi - lo) * tn[q]
            v = si * t
            b = mi * v
            if piece == 1:
                g = 1.0
                h = top * (1.0 - mean_s) + b - top
            else:
                y = b / top
                ly = math.log(y)
                l1y = math.log1p(-y)
                g = _betainc_logs(y, ly, l1y, as_, bs, lc_a, lc_b)
                ia1 = g - math.exp(as_ * ly + bs * l1y - lb_s) / as_
                h = top * (y * g - mean_s * ia1)
            pdf = math.exp((ai - 1) * math.log(t) + (bi - 1) * math.log1p(-t) - lb_i)
            acc += tw[q] * pdf * (v * (1.0 - mi) * g + lam * h)
        total += (hi - lo) * acc
    return total


@numba.njit(cache=True)
def _pair_kernel(m, idx, shape, scale, copies, nq, lam, tn_all, tw_all, out):
    for j in range(idx.shape[0]):
        i0, i1 = idx[j, 0], idx[j, 1]
        k = nq[j]
        tn, tw = tn_all[k, :k], tw_all[k, :k]
        u0 = _pair_bidder(m[i0], shape[j, 0], shape[j, 1], scale[j, 0],
                          m[i1], shape[j, 2], shape[j, 3], scale[j, 1], lam, tn, tw)
        u1 = _pair_bidder(m[i1], shape[j, 2], shape[j, 3], scale[j, 1],
                          m[i0], shape[j, 0], shape[j, 1], scale[j, 0], lam, tn, tw)
        out[i0] += copies[j] * u0
        out[i1] += copies[j] * u1


@numba.njit(cache=True)
def compiled_field(m, lam, d_idx, d_val, d_res, d_tiek, d_tiep, d_cop,
                   p_idx, p_shape, p_scale, p_cop, p_nq, tn, tw, lo, hi):
    """U(m) from compiled item arrays, with outward motion blocked at bounds."""
    out = np.zeros(m.shape[0])
    if d_idx.shape[0]:
        _discrete_kernel(m, d_idx, d_val, d_res, d_tiek, d_tiep, d_cop, lam, out)
    if p_idx.shape[0]:
        _pair_kernel(m, p_idx, p_shape, p_scale, p_cop, p_nq, lam, tn, tw, out)
    for i in range(m.shape[0]):
        if (m[i] <= lo[i] and out[i] < 0) or (m[i] >= hi[i] and out[i] > 0):
            out[i] = 0.0
    return out


@functools.lru_cache(maxsize=8)
def _rule_tables(nodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rules on [0, 1] for every node count up to ``nodes``; row k holds the k-node rule."""
    tn = np.zeros((nodes + 1, nodes))
    tw = np.zeros((nodes + 1, nodes))
    for k in range(2, nodes + 1):
        tn[k, :k], tw[k, :k] = Quadrature(k).unit_rule()
    tn.flags.writeable = False
    tw.flags.writeable = False
    return tn, tw


class UtilityModel:
    """An instance compiled for repeated evaluation of U(m).

    Two-bidder Beta items use a closed-form inner integral and cap the outer
    node count at :func:`exact_pair_nodes`, beyond which more nodes cannot
    change the result.

    ``fully_compiled`` is true when every item is handled by a numba kernel,
    in which case :attr:`kernel_args` can be passed to :func:`compiled_field`.
    """

    def __init__(self, inst: MarketInstance, quad: Quadrature = DEFAULT_QUAD):
        self.inst = inst
        self.quad = quad
        self.lam = float(inst.lam)
        self.n = inst.n_bidders
        pos = {name: i for i, name in enumerate(inst.bidders)}
        self._pos = pos
        self._tn, self._tw = _rule_tables(quad.nodes)

        discrete = [it for it in inst.items if not it.is_smooth]
        pairs = [it for it in inst.items if it.is_smooth and len(it.interested) == 2
                 and all(isinstance(s, Beta) for s in it.values.values())]
        self._general = [it for it in inst.items if it.is_smooth and not any(it is p for p in pairs)]

        width = max((len(it.values) for it in discrete), default=1)
        nd = len(discrete)
        self._d_idx = np.full((nd, width), -1, dtype=np.int64)
        self._d_val = np.zeros((nd, width))
        self._d_res = np.zeros(nd)
        self._d_tiek = np.zeros(nd, dtype=np.int64)
        self._d_tiep = np.full(nd, -1, dtype=np.int64)
        self._d_cop = np.zeros(nd)
        for j, it in enumerate(discrete):
            for k, (name, spec) in enumerate(it.values.items()):
                self._d_idx[j, k] = pos[name]
                self._d_val[j, k] = spec.value if isinstance(spec, Fixed) else 0.0
                if it.tie_break.bidder == name:
                    self._d_tiep[j] = k
            self._d_res[j] = it.reserve
            self._d_tiek[j] = {"uniform": 0, "favor": 1, "disfavor": 2}[it.tie_break.kind]
            self._d_cop[j] = it.copies

        npair = len(pairs)
        self._p_idx = np.zeros((npair, 2), dtype=np.int64)
        self._p_shape = np.zeros((npair, 4), dtype=np.int64)
        self._p_scale = np.zeros((npair, 2))
        self._p_cop = np.zeros(npair)
        self._p_nq = np.zeros(npair, dtype=np.int64)
        for j, it in enumerate(pairs):
            (n0, s0), (n1, s1) = list(it.values.items())
            self._p_idx[j] = (pos[n0], pos[n1])
            self._p_shape[j] = (s0.a, s0.b, s1.a, s1.b)
            self._p_scale[j] = (s0.scale, s1.scale)
            self._p_cop[j] = it.copies
            self._p_nq[j] = min(quad.nodes, exact_pair_nodes(s0.a, s0.b, s1.a, s1.b))

        self.fully_compiled = not self._general
        self.kernel_args = (self.lam, self._d_idx, self._d_val, self._d_res, self._d_tiek,
                            self._d_tiep, self._d_cop, self._p_idx, self._p_shape,
                            self._p_scale, self._p_cop, self._p_nq, self._tn, self._tw)

    def __call__(self, m) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        if m.shape != (self.n,):
            raise ValueError(f"expected {self.n} multipliers, got shape {m.shape}")
        out = np.zeros(self.n)
        if self._d_idx.shape[0]:
            _discrete_kernel(m, self._d_idx, self._d_val, self._d_res, self._d_tiek,
                             self._d_tiep, self._d_cop, self.lam, out)
        if self._p_idx.shape[0]:
            _pair_kernel(m, self._p_idx, self._p_shape, self._p_scale, self._p_cop,
                         self._p_nq, self.lam, self._tn, self._tw, out)
        if self._general:
            named = dict(zip(self.inst.bidders, m))
            for it in self._general:
                for name, u in smooth_item_utility(it, named, self.lam, self.quad).items():
                    out[self._pos[name]] += it.copies * u
        return out


def item_utility(item: ItemSpec, m: Mapping[str, float], lam: float,
                 quad: Quadrature = DEFAULT_QUAD) -> dict[str, float]:
    """Per-bidder utility on one item through the reference path."""
    if item.is_smooth:
        return smooth_item_utility(item, m, lam, quad)
    return discrete_outcome(item, m, lam).utility(item)


def utilities(inst: MarketInstance, m, quad: Quadrature = DEFAULT_QUAD) -> np.ndarray:
    """U(m) for every bidder, in ``inst.bidders`` order."""
    return UtilityModel(inst, quad)(m)


def utility_gradient(inst_or_model, m, h: float = 1e-4) -> np.ndarray:
    """Central finite-difference Jacobian; entry [i, j] is dU_i/dm_j."""
    if h <= 0:
        raise ValueError("finite-difference step must be positive")
    model = inst_or_model if isinstance(inst_or_model, UtilityModel) else UtilityModel(inst_or_model)
    m = np.asarray(m, dtype=float)
    jac = np.zeros((model.n, model.n))
    for j in range(model.n):
        e = np.zeros(model.n)
        e[j] = h
        jac[:, j] = (model(m + e) - model(m - e)) / (2.0 * h)
    return jac
