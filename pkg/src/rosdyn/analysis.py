"""Orbit classification, bistability scans, lambda sweeps and stability checks."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .dynamics import Trajectory, _bound_arrays, integrate, vector_field
from .market import MarketInstance
from .utility import UtilityModel

__all__ = [
    "OrbitClass",
    "PeriodSettings",
    "SpectralSettings",
    "detect_equilibrium",
    "detect_period",
    "dominant_frequencies",
    "nearest_rational",
    "classify_orbit",
    "Cluster",
    "bistability_scan",
    "SweepRow",
    "lambda_sweep",
    "is_equilibrium",
    "NotAnEquilibrium",
    "StabilityReport",
    "check_coordinatewise_stability",
    "random_projection",
]


@dataclass
class OrbitClass:
    kind: str  # equilibrium | periodic | quasi-periodic | unclassified
    point: np.ndarray | None = None
    period: float | None = None
    amplitude: np.ndarray | None = None
    frequencies: tuple[float, ...] = ()
    diagnostics: dict = field(default_factory=dict)

    def summary(self) -> str:
        if self.kind == "equilibrium":
            return "equilibrium at " + ", ".join(f"{x:.6g}" for x in self.point)
        if self.kind == "periodic":
            return f"periodic, period {self.period:.6g}"
        if self.kind == "quasi-periodic":
            f = ", ".join(f"{x:.6g}" for x in self.frequencies)
            return f"quasi-periodic (empirical), frequencies {f}"
        return "unclassified"


def _utilities_of(traj: Trajectory, model: UtilityModel | None):
    if traj.utilities is not None:
        return traj.utilities
    if model is None:
        raise ValueError("trajectory has no recorded utilities; pass a model")
    return np.array([model(x) for x in traj.states])


def detect_equilibrium(traj: Trajectory, eps: float = 1e-6, window: float = 10.0,
                       model: UtilityModel | None = None) -> np.ndarray | None:
    """Terminal state if |U|_inf <= eps at every sample of the final ``window``."""
    if len(traj.times) == 0 or traj.times[-1] - traj.times[0] < window:
        return None
    u = _utilities_of(traj, model)
    tail = traj.times >= traj.times[-1] - window
    if np.all(np.abs(u[tail]) <= eps):
        return traj.states[-1].copy()
    return None


@dataclass(frozen=True)
class PeriodSettings:
    burn_in: float = 0.5
    delta: float = 0.01
    min_recurrences: int = 3
    agreement: float = 0.02


def _diameter(x: np.ndarray, cap: int = 2000) -> float:
    if len(x) > cap:
        x = x[np.linspace(0, len(x) - 1, cap).astype(int)]
    best = 0.0
    for k in range(len(x)):
        best = max(best, float(np.max(np.linalg.norm(x - x[k], axis=1))))
    return best


def _parabolic(y: np.ndarray, k: int) -> float:
    """Offset in (-1, 1) of the vertex of the parabola through y[k-1:k+2]."""
    if k <= 0 or k >= len(y) - 1:
        return 0.0
    a, b, c = y[k - 1], y[k], y[k + 1]
    den = a - 2 * b + c
    return 0.0 if den == 0 else float(np.clip(0.5 * (a - c) / den, -1.0, 1.0))


def detect_period(traj: Trajectory, settings: PeriodSettings = PeriodSettings()) -> float | None:
    """Recurrence-based period estimate, or None without consistent recurrences."""
    start = traj.times[0] + settings.burn_in * (traj.times[-1] - traj.times[0])
    keep = traj.times >= start
    t, x = traj.times[keep], traj.states[keep]
    if len(t) < 8:
        return None
    diam = _diameter(x)
    if diam <= 0:
        return None
    d2 = np.sum((x - x[0]) ** 2, axis=1)
    thr2 = (settings.delta * diam) ** 2
    close = d2 < thr2
    # leave the neighbourhood of the reference point before counting returns
    first_far = np.flatnonzero(~close)
    if len(first_far) == 0:
        return None
    hits = []
    k = first_far[0]
    while k < len(t):
        if close[k]:
            j = k
            while j < len(t) and close[j]:
                j += 1
            seg = np.arange(k, j)
            m = seg[np.argmin(d2[seg])]
            if 0 < m < len(t) - 1:
                hits.append(t[m] + _parabolic(d2, m) * (t[m + 1] - t[m]))
            k = j
        else:
            k += 1
    if len(hits) < settings.min_recurrences:
        return None
    gaps = np.diff(np.concatenate([[t[0]], hits]))
    med = np.median(gaps)
    if med <= 0 or np.any(np.abs(gaps - med) > settings.agreement * med):
        return None
    return float(np.mean(gaps))


@dataclass(frozen=True)
class SpectralSettings:
    burn_in: float = 0.5
    max_denominator: int = 20
    tolerance: float = 1e-3
    peak_floor: float = 0.1
    pad_factor: int = 8


def nearest_rational(r: float, max_denominator: int = 20) -> Fraction:
    return Fraction(r).limit_denominator(max_denominator)


def dominant_frequencies(traj: Trajectory, settings: SpectralSettings = SpectralSettings()):
    """Spectral peaks (frequency, relative power) of the post-burn-in orbit, strongest first.

    Each coordinate's Hann-windowed periodogram is normalised to unit peak and
    the normalised spectra are summed, so a weakly coupled but oscillating
    group of bidders still contributes its frequencies.
    """
    start = traj.times[0] + settings.burn_in * (traj.times[-1] - traj.times[0])
    keep = traj.times >= start
    t, x = traj.times[keep], traj.states[keep]
    if len(t) < 16:
        return []
    dt = float(np.median(np.diff(t)))
    n = len(t)
    nfft = settings.pad_factor * (1 << int(np.ceil(np.log2(n))))
    win = np.hanning(n)
    total = np.zeros(nfft // 2 + 1)
    for col in x.T:
        y = col - col.mean()
        if np.ptp(y) <= 1e-9 * max(1.0, np.abs(col).max()):
            continue
        p = np.abs(np.fft.rfft(y * win, nfft)) ** 2
        p[0] = 0.0
        total += p / p.max()
    if not total.any():
        return []
    freqs = np.fft.rfftfreq(nfft, dt)
    peaks = [k for k in range(1, len(total) - 1) if total[k] > total[k - 1] and total[k] >= total[k + 1]]
    top = max(total[k] for k in peaks) if peaks else 0.0
    out = []
    for k in peaks:
        if total[k] < settings.peak_floor * top:
            continue
        off = _parabolic(np.log(total + 1e-300), k)
        out.append((float(freqs[k] + off * (freqs[1] - freqs[0])), float(total[k] / top)))
    out.sort(key=lambda fp: -fp[1])
    return out


def classify_orbit(traj: Trajectory, model: UtilityModel | None = None, eps: float = 1e-6,
                   window: float = 10.0, period: PeriodSettings = PeriodSettings(),
                   spectral: SpectralSettings = SpectralSettings()) -> OrbitClass:
    point = detect_equilibrium(traj, eps, window, model)
    if point is not None:
        return OrbitClass("equilibrium", point=point)
    start = traj.times[0] + period.burn_in * (traj.times[-1] - traj.times[0])
    tail = traj.states[traj.times >= start]
    amp = 0.5 * (tail.max(axis=0) - tail.min(axis=0)) if len(tail) else None
    tau = detect_period(traj, period)
    if tau is not None:
        return OrbitClass("periodic", period=tau, amplitude=amp)
    peaks = dominant_frequencies(traj, spectral)
    diag = {"peaks": peaks}
    bounded = bool(np.all(np.isfinite(traj.states)) and np.abs(traj.states).max() < 1e6)
    if bounded and len(peaks) >= 2:
        f1 = peaks[0][0]
        for f, _ in peaks[1:]:
            r = max(f, f1) / min(f, f1)
            q = nearest_rational(r, spectral.max_denominator)
            if abs(r - float(q)) > spectral.tolerance:
                diag.update(ratio=r, nearest=str(q))
                return OrbitClass("quasi-periodic", amplitude=amp, frequencies=(f1, f), diagnostics=diag)
    return OrbitClass("unclassified", amplitude=amp, diagnostics=diag)


@dataclass
class Cluster:
    point: np.ndarray
    count: int


def _box_starts(n: int, n_inits: int, box, rng) -> np.ndarray:
    lo, hi = box
    lo = np.broadcast_to(np.asarray(lo, dtype=float), (n,))
    hi = np.broadcast_to(np.asarray(hi, dtype=float), (n,))
    return lo + (hi - lo) * rng.random((n_inits, n))


def cluster_points(points: Sequence[np.ndarray], tol: float = 1e-3) -> list[Cluster]:
    """Greedy clustering in the sup norm after a lexicographic sort (order independent)."""
    pts = sorted((np.asarray(p) for p in points), key=lambda p: tuple(np.round(p, 6)))
    clusters: list[Cluster] = []
    for p in pts:
        for c in clusters:
            if np.max(np.abs(c.point - p)) <= tol:
                c.count += 1
                break
        else:
            clusters.append(Cluster(p.copy(), 1))
    return clusters


def bistability_scan(inst: MarketInstance, n_inits: int, box=(1.1, 3.0), seed: int = 0,
                     horizon: float = 200.0, dt: float = 0.01, tol: float = 1e-3,
                     starts: np.ndarray | None = None) -> tuple[list[Cluster], int]:
    """Cluster converged endpoints from seeded uniform starts.

    Returns (clusters, number of starts that did not converge).
    """
    if starts is None:
        if n_inits < 1:
            raise ValueError("need at least one initial condition")
        starts = _box_starts(inst.n_bidders, n_inits, box, np.random.default_rng(seed))
    model = UtilityModel(inst)
    ends, missed = [], 0
    for m0 in starts:
        traj = integrate(inst, m0, horizon, dt, sample_every=max(dt, 0.1), model=model)
        point = detect_equilibrium(traj)
        if point is None:
            missed += 1
        else:
            ends.append(point)
    return cluster_points(ends, tol), missed


@dataclass
class SweepRow:
    lam: float
    m1_min: float
    m1_max: float
    converged: bool

    @property
    def width(self) -> float:
        return self.m1_max - self.m1_min


def lambda_sweep(builder: Callable[[float], MarketInstance], grid: Sequence[float],
                 horizon: float = 400.0, burn_in: float = 0.5, m0_seed: int = 0,
                 dt: float = 0.01, box=(1.1, 3.0), m0=None) -> list[SweepRow]:
    """Post-burn-in range of the first multiplier for each lambda on the grid."""
    rows = []
    for lam in grid:
        if not 0.0 <= lam <= 1.0:
            raise ValueError(f"lambda {lam} outside [0, 1]")
        inst = builder(lam)
        start = m0 if m0 is not None else _box_starts(inst.n_bidders, 1, box, np.random.default_rng(m0_seed))[0]
        traj = integrate(inst, start, horizon, dt)
        tail = traj.states[traj.times >= burn_in * horizon, 0]
        rows.append(SweepRow(float(lam), float(tail.min()), float(tail.max()),
                             detect_equilibrium(traj) is not None))
    return rows


def _field(model: UtilityModel, inst: MarketInstance):
    lo, hi = _bound_arrays(inst)
    if inst.bounds:
        return lambda m: vector_field(model, m, lo, hi)
    return lambda m: model(m)


def is_equilibrium(inst: MarketInstance, m, coords: Sequence[int] | None = None,
                   eps: float = 1e-9, h: float = 1e-7, model: UtilityModel | None = None) -> bool:
    """Equilibrium test that tolerates a discontinuous field.

    A coordinate balances if its rate is (numerically) zero, or if the field
    pushes it up just below the point and down just above it.
    """
    model = model or UtilityModel(inst)
    f = _field(model, inst)
    m = np.asarray(m, dtype=float)
    coords = range(len(m)) if coords is None else coords
    u = f(m)
    for i in coords:
        if abs(u[i]) <= eps:
            continue
        e = np.zeros(len(m))
        e[i] = h
        if not (f(m - e)[i] > 0 and f(m + e)[i] < 0):
            return False
    return True


class NotAnEquilibrium(ValueError):
    pass


@dataclass
class StabilityReport:
    stable: bool
    witness: np.ndarray | None = None
    coordinate: int | None = None
    rate: float | None = None


def check_coordinatewise_stability(inst: MarketInstance, m_star, eps: float = 0.05,
                                   samples: int = 50, seed: int = 0,
                                   coords: Sequence[int] | None = None,
                                   model: UtilityModel | None = None) -> StabilityReport:
    """Sample the eps-ball (in the ``coords`` subspace, within [1, inf) and any bounds)
    and require every perturbed coordinate to move back toward ``m_star``.

    Raises :class:`NotAnEquilibrium` unless ``m_star`` passes :func:`is_equilibrium`.
    """
    model = model or UtilityModel(inst)
    m_star = np.asarray(m_star, dtype=float)
    coords = np.arange(len(m_star)) if coords is None else np.asarray(coords)
    if not is_equilibrium(inst, m_star, coords, model=model):
        raise NotAnEquilibrium("point is not an equilibrium of the given coordinates")
    f = _field(model, inst)
    lo, hi = _bound_arrays(inst)
    # bidders with no items have an identically zero rate and are exempt
    active = {k for it in inst.items for k in it.interested}
    coords = np.array([i for i in coords if inst.bidders[i] in active], dtype=int)
    rng = np.random.default_rng(seed)
    d = len(coords)
    if d == 0:
        return StabilityReport(True)
    for _ in range(samples):
        g = rng.normal(size=d)
        g *= eps * rng.random() ** (1.0 / d) / np.linalg.norm(g)
        m = m_star.copy()
        m[coords] += g
        m = np.maximum(np.clip(m, lo, hi), 1.0)
        u = f(m)
        for i in coords:
            diff = m[i] - m_star[i]
            if abs(diff) <= 1e-9:
                continue
            if (diff < 0 and not u[i] > 0) or (diff > 0 and not u[i] < 0):
                return StabilityReport(False, m, int(i), float(u[i]))
    return StabilityReport(True)


def random_projection(traj_or_states, seed: int = 0, J: np.ndarray | None = None):
    """Project states onto 2D with a seeded standard Gaussian 2 x n matrix."""
    states = traj_or_states.states if isinstance(traj_or_states, Trajectory) else np.asarray(traj_or_states)
    if len(states) == 0:
        raise ValueError("empty trajectory")
    if J is None:
        J = np.random.default_rng(seed).standard_normal((2, states.shape[1]))
    return states @ J.T, J
