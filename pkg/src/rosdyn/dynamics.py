"""Integration of the multiplier flow dm/dt = U(m)."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy.integrate import trapezoid

from .market import MarketInstance
from .utility import DEFAULT_QUAD, Quadrature, UtilityModel, compiled_field

log = logging.getLogger(__name__)

__all__ = ["Trajectory", "vector_field", "integrate", "fundamental_identity_residual"]

# Runge-Kutta-Fehlberg 4(5) tableau
_C = np.array([0.0, 1 / 4, 3 / 8, 12 / 13, 1.0, 1 / 2])
_A = [
    [],
    [1 / 4],
    [3 / 32, 9 / 32],
    [1932 / 2197, -7200 / 2197, 7296 / 2197],
    [439 / 216, -8.0, 3680 / 513, -845 / 4104],
    [-8 / 27, 2.0, -3544 / 2565, 1859 / 4104, -11 / 40],
]
_B4 = np.array([25 / 216, 0.0, 1408 / 2565, 2197 / 4104, -1 / 5, 0.0])
_ERR = np.array([1 / 360, 0.0, -128 / 4275, -2197 / 75240, 1 / 50, 2 / 55])


@dataclass
class Trajectory:
    names: tuple[str, ...]
    times: np.ndarray
    states: np.ndarray
    utilities: np.ndarray | None
    fingerprint: str
    meta: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)
    completed: bool = True
    # projected field dm/dt actually integrated; differs from ``utilities``
    # only for bidders sitting on a bound
    rates: np.ndarray | None = None

    def coordinate(self, name: str) -> np.ndarray:
        return self.states[:, self.names.index(name)]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


@numba.njit(cache=True)
def _rk4_segment(m, n_steps, step, lo, hi, args):
    """Fixed-step RK4 entirely in compiled code.

    Returns (state, number of clamp events at 0, first non-finite step or -1).
    """
    clamps = 0
    for s in range(n_steps):
        k1 = compiled_field(m, *args, lo, hi)
        k2 = compiled_field(m + 0.5 * step * k1, *args, lo, hi)
        k3 = compiled_field(m + 0.5 * step * k2, *args, lo, hi)
        k4 = compiled_field(m + step * k3, *args, lo, hi)
        new = m + step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        for i in range(new.shape[0]):
            if not np.isfinite(new[i]):
                return m, clamps, s
            new[i] = min(max(new[i], lo[i]), hi[i])
            if new[i] < 0.0:
                new[i] = 0.0
                clamps += 1
        m = new
    return m, clamps, -1


def _bound_arrays(inst: MarketInstance):
    lo = np.full(inst.n_bidders, -np.inf)
    hi = np.full(inst.n_bidders, np.inf)
    for name, (a, b) in inst.bounds.items():
        k = inst.index(name)
        lo[k], hi[k] = a, b
    return lo, hi


def vector_field(model: UtilityModel, m, lo=None, hi=None) -> np.ndarray:
    """U(m), with outward components zeroed for bidders sitting on a bound."""
    u = model(m)
    if lo is not None:
        u = np.where((m <= lo) & (u < 0), 0.0, u)
        u = np.where((m >= hi) & (u > 0), 0.0, u)
    return u


def integrate(inst: MarketInstance, m0, horizon: float, dt: float = 0.01,
              method: str = "rk4", sample_every: float = 0.1, rtol: float = 1e-8,
              atol: float = 1e-10, record_utilities: bool = True,
              quad: Quadrature = DEFAULT_QUAD, model: UtilityModel | None = None) -> Trajectory:
    """Solve dm/dt = U(m) from ``m0`` over ``[0, horizon]``.

    States are sampled every ``sample_every`` time units plus the endpoint.
    ``rk4`` uses the fixed step ``dt``; ``rkf45`` adapts its step (``dt`` is
    the initial and maximum step) and lands exactly on sample times.
    Coordinates driven below 0 are clamped with a warning; bidders carrying
    ``bounds`` are projected back into their box.
    """
    if horizon <= 0 or dt <= 0 or sample_every <= 0:
        raise ValueError("horizon, dt and sample_every must be positive")
    if method not in ("rk4", "rkf45"):
        raise ValueError(f"unknown method {method!r}")
    m = np.array(m0, dtype=float)
    if m.shape != (inst.n_bidders,) or not np.all(np.isfinite(m)):
        raise ValueError("m0 must be a finite vector with one entry per bidder")
    model = model or UtilityModel(inst, quad)
    lo, hi = _bound_arrays(inst)
    has_bounds = bool(inst.bounds)
    lo_a, hi_a = (lo, hi) if has_bounds else (None, None)

    def f(x):
        return vector_field(model, x, lo_a, hi_a)

    warnings: list[str] = []

    def fix(x, t):
        if has_bounds:
            x = np.clip(x, lo, hi)
        if np.any(x < 0):
            bad = [inst.bidders[k] for k in np.flatnonzero(x < 0)]
            msg = f"t={t:.6g}: clamped {', '.join(bad)} at 0"
            if len(warnings) < 100:
                warnings.append(msg)
            log.warning(msg)
            x = np.maximum(x, 0.0)
        return x

    n_samples = int(np.floor(horizon / sample_every + 1e-9))
    sample_t = [k * sample_every for k in range(n_samples + 1)]
    if horizon - sample_t[-1] > 1e-9 * horizon:
        sample_t.append(horizon)
    else:
        sample_t[-1] = horizon
    times, states = [0.0], [m.copy()]
    completed = True
    t = 0.0
    h = dt
    meta = {"method": method, "dt": dt, "sample_every": sample_every, "horizon": horizon}
    if method == "rkf45":
        meta.update(rtol=rtol, atol=atol)

    fast = method == "rk4" and model.fully_compiled
    for target in sample_t[1:]:
        if fast:
            n_steps = max(1, int(np.ceil((target - t) / dt - 1e-9)))
            step = (target - t) / n_steps
            new, clamps, bad = _rk4_segment(m, n_steps, step, lo, hi, model.kernel_args)
            if clamps:
                msg = f"t={target:.6g}: {clamps} coordinate(s) clamped at 0 during the last sample interval"
                if len(warnings) < 100:
                    warnings.append(msg)
                log.warning(msg)
            if bad >= 0:
                warnings.append(f"t={t + bad * step:.6g}: non-finite state, aborting")
                log.error(warnings[-1])
                completed = False
                m = new
                break
            m = new
        while not fast and target - t > 1e-12 * max(1.0, target):
            if method == "rk4":
                step = min(dt, target - t)
                k1 = f(m)
                k2 = f(m + 0.5 * step * k1)
                k3 = f(m + 0.5 * step * k2)
                k4 = f(m + step * k3)
                new = m + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            else:
                step = min(h, target - t)
                ks = []
                for s in range(6):
                    x = m + step * sum(a * k for a, k in zip(_A[s], ks)) if s else m
                    ks.append(f(x))
                ks = np.array(ks)
                new = m + step * (_B4 @ ks)
                err = np.max(np.abs(step * (_ERR @ ks)) / (atol + rtol * np.abs(new)))
                if err > 1.0 and step > 1e-12:
                    h = step * max(0.1, 0.9 * err ** -0.25)
                    continue
                h = min(dt, step * min(5.0, 0.9 * max(err, 1e-10) ** -0.2))
            if not np.all(np.isfinite(new)):
                warnings.append(f"t={t:.6g}: non-finite state, aborting")
                log.error(warnings[-1])
                completed = False
                break
            t = t + step
            m = fix(new, t)
        if not completed:
            break
        t = target
        times.append(t)
        states.append(m.copy())

    states = np.array(states)
    utils = np.array([model(x) for x in states]) if record_utilities else None
    rates = None
    if record_utilities and has_bounds:
        rates = np.array([f(x) for x in states])
    return Trajectory(tuple(inst.bidders), np.array(times), states, utils,
                      inst.fingerprint(), meta, warnings, completed, rates)


def fundamental_identity_residual(traj: Trajectory) -> np.ndarray:
    """m(T) - m(0) - integral of U along the recorded samples (trapezoid rule)."""
    if traj.utilities is None:
        raise ValueError("trajectory has no recorded utilities")
    rates = traj.rates if traj.rates is not None else traj.utilities
    integral = trapezoid(rates, traj.times, axis=0)
    return traj.states[-1] - traj.states[0] - integral
