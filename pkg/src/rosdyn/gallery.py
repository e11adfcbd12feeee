"""Reference scenarios: build, integrate, classify and render each one."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import plotting
from .analysis import (PeriodSettings, bistability_scan, classify_orbit, lambda_sweep,
                       random_projection)
from .builders import build_coupled, build_cycle
from .circuits import (build_clock, clock_network, compile_network, design_point,
                       parse_network, read_assignment)
from .dynamics import Trajectory, fundamental_identity_residual, integrate
from .io import write_orbit_svg, write_rows_csv, write_trajectory_csv
from .linear import LinearSystem, simulate_linear
from .market import MarketInstance
from .seeding import rng_for

log = logging.getLogger(__name__)

__all__ = ["GalleryRun", "smooth_instances", "run_gallery", "NOR3", "ACYCLIC3", "sweep_family"]

NOR3 = ["X = NOR(Y, Z)", "Y = NOR(Z, X)", "Z = NOR(X, Y)"]
ACYCLIC3 = ["A = NOR()", "B = NOT(A)", "C = NOT(B)"]
START_BOX = (1.1, 3.0)
SWEEP_GRID = (0.0, 0.8, 0.85, 0.9, 1.0)


@dataclass
class GalleryRun:
    name: str
    instance: MarketInstance
    trajectory: Trajectory
    smooth: bool
    summary: str = ""
    extra: dict = field(default_factory=dict)

    @property
    def residual(self) -> float:
        return float(np.max(np.abs(fundamental_identity_residual(self.trajectory))))


def smooth_instances() -> dict[str, MarketInstance]:
    """Every smooth instance the gallery integrates, at lambda = 1."""
    out = {f"cycle-{n}": build_cycle(n) for n in (2, 3, 4, 5)}
    out["coupling-A"] = build_coupled("coupling-A")
    out["coupling-B"] = build_coupled("coupling-B")
    out["pair"] = build_coupled("pair")
    return out


def sweep_family(lam: float) -> MarketInstance:
    """Coupling preset A at auction mix ``lam``."""
    return build_coupled("coupling-A").with_lambda(lam)


def _render(run: GalleryRun, out: Path, seed: int, names=None, hlines=()):
    write_trajectory_csv(run.trajectory, out / f"{run.name}.csv")
    plotting.plot_trajectory(run.trajectory, out / f"{run.name}.png", names, run.name, hlines)
    proj, _ = random_projection(run.trajectory, seed)
    write_orbit_svg(proj, out / f"{run.name}-projection.svg", title=run.name)


def _circle(out: Path, seed: int) -> list[GalleryRun]:
    A = np.array([[0.0, -1.0], [1.0, 0.0]])
    sim = simulate_linear(LinearSystem(A, np.array([1.0, 0.0]), 4 * np.pi))
    traj = integrate(sim.instance, sim.m0, 4 * np.pi, dt=1e-3, sample_every=1e-2)
    t = traj.times
    err = max(np.max(np.abs(traj.states[:, 0] - (1.5 - 0.4 * np.cos(t)))),
              np.max(np.abs(traj.states[:, 1] - (1.5 - 0.4 * np.sin(t)))))
    # the compiled system also has an unstable real mode that rounding
    # excites, so the orbit is classified over a short window with no burn-in
    longer = integrate(sim.instance, sim.m0, 6.5 * np.pi, dt=1e-3, sample_every=1e-2)
    cls = classify_orbit(longer, period=PeriodSettings(burn_in=0.0))
    run = GalleryRun("circle", sim.instance, traj, smooth=False, summary=cls.summary(),
                     extra={"sup_error": float(err), "classification": cls, "simulation": sim})
    write_trajectory_csv(traj, out / "circle.csv")
    plotting.plot_linear_check(sim.times, sim.predicted, traj, out / "circle.png")
    write_orbit_svg(traj.states[:, :2], out / "circle-orbit.svg", title="circle")
    return [run]


def _smooth_runs(out: Path, seed: int) -> list[GalleryRun]:
    runs = []
    plans: list[tuple[str, MarketInstance, np.ndarray | None, float]] = [
        ("cycle-2-symmetric", build_cycle(2), np.array([1.4, 1.4]), 200.0),
        ("cycle-2", build_cycle(2), None, 200.0),
        ("cycle-3", build_cycle(3), None, 300.0),
        ("cycle-4", build_cycle(4), None, 200.0),
        ("cycle-5", build_cycle(5), None, 300.0),
        ("coupling-A", build_coupled("coupling-A"), None, 500.0),
        ("coupling-B", build_coupled("coupling-B"), None, 500.0),
    ]
    for name, inst, m0, horizon in plans:
        if m0 is None:
            lo, hi = START_BOX
            m0 = lo + (hi - lo) * rng_for(seed, f"gallery:{name}").random(inst.n_bidders)
        traj = integrate(inst, m0, horizon)
        cls = classify_orbit(traj)
        run = GalleryRun(name, inst, traj, smooth=True, summary=cls.summary(), extra={"classification": cls})
        _render(run, out, seed)
        runs.append(run)
    return runs


def _first_price(out: Path, seed: int) -> list[GalleryRun]:
    runs = []
    for name, inst in smooth_instances().items():
        lo, hi = START_BOX
        m0 = lo + (hi - lo) * rng_for(seed, f"gallery:first-price:{name}").random(inst.n_bidders)
        # fast initial decay; finer samples keep the trapezoid check meaningful
        traj = integrate(inst.with_lambda(0.0), m0, 100.0, sample_every=0.02)
        dev = float(np.max(np.abs(traj.final - 1.0)))
        runs.append(GalleryRun(f"first-price-{name}", inst.with_lambda(0.0), traj, smooth=True,
                               summary=f"max |m - 1| at end {dev:.3g}", extra={"deviation": dev}))
    rows = [(r.name, r.extra["deviation"]) for r in runs]
    write_rows_csv(out / "first-price.csv", ["scenario", "max_abs_m_minus_1"], rows)
    return runs


def _circuits(out: Path, seed: int) -> list[GalleryRun]:
    runs = []
    plans = [
        ("nor3-full", parse_network(NOR3), "full", 60.0, 1e-3),
        ("nor3-simplified", parse_network(NOR3), "simplified", 60.0, 1e-2),
        ("acyclic3", parse_network(ACYCLIC3), "simplified", 60.0, 1e-2),
        ("clock-3", clock_network(3), "simplified", 500.0, 1e-2),
        ("clock-9", clock_network(9), "simplified", 500.0, 1e-2),
    ]
    for name, net, mode, horizon, dt in plans:
        inst = compile_network(net, mode=mode)
        x0 = rng_for(seed, f"gallery:{name}").uniform(1.2, 3.0, len(net.variables))
        traj = integrate(inst, design_point(inst, net, x0), horizon, dt=dt)
        final = read_assignment(traj.final, net.variables, names=inst.bidders)
        run = GalleryRun(name, inst, traj, smooth=False,
                         summary="assignment " + "".join("1" if final[v] else "0" for v in net.variables),
                         extra={"network": net, "mode": mode})
        _render(run, out, seed, names=net.variables, hlines=(1.5, 2.1, 3.0))
        runs.append(run)
    return runs


def _sweep(out: Path, seed: int) -> dict:
    rows = lambda_sweep(sweep_family, SWEEP_GRID, horizon=400.0,
                        m0=1.1 + 1.9 * rng_for(seed, "gallery:sweep").random(9))
    write_rows_csv(out / "lambda-sweep.csv", ["lambda", "m1_min", "m1_max", "converged"],
                   [(r.lam, r.m1_min, r.m1_max, r.converged) for r in rows])
    plotting.plot_sweep(rows, out / "lambda-sweep.png", "coupling-A")
    return {"rows": rows}


def _bistability(out: Path, seed: int) -> dict:
    clusters, missed = bistability_scan(build_cycle(4), 20, START_BOX, seed=rng_for(seed, "gallery:bistability").integers(2**63))
    write_rows_csv(out / "cycle-4-bistability.csv", ["cluster", "count", "point"],
                   [(k, c.count, " ".join(f"{x:.6f}" for x in c.point)) for k, c in enumerate(clusters)])
    return {"clusters": clusters, "missed": missed}


SCENARIOS: dict[str, Callable] = {
    "circle": _circle,
    "smooth": _smooth_runs,
    "first-price": _first_price,
    "circuits": _circuits,
}


def run_gallery(out_dir, seed: int = 0) -> dict:
    """Run every scenario, writing CSV, SVG and PNG files plus ``report.csv`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    runs: list[GalleryRun] = []
    for name, fn in SCENARIOS.items():
        log.info("gallery: %s", name)
        runs += fn(out, seed)
    sweep = _sweep(out, seed)
    bist = _bistability(out, seed)
    write_rows_csv(out / "report.csv", ["scenario", "bidders", "items", "summary", "identity_residual"],
                   [(r.name, r.instance.n_bidders, r.instance.item_multiplicity, r.summary, r.residual)
                    for r in runs])
    return {"runs": runs, "sweep": sweep, "bistability": bist}
