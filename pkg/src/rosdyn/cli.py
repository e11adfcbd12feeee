"""Command-line front end: ``rosdyn <subcommand> [flags]``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import plotting
from .analysis import bistability_scan, classify_orbit, lambda_sweep, random_projection
from .builders import RepressionGraph, build_coupled, build_cycle, build_repressilator, parse_edge_list
from .circuits import compile_network, parse_network
from .dynamics import fundamental_identity_residual, integrate
from .gallery import START_BOX, SWEEP_GRID, run_gallery
from .io import read_trajectory_csv, write_orbit_svg, write_rows_csv, write_trajectory_csv
from .linear import LinearSystem, simulate_linear
from .market import InstanceFormatError, MarketInstance, load_instance, save_instance, validate_instance
from .seeding import derive_seed, rng_for
from .utility import Quadrature, UtilityModel

log = logging.getLogger("rosdyn")


class CliError(Exception):
    """A user-facing error; the message names the offending input."""


def _floats(text: str, what: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in text.replace(" ", "").split(",") if x], dtype=float)
    except ValueError:
        raise CliError(f"{what}: expected a comma-separated list of numbers, got {text!r}") from None


def _read_lines(path: str, what: str) -> list[str]:
    try:
        return Path(path).read_text().splitlines()
    except OSError as exc:
        raise CliError(f"{what} {path}: {exc.strerror}") from None


def _load(path: str) -> MarketInstance:
    try:
        inst = load_instance(path)
    except OSError as exc:
        raise CliError(f"--instance {path}: {exc.strerror}") from None
    except InstanceFormatError as exc:
        raise CliError(f"--instance {exc}") from None
    problems = validate_instance(inst)
    if problems:
        raise CliError(f"--instance {path}: " + "; ".join(p.message for p in problems))
    return inst


def _with_lambda(inst: MarketInstance, lam: float | None) -> MarketInstance:
    if lam is None:
        return inst
    if not 0.0 <= lam <= 1.0:
        raise CliError(f"--lambda {lam}: must lie in [0, 1]")
    return inst.with_lambda(lam)


def _builder(spec: str, c: int):
    """``cycle:N``, ``coupled:<preset>`` or ``edges:<path>`` -> MarketInstance at lambda 1."""
    kind, _, arg = spec.partition(":")
    try:
        if kind == "cycle":
            return build_cycle(int(arg), c)
        if kind == "coupled":
            return build_coupled(arg, c)
        if kind == "edges":
            n, edges, file_c = parse_edge_list(_read_lines(arg, "--edges"))
            return build_repressilator(RepressionGraph(n, tuple(edges), file_c or c))
    except ValueError as exc:
        raise CliError(f"builder {spec!r}: {exc}") from None
    raise CliError(f"builder {spec!r}: expected cycle:N, coupled:<preset> or edges:<path>")


def _initial(inst: MarketInstance, text: str | None, seed: int) -> np.ndarray:
    n = inst.n_bidders
    if text is None or text.startswith("random"):
        if text is None:
            rng = rng_for(seed, "m0")
        else:
            _, _, s = text.partition(":")
            try:
                rng = rng_for(int(s), "m0")
            except ValueError:
                raise CliError(f"--m0 {text!r}: expected random:<integer seed>") from None
        lo, hi = START_BOX
        return lo + (hi - lo) * rng.random(n)
    m0 = _floats(text, "--m0")
    if m0.shape != (n,):
        raise CliError(f"--m0: instance has {n} bidders, got {len(m0)} values")
    if not np.all(np.isfinite(m0)):
        raise CliError("--m0: values must be finite")
    return m0


def _out(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"--out {out}: {exc.strerror}") from None
    return out


def _figures(traj, out: Path, stem: str, seed: int) -> None:
    if len(traj.times) == 0:
        return
    if traj.states.shape[1] == 2:
        path2d = traj.states
    else:
        path2d, _ = random_projection(traj, derive_seed(seed, "projection"))
    write_orbit_svg(path2d, out / f"{stem}.svg", title=stem)
    plotting.plot_trajectory(traj, out / f"{stem}.png", title=stem)
    plotting.plot_projection(path2d, out / f"{stem}-projection.png", title=stem)


def cmd_simulate(args) -> int:
    inst = _with_lambda(_load(args.instance), args.lam)
    m0 = _initial(inst, args.m0, args.seed)
    try:
        traj = integrate(inst, m0, args.horizon, args.dt, args.method, args.sample_every,
                         quad=Quadrature(args.quad_nodes))
    except ValueError as exc:
        raise CliError(f"simulate: {exc}") from None
    out = _out(args)
    write_trajectory_csv(traj, out / "trajectory.csv")
    if args.figures:
        _figures(traj, out, "trajectory", args.seed)
    for w in traj.warnings:
        log.warning(w)
    print(f"wrote {out / 'trajectory.csv'} ({len(traj.times)} samples)")
    return 0 if traj.completed else 1


def cmd_build_repressilator(args) -> int:
    inst = _builder(args.builder, args.c)
    out = _out(args)
    save_instance(_with_lambda(inst, args.lam), out / "instance.json")
    print(f"wrote {out / 'instance.json'}: {inst.n_bidders} bidders, {inst.n_items} items")
    return 0


def _read_matrix(path: str) -> np.ndarray:
    rows = [ln.split("#", 1)[0].replace(",", " ").split() for ln in _read_lines(path, "--matrix")]
    rows = [r for r in rows if r]
    try:
        A = np.array([[float(x) for x in r] for r in rows], dtype=float)
    except ValueError:
        raise CliError(f"--matrix {path}: rows must be equal-length lists of numbers") from None
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.size == 0:
        raise CliError(f"--matrix {path}: expected a non-empty square matrix, got shape {A.shape}")
    return A


def cmd_compile_linear(args) -> int:
    A = _read_matrix(args.matrix)
    x0 = _floats(args.x0, "--x0")
    try:
        sim = simulate_linear(LinearSystem(A, x0, args.horizon))
    except ValueError as exc:
        raise CliError(f"compile-linear: {exc}") from None
    out = _out(args)
    save_instance(sim.instance, out / "instance.json")
    names = sim.instance.bidders[:sim.predicted.shape[1]]
    write_rows_csv(out / "predicted.csv", ["t"] + [f"m_{n}" for n in names],
                   [[float(t), *map(float, row)] for t, row in zip(sim.times, sim.predicted)])
    print(f"wrote {out / 'instance.json'}: {sim.instance.n_bidders} bidders, "
          f"{sim.instance.item_multiplicity:g} items; m0 = " + ",".join(repr(float(x)) for x in sim.m0))
    return 0


def cmd_compile_circuit(args) -> int:
    try:
        net = parse_network(_read_lines(args.network, "--network"))
    except ValueError as exc:
        raise CliError(f"--network {args.network}: {exc}") from None
    inst = compile_network(net, mode=args.mode)
    out = _out(args)
    save_instance(inst, out / "instance.json")
    print(f"{inst.n_bidders} bidders, {inst.item_multiplicity:g} items ({args.mode} mode)")
    return 0


def cmd_analyze(args) -> int:
    try:
        traj = read_trajectory_csv(args.trajectory)
    except (OSError, ValueError) as exc:
        raise CliError(f"--trajectory: {exc}") from None
    model = None
    if traj.utilities is None:
        if args.instance is None:
            raise CliError(f"--trajectory {args.trajectory}: no U_ columns; pass --instance to recompute them")
        inst = _with_lambda(_load(args.instance), args.lam)
        if tuple(inst.bidders) != tuple(traj.names):
            raise CliError("--instance: bidder names do not match the trajectory columns")
        model = UtilityModel(inst, Quadrature(args.quad_nodes))
    if len(traj.times) < 2:
        raise CliError(f"--trajectory {args.trajectory}: need at least two samples")
    cls = classify_orbit(traj, model=model)
    lines = [f"classification: {cls.kind}", f"summary: {cls.summary()}"]
    if cls.amplitude is not None:
        lines.append("amplitude: " + ",".join(f"{a:.6g}" for a in cls.amplitude))
    if traj.utilities is not None:
        res = fundamental_identity_residual(traj)
        lines.append("identity residual: " + ",".join(f"{r:.3g}" for r in res))
    lines.append(f"min multiplier: {traj.states.min():.9g}")
    report = "\n".join(lines) + "\n"
    out = _out(args)
    (out / "analysis.txt").write_text(report)
    if args.figures:
        _figures(traj, out, "analysis", args.seed)
    sys.stdout.write(report)
    return 0


def cmd_sweep_lambda(args) -> int:
    base = _load(args.instance) if args.instance else _builder(args.builder, args.c)
    grid = _floats(args.grid, "--grid") if args.grid else np.array(SWEEP_GRID)
    if len(grid) == 0 or np.any((grid < 0) | (grid > 1)):
        raise CliError(f"--grid {args.grid}: values must lie in [0, 1]")
    m0 = _initial(base, args.m0, args.seed)
    rows = lambda_sweep(base.with_lambda, grid, args.horizon, args.burn_in, dt=args.dt, m0=m0)
    out = _out(args)
    write_rows_csv(out / "sweep.csv", ["lambda", "m1_min", "m1_max", "converged"],
                   [(r.lam, r.m1_min, r.m1_max, r.converged) for r in rows])
    if args.figures:
        plotting.plot_sweep(rows, out / "sweep.png")
    for r in rows:
        print(f"lambda {r.lam:g}: m1 in [{r.m1_min:.6g}, {r.m1_max:.6g}]"
              f" {'converged' if r.converged else 'not converged'}")
    return 0


def cmd_scan_bistability(args) -> int:
    inst = _with_lambda(_load(args.instance) if args.instance else _builder(args.builder, args.c), args.lam)
    box = tuple(_floats(args.box, "--box"))
    if len(box) != 2 or not box[0] < box[1]:
        raise CliError(f"--box {args.box}: expected lo,hi with lo < hi")
    if args.count < 1:
        raise CliError(f"--count {args.count}: need at least one start")
    clusters, missed = bistability_scan(inst, args.count, box, derive_seed(args.seed, "scan-bistability"),
                                        args.horizon, args.dt)
    out = _out(args)
    write_rows_csv(out / "bistability.csv", ["cluster", "count"] + [f"m_{n}" for n in inst.bidders],
                   [[k, c.count, *map(float, c.point)] for k, c in enumerate(clusters)])
    print(f"{len(clusters)} clusters, {missed} starts did not converge")
    return 0


def cmd_gallery(args) -> int:
    res = run_gallery(_out(args), args.seed)
    for run in res["runs"]:
        print(f"{run.name}: {run.summary}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rosdyn", description="Autobidding dynamics dm/dt = U(m).")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--seed", type=int, default=0, help="global seed")
        p.add_argument("--quad-nodes", type=int, default=64, help="Gauss-Legendre nodes per dimension")
        p.add_argument("--no-figures", dest="figures", action="store_false", help="skip PNG/SVG output")

    def integration(p, horizon):
        p.add_argument("--horizon", type=float, default=horizon)
        p.add_argument("--dt", type=float, default=0.01)
        p.add_argument("--lambda", dest="lam", type=float, default=None, help="override the instance lambda")

    def source(p):
        p.add_argument("--instance", help="instance JSON file")
        p.add_argument("--builder", default="cycle:4", help="cycle:N, coupled:<preset> or edges:<path>")
        p.add_argument("--c", type=int, default=7, help="repressilator sharpness")

    p = sub.add_parser("simulate", help="integrate an instance into a trajectory CSV")
    common(p)
    integration(p, 100.0)
    p.add_argument("--instance", required=True)
    p.add_argument("--m0", help="comma list or random:<seed>")
    p.add_argument("--method", choices=("rk4", "rkf45"), default="rk4")
    p.add_argument("--sample-every", type=float, default=0.1)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("build-repressilator", help="write a repressilator instance")
    common(p)
    source(p)
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.set_defaults(func=cmd_build_repressilator)

    p = sub.add_parser("compile-linear", help="compile dx/dt = Ax into an instance and a predicted trajectory")
    common(p)
    p.add_argument("--matrix", required=True, help="text file, one matrix row per line")
    p.add_argument("--x0", required=True, help="comma list")
    p.add_argument("--horizon", type=float, required=True)
    p.set_defaults(func=cmd_compile_linear)

    p = sub.add_parser("compile-circuit", help="compile a NOR network file")
    common(p)
    p.add_argument("--network", required=True, help="lines 'X = NOR(A, B)' or 'X = NOT(A)'")
    p.add_argument("--mode", choices=("simplified", "full"), default="simplified")
    p.set_defaults(func=cmd_compile_circuit)

    p = sub.add_parser("analyze", help="classify a trajectory CSV")
    common(p)
    p.add_argument("--trajectory", required=True)
    p.add_argument("--instance", help="needed only if the CSV has no U_ columns")
    p.add_argument("--lambda", dest="lam", type=float, default=None)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep-lambda", help="range of m1 across a lambda grid")
    common(p)
    source(p)
    p.add_argument("--grid", help="comma list of lambda values")
    p.add_argument("--horizon", type=float, default=400.0)
    p.add_argument("--dt", type=float, default=0.01)
    p.add_argument("--burn-in", type=float, default=0.5)
    p.add_argument("--m0", help="comma list or random:<seed>")
    p.set_defaults(func=cmd_sweep_lambda)

    p = sub.add_parser("scan-bistability", help="cluster endpoints from random starts")
    common(p)
    source(p)
    integration(p, 200.0)
    p.add_argument("--count", type=int, default=20)
    p.add_argument("--box", default="1.1,3.0")
    p.set_defaults(func=cmd_scan_bistability)

    p = sub.add_parser("gallery", help="run every reference scenario")
    common(p)
    p.set_defaults(func=cmd_gallery)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "quad_nodes", 64) < 2:
        print("error: --quad-nodes must be at least 2", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
