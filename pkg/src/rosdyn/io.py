"""Trajectory CSV files, report CSVs and a dependency-free SVG orbit writer."""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dynamics import Trajectory

__all__ = ["write_trajectory_csv", "read_trajectory_csv", "write_rows_csv", "write_orbit_svg"]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_trajectory_csv(traj: Trajectory, path) -> None:
    """Header ``t,m_<name>...,U_<name>...``; U columns only when utilities were recorded."""
    path = Path(path)
    header = ["t"] + [f"m_{n}" for n in traj.names]
    if traj.utilities is not None:
        header += [f"U_{n}" for n in traj.names]
    try:
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for k, t in enumerate(traj.times):
                row = [t, *traj.states[k]]
                if traj.utilities is not None:
                    row += list(traj.utilities[k])
                w.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc


def read_trajectory_csv(path) -> Trajectory:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read {path}: {exc.strerror}") from exc
    if not rows or rows[0][:1] != ["t"]:
        raise ValueError(f"{path}: missing 't,m_...' header")
    header = rows[0]
    names = tuple(h[2:] for h in header[1:] if h.startswith("m_"))
    n = len(names)
    has_u = len(header) == 1 + 2 * n and all(h.startswith("U_") for h in header[1 + n:])
    if len(header) != 1 + n + (n if has_u else 0):
        raise ValueError(f"{path}: unexpected columns in header")
    try:
        data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=float).reshape(-1, len(header))
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc
    return Trajectory(names, data[:, 0], data[:, 1:1 + n],
                      data[:, 1 + n:] if has_u else None, fingerprint="", meta={"source": str(path)})


def write_rows_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(x) if isinstance(x, (float, np.floating)) else x for x in r])


def write_orbit_svg(path2d, path, size: float = 480.0, title: str | None = None) -> None:
    """One polyline for the path plus two axis lines; the viewBox hugs the data with a 5% margin.

    Data coordinates are used directly (y flipped), so aspect ratios are preserved.
    """
    pts = np.asarray(path2d, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) == 0:
        raise ValueError("expected a non-empty N x 2 path")
    x, y = pts[:, 0], -pts[:, 1]
    x0, x1, y0, y1 = x.min(), x.max(), y.min(), y.max()
    w = max(x1 - x0, 1e-12)
    h = max(y1 - y0, 1e-12)
    mx, my = 0.05 * w, 0.05 * h
    vb = (x0 - mx, y0 - my, w + 2 * mx, h + 2 * my)
    stroke = 0.004 * max(vb[2], vb[3])
    scale = size / max(vb[2], vb[3])
    points = " ".join(f"{a:.6g},{b:.6g}" for a, b in zip(x, y))
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{vb[2] * scale:.1f}" '
        f'height="{vb[3] * scale:.1f}" viewBox="{vb[0]:.6g} {vb[1]:.6g} {vb[2]:.6g} {vb[3]:.6g}">',
    ]
    if title:
        parts.append(f"<title>{title}</title>")
    parts += [
        f'<g stroke="#888" stroke-width="{stroke / 2:.3g}">',
        f'<line x1="{x0 - mx:.6g}" y1="{y1 + my / 2:.6g}" x2="{x1 + mx:.6g}" y2="{y1 + my / 2:.6g}"/>',
        f'<line x1="{x0 - mx / 2:.6g}" y1="{y0 - my:.6g}" x2="{x0 - mx / 2:.6g}" y2="{y1 + my:.6g}"/>',
        "</g>",
        f'<polyline fill="none" stroke="#1f77b4" stroke-width="{stroke:.3g}" points="{points}"/>',
        "</svg>",
    ]
    try:
        Path(path).write_text("\n".join(parts) + "\n")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc.strerror}") from exc
