"""Matplotlib figures for trajectories, projections, sweeps and the linear pipeline."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .analysis import SweepRow  # noqa: E402
from .dynamics import Trajectory  # noqa: E402

__all__ = ["plot_trajectory", "plot_projection", "plot_sweep", "plot_linear_check"]

plt.rcParams.update({
    "figure.dpi": 110,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
})


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(Path(path))
    plt.close(fig)


def plot_trajectory(traj: Trajectory, path, names: Sequence[str] | None = None,
                    title: str = "", hlines: Sequence[float] = ()) -> None:
    names = list(names) if names is not None else list(traj.names)
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for name in names:
        ax.plot(traj.times, traj.coordinate(name), lw=1.0, label=name)
    for y in hlines:
        ax.axhline(y, color="k", lw=0.6, ls=":")
    ax.set_xlabel("t")
    ax.set_ylabel("bid multiplier")
    if title:
        ax.set_title(title)
    if len(names) <= 10:
        ax.legend(fontsize=7, ncol=min(len(names), 5), loc="upper right")
    _save(fig, path)


def plot_projection(path2d: np.ndarray, path, title: str = "") -> None:
    fig, ax = plt.subplots(figsize=(4.2, 4.2))
    ax.plot(path2d[:, 0], path2d[:, 1], lw=0.6)
    ax.set_aspect("equal", adjustable="datalim")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_sweep(rows: Sequence[SweepRow], path, title: str = "") -> None:
    lam = [r.lam for r in rows]
    fig, ax = plt.subplots(figsize=(5, 3.2))
    ax.vlines(lam, [r.m1_min for r in rows], [r.m1_max for r in rows], lw=3)
    ax.scatter(lam, [r.m1_min for r in rows], s=8, c=["g" if r.converged else "r" for r in rows])
    ax.set_xlabel("lambda")
    ax.set_ylabel("range of m1 after burn-in")
    if title:
        ax.set_title(title)
    _save(fig, path)


def plot_linear_check(times, predicted, traj: Trajectory, path, count: int = 2) -> None:
    fig, ax = plt.subplots(figsize=(7, 3.2))
    for k in range(count):
        ax.plot(times, predicted[:, k], "k--", lw=0.8)
        ax.plot(traj.times, traj.states[:, k], lw=1.0, label=traj.names[k])
    ax.set_xlabel("t")
    ax.set_ylabel("multiplier (dashed: matrix-exponential prediction)")
    ax.legend(fontsize=7)
    _save(fig, path)
