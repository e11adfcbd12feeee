"""Embedding linear systems into purely competitive ones, and compiling those into markets.

Pipeline: dx/dt = A x  ->  dy/dt = B y with T A = B T and B purely competitive
(zero diagonal, non-positive off-diagonal)  ->  a fixed-value market whose
multiplier flow is dm/dt = B (m - b) on a box, so m = b + c T x(t).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg

from .market import Fixed, ItemSpec, MarketInstance

__all__ = [
    "JordanSpec",
    "LinearSystem",
    "CompetitiveEmbedding",
    "AffineMap",
    "LinearSimulation",
    "nonneg_for_eigenvalue",
    "jordan_lift",
    "purely_competitive_from_jordan",
    "is_purely_competitive",
    "competitive_embedding",
    "compile_competitive_to_ros",
    "simulate_linear",
    "AUX_NAMES",
]

S2 = np.array([[0.0, -1.0], [-1.0, 0.0]])
U4 = np.array([1, 1j, -1, -1j])
UNIT = 0.1
AUX_NAMES = ("auxA", "auxB")
AUX_LEVEL = 2.0
INTERTWINE_TOL = 1e-10
COND_LIMIT = 1e8


@dataclass(frozen=True)
class JordanSpec:
    """Jordan blocks as (eigenvalue, size) pairs."""

    blocks: tuple[tuple[complex, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple((complex(l), int(d)) for l, d in self.blocks))
        if not self.blocks:
            raise ValueError("need at least one Jordan block")
        if any(d < 1 for _, d in self.blocks):
            raise ValueError("Jordan block sizes must be >= 1")

    @property
    def dim(self) -> int:
        return sum(d for _, d in self.blocks)


@dataclass(frozen=True)
class LinearSystem:
    A: np.ndarray
    x0: np.ndarray
    horizon: float

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        x0 = np.asarray(self.x0, dtype=float)
        if A.shape[0] != A.shape[1] or x0.shape != (A.shape[0],):
            raise ValueError("A must be square and x0 must match its size")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "x0", x0)


@dataclass(frozen=True)
class CompetitiveEmbedding:
    B: np.ndarray
    T: np.ndarray

    def residual(self, A) -> float:
        return float(np.linalg.norm(self.T @ A - self.B @ self.T))


@dataclass(frozen=True)
class AffineMap:
    """h(y) = offset + scale * y."""

    scale: float
    offset: np.ndarray

    def __call__(self, y):
        return self.offset[..., :] + self.scale * np.asarray(y)


def nonneg_for_eigenvalue(lam: complex) -> np.ndarray:
    """4x4 non-negative matrix having ``lam`` as an eigenvalue.

    The eigenvector is always (1, i, -1, -i).  With P the cyclic shift,
    P u = i u and P^3 = P.T gives -i, so Im(lam) < 0 uses the transpose.
    """
    lam = complex(lam)
    a, b = abs(lam.real), abs(lam.imag)
    if lam.real >= 0:
        M = np.array([[a, b, 0, 0], [0, a, b, 0], [0, 0, a, b], [b, 0, 0, a]], dtype=float)
    else:
        M = np.array([[0, b, a, 0], [0, 0, b, a], [a, 0, 0, b], [b, a, 0, 0]], dtype=float)
    return M if lam.imag >= 0 else M.T.copy()


def _u(lam: complex) -> np.ndarray:
    return U4


def jordan_block(lam, d: int) -> np.ndarray:
    return lam * np.eye(d, dtype=np.result_type(lam, float)) + np.eye(d, k=1)


def jordan_lift(lam: complex, d: int) -> np.ndarray:
    """Non-negative matrix whose Jordan form contains the block (lam, d)."""
    if d < 1:
        raise ValueError("block size must be >= 1")
    if d == 1:
        return nonneg_for_eigenvalue(lam)
    if complex(lam) == 0:
        # the Kronecker lift degenerates to 0 here; J_d(0) is itself non-negative
        return jordan_block(0.0, d)
    return np.kron(nonneg_for_eigenvalue(lam), jordan_block(1.0, d))


def _lift_chain(lam: complex, d: int) -> np.ndarray:
    """Columns g_1..g_d with (L - lam) g_k = g_{k-1} for L = jordan_lift(lam, d)."""
    if d == 1:
        return _u(lam)[:, None].astype(complex)
    if complex(lam) == 0:
        return np.eye(d, dtype=complex)
    return np.stack([np.kron(_u(lam), np.eye(d)[k]) / lam**k for k in range(d)], axis=1)


def is_purely_competitive(B, tol: float = 0.0) -> bool:
    B = np.asarray(B)
    off = B - np.diag(np.diag(B))
    return bool(np.all(np.abs(np.diag(B)) <= tol) and np.all(off <= tol))


def purely_competitive_from_jordan(spec: JordanSpec) -> np.ndarray:
    """(direct sum of the lifts) kron S, with S = [[0, -1], [-1, 0]]."""
    lifts = [jordan_lift(l, d) for l, d in spec.blocks]
    B = np.kron(linalg.block_diag(*lifts), S2)
    B[B == 0] = 0.0  # drop negative zeros
    return B


def _compact_block(lam: complex):
    """Small purely competitive block and eigenvector for one real eigenvalue or conjugate pair."""
    a, b = lam.real, abs(lam.imag)
    if lam.imag == 0:
        blk = np.array([[0.0, -abs(a)], [-abs(a), 0.0]])
        return blk, np.array([1.0, -1.0 if a >= 0 else 1.0], dtype=complex)
    if a >= 0:
        # minus the second-form matrix has a + bi with the conjugate eigenvector
        return 0.0 - nonneg_for_eigenvalue(complex(-a, b)), U4.conj()
    return np.kron(nonneg_for_eigenvalue(lam), S2), np.kron(_u(lam), [1.0, -1.0])


def _normalise(q: np.ndarray) -> complex:
    k = int(np.flatnonzero(np.abs(q) >= 0.5 * np.abs(q).max())[0])
    return -1.0 / q[k]


def competitive_embedding(A, mode: str = "numeric", spec: JordanSpec | None = None,
                          P=None, imag_tol: float = 1e-9) -> CompetitiveEmbedding:
    """Find B purely competitive and T of full column rank with T A = B T.

    ``numeric`` diagonalises A (rejecting ill-conditioned eigenbases) and uses
    compact blocks.  ``exact-jordan`` takes A = P J P^-1 from the caller, with
    ``spec`` listing J's blocks in the order of P's columns.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if mode == "numeric":
        if is_purely_competitive(A):
            emb = CompetitiveEmbedding(A.copy(), np.eye(n))
            return emb
        evals, P = np.linalg.eig(A)
        cond = np.linalg.cond(P)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise ValueError(f"eigenvector basis condition number {cond:.3g} exceeds {COND_LIMIT:.0e};"
                             " A looks defective, use exact-jordan mode")
        Q = np.linalg.inv(P)
        blocks, rows = [], []
        for k, lam in enumerate(evals):
            if lam.imag < -imag_tol:
                continue
            real = abs(lam.imag) <= imag_tol
            lam = complex(lam.real, 0.0) if real else complex(lam)
            blk, w = _compact_block(lam)
            q = Q[k]
            alpha = _normalise(q)
            rows.append((1.0 if real else 2.0) * np.real(alpha * np.outer(w, q)))
            blocks.append(blk)
        B = linalg.block_diag(*blocks)
        T = np.vstack(rows)
    elif mode == "exact-jordan":
        if spec is None or P is None:
            raise ValueError("exact-jordan mode needs a JordanSpec and the basis P")
        P = np.asarray(P, dtype=complex)
        if P.shape != (n, n) or spec.dim != n:
            raise ValueError("Jordan data does not match A's size")
        Q = np.linalg.inv(P)
        B = purely_competitive_from_jordan(spec)
        T = np.zeros((B.shape[0], n), dtype=complex)
        row = col = 0
        for lam, d in spec.blocks:
            G = _lift_chain(lam, d)
            G = np.kron(G, np.array([[1.0], [-1.0]]))
            T[row:row + G.shape[0]] = G @ Q[col:col + d]
            row += G.shape[0]
            col += d
        T = np.real(T)
    else:
        raise ValueError(f"unknown embedding mode {mode!r}")

    emb = CompetitiveEmbedding(B, T)
    res = emb.residual(A)
    if res > INTERTWINE_TOL:
        raise ValueError(f"embedding residual |TA - BT| = {res:.3g} exceeds {INTERTWINE_TOL}")
    if np.linalg.matrix_rank(T) < n:
        raise ValueError("embedding matrix T lost column rank")
    return emb


def _constant_items(name: str, total: float) -> list[ItemSpec]:
    """Gadget items giving bidder ``name`` a constant utility ``total``."""
    if total == 0:
        return []
    own = 2.0 - UNIT if total < 0 else 2.0 + UNIT
    k = int(np.floor(abs(total) / UNIT + 1e-9))
    items = []
    if k:
        items.append(ItemSpec({name: Fixed(own), AUX_NAMES[0]: Fixed(1.0)}, copies=float(k)))
    rest = abs(total) - k * UNIT
    if rest > 1e-12 * max(1.0, abs(total)):
        s = rest / UNIT
        items.append(ItemSpec({name: Fixed(own * s), AUX_NAMES[0]: Fixed(s)}))
    return items


def compile_competitive_to_ros(B, offset, names: Sequence[str] | None = None,
                               scale: float = 1.0) -> tuple[MarketInstance, AffineMap]:
    """Market whose first n bidders follow dm/dt = B (m - offset) on (1.1, 1.9)^n.

    Two auxiliary bidders hold multiplier 2 with zero utility; they supply the
    prices of the constant gadgets.
    """
    B = np.atleast_2d(np.asarray(B, dtype=float))
    b = np.asarray(offset, dtype=float)
    n = B.shape[0]
    if not is_purely_competitive(B):
        raise ValueError("B must have zero diagonal and non-positive off-diagonal entries")
    if b.shape != (n,):
        raise ValueError("offset must have one entry per row of B")
    names = tuple(names) if names is not None else tuple(f"y{k + 1}" for k in range(n))
    xa, xb = AUX_NAMES
    items = [ItemSpec({xa: Fixed(2.0), xb: Fixed(1.0)}), ItemSpec({xa: Fixed(1.0), xb: Fixed(2.0)})]
    for i in range(n):
        for k in range(n):
            if k != i and B[i, k] != 0:
                w = float(abs(B[i, k]))
                items.append(ItemSpec({names[i]: Fixed(2.0 * w), names[k]: Fixed(w)}))
    for i in range(n):
        total = float(np.sum(np.abs(B[i]) * (b - 2.0)))
        items += _constant_items(names[i], total)
    inst = MarketInstance(names + AUX_NAMES, tuple(items), 1.0)
    return inst, AffineMap(scale, b)


@dataclass
class LinearSimulation:
    instance: MarketInstance
    embedding: CompetitiveEmbedding
    affine: AffineMap
    times: np.ndarray
    reference: np.ndarray  # x(t), one row per time
    predicted: np.ndarray  # b + c T x(t) for the non-auxiliary bidders
    meta: dict = field(default_factory=dict)

    @property
    def m0(self) -> np.ndarray:
        return np.concatenate([self.predicted[0], [AUX_LEVEL, AUX_LEVEL]])


def simulate_linear(sys: LinearSystem, mode: str = "numeric", spec: JordanSpec | None = None,
                    P=None, box: tuple[float, float] = (1.1, 1.9), margin: float = 0.0,
                    samples: int = 2001) -> LinearSimulation:
    """Compile ``sys`` into a market and predict its multiplier trajectory.

    The orbit T x(t) is sampled densely via the matrix exponential and mapped
    affinely into ``box`` shrunk by ``margin`` on each side, with one common
    positive scale.
    """
    lo, hi = box
    width = hi - lo - 2.0 * margin
    if width <= 0:
        raise ValueError("margin leaves an empty box")
    emb = competitive_embedding(sys.A, mode, spec, P)
    times = np.linspace(0.0, sys.horizon, samples)
    x = np.array([linalg.expm(t * sys.A) @ sys.x0 for t in times])
    y = x @ emb.T.T
    if not np.all(np.isfinite(y)):
        raise ValueError("reference orbit is not finite")
    ymin, ymax = y.min(axis=0), y.max(axis=0)
    spread = float(np.max(ymax - ymin))
    c = width / spread if spread > 0 else 1.0
    b = 0.5 * (lo + hi) - c * 0.5 * (ymin + ymax)
    inst, _ = compile_competitive_to_ros(emb.B, b)
    affine = AffineMap(c, b)
    pred = b + c * y
    if pred.min() < lo - 1e-12 or pred.max() > hi + 1e-12:
        raise ValueError(f"orbit leaves the box: range [{pred.min():.4g}, {pred.max():.4g}]")
    return LinearSimulation(inst, emb, affine, times, x, pred,
                            {"mode": mode, "box": box, "margin": margin, "scale": c})
