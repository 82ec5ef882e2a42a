"""LQR design on a pseudo state-space model.

The Riccati equation ``A'P + PA - P B R^{-1} B' P + Q = 0`` is solved with
Newton-Kleinman iteration.  Each Newton step is a Lyapunov equation, solved
here as a dense ``N^2 x N^2`` linear system (the models have N <= 6).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .model import PseudoStateSpace

__all__ = [
    "LqrError",
    "WeightSpec",
    "LqrSolution",
    "StabilityVerdict",
    "solve_lyapunov",
    "solve_care",
    "lqr_gain",
    "feedforward_gain",
    "riccati_residual",
    "fractional_stability",
    "design",
]

TOL = 1e-10
MAX_ITER = 50


class LqrError(ArithmeticError):
    pass


@dataclass(frozen=True)
class WeightSpec:
    q_diag: tuple[float, ...]
    r: tuple[float, ...]

    def __init__(self, q_diag: Sequence[float], r):
        q = tuple(float(v) for v in np.ravel(q_diag))
        rr = tuple(float(v) for v in np.ravel(r))
        if any(not math.isfinite(v) or v < 0 for v in q):
            raise ValueError(f"Q diagonal must be finite and >= 0, got {q}")
        if not rr or any(not math.isfinite(v) or v <= 0 for v in rr):
            raise ValueError(f"R must be positive definite, got {rr}")
        object.__setattr__(self, "q_diag", q)
        object.__setattr__(self, "r", rr)

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.q_diag)

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.r)

    def to_dict(self) -> dict:
        return {"q_diag": list(self.q_diag), "r": list(self.r) if len(self.r) > 1 else self.r[0]}


@dataclass(frozen=True, eq=False)
class LqrSolution:
    p: np.ndarray
    k: np.ndarray
    nbar: float
    residual: float
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "P": self.p.tolist(),
            "K": self.k.tolist(),
            "nbar": self.nbar,
            "residual": self.residual,
            "iterations": self.iterations,
        }


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    margin: float
    order: float
    conservative: bool

    def to_dict(self) -> dict:
        return {"stable": self.stable, "margin": self.margin,
                "order": self.order, "conservative": self.conservative}


def solve_lyapunov(F: np.ndarray, W: np.ndarray) -> np.ndarray:
    """Solve ``F' X + X F = -W`` by vectorization."""
    n = F.shape[0]
    eye = np.eye(n)
    # vec(F'X + XF) = (I kron F' + F' kron I) vec(X), column-major vec
    L = np.kron(eye, F.T) + np.kron(F.T, eye)
    x = np.linalg.solve(L, -W.reshape(-1, order="F"))
    X = x.reshape(n, n, order="F")
    return 0.5 * (X + X.T)


def riccati_residual(A, B, Q, R, P) -> float:
    S = B @ np.linalg.solve(R, B.T)
    res = A.T @ P + P @ A - P @ S @ P + Q
    return float(np.linalg.norm(res, "fro"))


def _is_hurwitz(M: np.ndarray) -> bool:
    return bool(np.all(np.linalg.eigvals(M).real < 0))


def _initial_gain(A, B, R) -> np.ndarray:
    """A stabilizing gain from Bass's shifted-Gramian construction."""
    n = A.shape[0]
    if _is_hurwitz(A):
        return np.zeros((B.shape[1], n))
    # beta must exceed every |Re(lambda)| so that -(A + beta I) is Hurwitz
    scale = 1.0 + float(np.linalg.norm(A, 2))
    for beta in (scale, 2 * scale, 10 * scale):
        F = -(A + beta * np.eye(n))
        # (A + beta I) Z + Z (A + beta I)' = 2 B B'
        Z = solve_lyapunov(F.T, 2.0 * B @ B.T)
        try:
            K = B.T @ np.linalg.pinv(Z, rcond=1e-14)
        except np.linalg.LinAlgError:
            continue
        if _is_hurwitz(A - B @ K):
            return K
    # fall back to the stable invariant subspace of the Hamiltonian
    return np.linalg.solve(R, B.T @ _hamiltonian_care(A, B, np.eye(n) * 1e-6, R))


def _hamiltonian_care(A, B, Q, R) -> np.ndarray:
    from scipy.linalg import schur

    n = A.shape[0]
    S = B @ np.linalg.solve(R, B.T)
    H = np.block([[A, -S], [-Q, -A.T]])
    T, Z, sdim = schur(H, sort="lhp")
    if sdim != n:
        raise LqrError("pair (A, B) is not stabilizable: Hamiltonian has imaginary-axis eigenvalues")
    U1, U2 = Z[:n, :n], Z[n:, :n]
    try:
        P = np.linalg.solve(U1.T, U2.T).T
    except np.linalg.LinAlgError:
        raise LqrError("pair (A, B) is not stabilizable: stable subspace is not a graph") from None
    return 0.5 * (P + P.T)


def solve_care(A, B, q_diag, r, *, tol: float = TOL, max_iter: int = MAX_ITER) -> np.ndarray:
    """Stabilizing solution of the continuous algebraic Riccati equation.

    Parameters
    ----------
    A, B : array_like
        State and input matrices.
    q_diag : sequence of float
        Diagonal of Q (>= 0).
    r : float or sequence of float
        Diagonal of R (> 0).
    """
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    B = np.reshape(np.asarray(B, dtype=float), (n, -1))
    w = WeightSpec(q_diag, r)
    if len(w.q_diag) != n:
        raise ValueError(f"{len(w.q_diag)} Q entries for {n} states")
    if len(w.r) == 1 and B.shape[1] > 1:
        w = WeightSpec(w.q_diag, w.r * B.shape[1])
    Q, R = w.Q, w.R
    P, _ = _newton_kleinman(A, B, Q, R, tol, max_iter)
    return P


def _newton_kleinman(A, B, Q, R, tol, max_iter):
    K = _initial_gain(A, B, R)
    if not _is_hurwitz(A - B @ K):
        raise LqrError("no stabilizing initial gain found; (A, B) may not be stabilizable")
    P_prev = None
    scale = 1.0
    for it in range(1, max_iter + 1):
        F = A - B @ K
        P = solve_lyapunov(F, Q + K.T @ R @ K)
        K = np.linalg.solve(R, B.T @ P)
        scale = 1.0 + np.linalg.norm(P, "fro")
        if P_prev is not None and np.linalg.norm(P - P_prev, "fro") <= tol * scale:
            break
        P_prev = P
    res = riccati_residual(A, B, Q, R, P)
    if res > 1e-8 * scale:
        raise LqrError(f"Riccati iteration stagnated with residual {res:.3e}")
    return P, it


def lqr_gain(p, B, r) -> np.ndarray:
    """``K = R^{-1} B' P`` as a (m, N) array."""
    p = np.asarray(p, dtype=float)
    B = np.reshape(np.asarray(B, dtype=float), (p.shape[0], -1))
    R = np.diag(np.broadcast_to(np.ravel(np.asarray(r, dtype=float)), (B.shape[1],)))
    return np.linalg.solve(R, B.T @ p)


def feedforward_gain(ss: PseudoStateSpace, k) -> float:
    """Reference scaling giving the closed loop unit DC gain."""
    K = np.reshape(np.asarray(k, dtype=float), (1, ss.n_states))
    A_cl = ss.A - ss.B @ K
    try:
        dc = (ss.C @ np.linalg.solve(-A_cl, ss.B)).item()
    except np.linalg.LinAlgError:
        raise LqrError("closed loop is singular at DC (integrating loop)") from None
    if dc == 0 or not math.isfinite(dc):
        raise LqrError(f"closed-loop DC gain {dc} cannot be inverted")
    return 1.0 / dc


def fractional_stability(a_closed, base_order: Optional[float] = None,
                         orders: Optional[Sequence[float]] = None) -> StabilityVerdict:
    """Eigenvalue-sector test ``|arg(lambda)| > q pi / 2``.

    Without a commensurate base order, the largest state order is used and the
    verdict is flagged conservative.
    """
    a_closed = np.asarray(a_closed, dtype=float)
    conservative = base_order is None
    if base_order is not None:
        q = float(base_order)
    elif orders is not None and len(orders):
        q = float(np.max(orders))
    else:
        q = 1.0
    eig = np.linalg.eigvals(a_closed)
    margin = float(np.min(np.abs(np.angle(eig))) - q * np.pi / 2)
    return StabilityVerdict(margin > 0, margin, q, conservative)


def design(ss: PseudoStateSpace, q_diag, r) -> LqrSolution:
    """Riccati solution, gain, feedforward and residual in one call."""
    w = WeightSpec(q_diag, r)
    if len(w.q_diag) != ss.n_states:
        raise ValueError(f"{len(w.q_diag)} Q entries for {ss.n_states} states")
    Q, R = w.Q, w.R
    P, iters = _newton_kleinman(ss.A, ss.B, Q, R, TOL, MAX_ITER)
    K = lqr_gain(P, ss.B, w.r)
    nbar = feedforward_gain(ss, K)
    return LqrSolution(P, K, nbar, riccati_residual(ss.A, ss.B, Q, R, P), iters)
