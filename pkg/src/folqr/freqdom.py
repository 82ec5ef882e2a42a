"""Singular-value robustness objectives evaluated on a frequency grid."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import PseudoStateSpace, resolvent_solve
from .simulate import PerturbationSpec

__all__ = [
    "FrequencyGrid",
    "singular_values",
    "h_matrix",
    "objective_j2",
    "loop_transfer",
    "objective_j3",
    "ZERO_LOOP_PENALTY",
]

ZERO_LOOP_PENALTY = 1e6
_ZERO_LOOP = 1e-12


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    omegas: np.ndarray

    def __post_init__(self):
        w = np.array(self.omegas, dtype=float)
        if w.ndim != 1 or w.size < 2:
            raise ValueError("a frequency grid needs at least two points")
        if np.any(w <= 0) or np.any(np.diff(w) <= 0):
            raise ValueError("grid frequencies must be positive and strictly increasing")
        w.setflags(write=False)
        object.__setattr__(self, "omegas", w)

    @classmethod
    def logspace(cls, lo: float = 1e-3, hi: float = 1e3, points: int = 100) -> "FrequencyGrid":
        return cls(np.logspace(np.log10(lo), np.log10(hi), points))

    def __len__(self) -> int:
        return self.omegas.size


def singular_values(M) -> np.ndarray:
    """Singular values of a complex matrix, descending."""
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    return np.linalg.svd(M, compute_uv=False)


def _h_stack(ss: PseudoStateSpace, q_diag, omegas, mode) -> np.ndarray:
    q = np.asarray(q_diag, dtype=float)
    if q.shape != (ss.n_states,) or np.any(q < 0):
        raise ValueError("q_diag must hold one non-negative entry per state")
    x = resolvent_solve(ss.A, ss.orders, omegas, ss.B, mode)
    return np.sqrt(q)[None, :, None] * x


def h_matrix(ss: PseudoStateSpace, q_diag, omega: float, mode: str = "fractional") -> np.ndarray:
    """``diag(sqrt(q)) (Lambda(j w) - A)^{-1} B``, an N x m complex matrix."""
    return _h_stack(ss, q_diag, [omega], mode)[0]


def objective_j2(ss: PseudoStateSpace, q_diag, r, grid: FrequencyGrid,
                 mode: str = "fractional") -> float:
    """Return-difference singular-value bound summed over the grid.

    Single input: ``sum_j sqrt(1 + sigma^2(H)/r)``.  Several inputs: the ratio
    ``sigma_min^2(R^.5)/sigma_max^2(R^.5)`` replaces the 1 and the k1 smallest
    singular values of H are paired in ascending order.
    """
    r = np.ravel(np.asarray(r, dtype=float))
    if np.any(r <= 0):
        raise ValueError("R must be positive definite")
    H = _h_stack(ss, q_diag, grid.omegas, mode)
    m = ss.n_inputs
    if r.size == 1 and m > 1:
        r = np.repeat(r, m)
    sr = np.sqrt(r)
    smax2 = float(np.max(sr)) ** 2
    smin2 = float(np.min(sr)) ** 2
    if m == 1:
        sig2 = np.sum(np.abs(H[:, :, 0]) ** 2, axis=1)
        terms = np.sqrt(1.0 + sig2 / smax2)
        return float(np.sum(terms))
    k1 = min(m, ss.n_outputs)
    sv = np.linalg.svd(H, compute_uv=False)
    asc = np.sort(sv, axis=1)[:, :k1]
    terms = np.sqrt(smin2 / smax2 + asc ** 2 / smax2)
    return float(np.sum(terms))


def _loop_stack(ss: PseudoStateSpace, k, omegas, mode) -> np.ndarray:
    K = np.reshape(np.asarray(k, dtype=float), (-1, ss.n_states))
    x = resolvent_solve(ss.A, ss.orders, omegas, ss.B, mode)
    return K[None, :, :] @ x


def loop_transfer(ss: PseudoStateSpace, k, omega: float, mode: str = "fractional"):
    """Return ratio ``K (Lambda(j w) - A)^{-1} B`` at the plant input."""
    L = _loop_stack(ss, k, [omega], mode)[0]
    return complex(L[0, 0]) if L.shape == (1, 1) else L


def objective_j3(ss: PseudoStateSpace, k, grid: FrequencyGrid,
                 perturbation: PerturbationSpec = PerturbationSpec(),
                 mode: str = "fractional", penalty: float = ZERO_LOOP_PENALTY) -> float:
    """``sum_j sigma_max((I - L) L^{-1})`` over the grid.

    Grid points where L is numerically zero (or singular) add ``penalty``.
    """
    w = grid.omegas
    if perturbation.kind == "external_tf":
        L = perturbation.evaluate(w).reshape(-1, 1, 1)
    else:
        L = _loop_stack(ss, k, w, mode)
    total = 0.0
    if L.shape[1:] == (1, 1):
        l = L[:, 0, 0]
        small = np.abs(l) < _ZERO_LOOP
        safe = np.where(small, 1.0, l)
        vals = np.abs(1.0 - safe) / np.abs(safe)
        total = float(np.sum(np.where(small, penalty, vals)))
        return total
    eye = np.eye(L.shape[1])
    for Lj in L:
        if singular_values(Lj)[-1] < _ZERO_LOOP:
            total += penalty
            continue
        total += float(singular_values((eye - Lj) @ np.linalg.inv(Lj))[0])
    return total
