"""Closed-loop time simulation with the Grünwald-Letnikov scheme.

Each state is advanced with the implicit GL approximation

    D^{n_i} x_i(t_k) ~= h^{-n_i} * sum_{j=0}^{k} w_j^{(n_i)} x_i(t_{k-j})

so a step is one constant linear solve plus a per-state history sum.  With
all orders equal to one the scheme reduces to backward Euler.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Optional

import numba
import numpy as np
from scipy.integrate import trapezoid

from .model import PseudoStateSpace, split_proper, to_pseudo_state_space

__all__ = [
    "SimulationError",
    "GlWeightTable",
    "gl_weights",
    "gl_weight_table",
    "PerturbationSpec",
    "SimConfig",
    "SimulationRecord",
    "StepMetrics",
    "simulate_closed_loop",
    "step_metrics",
    "objective_j1",
    "DIVERGENCE_SENTINEL",
]

DIVERGENCE_SENTINEL = 1e12
_BLOWUP = 1e100


class SimulationError(ArithmeticError):
    """Singular step matrix or a state that left the finite range."""

    def __init__(self, message: str, step: Optional[int] = None):
        self.step = step
        super().__init__(message if step is None else f"{message} (step {step})")


@lru_cache(maxsize=64)
def _cached_weights(alpha: float, count: int) -> np.ndarray:
    j = np.arange(1, count + 1, dtype=float)
    w = np.empty(count + 1)
    w[0] = 1.0
    w[1:] = np.cumprod(1.0 - (alpha + 1.0) / j)
    w.setflags(write=False)
    return w


def gl_weights(alpha: float, count: int) -> np.ndarray:
    """Binomial weights ``(-1)^j binom(alpha, j)`` for ``j = 0..count``."""
    if not 0 < alpha <= 1:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if count < 1:
        raise ValueError("count must be >= 1")
    return _cached_weights(float(alpha), int(count))


@dataclass(frozen=True)
class GlWeightTable:
    alpha: float
    step: float
    weights: np.ndarray


def gl_weight_table(alpha: float, step: float, count: int) -> GlWeightTable:
    return GlWeightTable(alpha, step, gl_weights(alpha, count))


@dataclass(frozen=True)
class PerturbationSpec:
    """Perturbation block ``L(s)``.

    ``return_ratio`` means the loop's own return ratio at the plant input is
    used (frequency objectives only; nothing is inserted in simulation).
    ``external_tf`` carries a proper transfer function given as text.
    """

    kind: str = "return_ratio"
    tf: Optional[str] = None

    def __post_init__(self):
        if self.kind not in ("return_ratio", "external_tf"):
            raise ValueError(f"unknown perturbation kind {self.kind!r}")
        if (self.kind == "external_tf") != (self.tf is not None):
            raise ValueError("a transfer function is required exactly when kind='external_tf'")
        if self.tf is not None:
            split_proper(self.tf)

    def realization(self) -> tuple[float, Optional[PseudoStateSpace]]:
        """Feedthrough ``d`` and the strictly proper part's realization."""
        d, g = split_proper(self.tf)
        if not g.numerator_terms:
            return d, None
        return d, to_pseudo_state_space(g)

    def evaluate(self, omegas: np.ndarray) -> np.ndarray:
        d, g = split_proper(self.tf)
        return d + g.evaluate(1j * np.asarray(omegas, dtype=float))


@dataclass(frozen=True)
class SimConfig:
    """Settings shared by every closed-loop step simulation.

    ``stepping="integer"`` ignores the model's fractional orders and steps
    every state with order one (backward Euler).
    """

    h: float = 1e-3
    horizon: float = 20.0
    memory: Optional[int] = None
    reference: float = 1.0
    band: float = 0.02
    s1: float = 1.0
    s2: float = 1.0
    use_time_weight: bool = True
    stepping: str = "fractional"
    perturbed: bool = False
    perturbation: Optional[PerturbationSpec] = None
    perturbation_side: str = "input"
    sentinel: float = DIVERGENCE_SENTINEL

    def __post_init__(self):
        if self.h <= 0 or self.horizon < 10 * self.h:
            raise ValueError("need h > 0 and horizon >= 10*h")
        if self.memory is not None and self.memory < 1:
            raise ValueError("memory must be >= 1 or None")
        if not 0 < self.band <= 0.2:
            raise ValueError("band must lie in (0, 0.2]")
        if self.stepping not in ("fractional", "integer"):
            raise ValueError(f"unknown stepping {self.stepping!r}")
        if self.perturbation_side not in ("input", "output"):
            raise ValueError(f"unknown perturbation side {self.perturbation_side!r}")
        if self.s1 < 0 or self.s2 < 0:
            raise ValueError("objective weights must be non-negative")

    def replace(self, **changes) -> "SimConfig":
        return replace(self, **changes)


@dataclass
class SimulationRecord:
    times: np.ndarray
    y: np.ndarray
    u: np.ndarray
    e: np.ndarray
    reference: float
    states: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def h(self) -> float:
        return float(self.times[1] - self.times[0])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["t", "y", "u", "e"])
            for row in zip(self.times, self.y, self.u, self.e):
                writer.writerow([repr(float(v)) for v in row])


@dataclass(frozen=True)
class StepMetrics:
    itae: float
    iae: float
    isco: float
    settling_time: Optional[float]
    overshoot_percent: float
    j1: float

    def to_dict(self) -> dict:
        return {
            "itae": self.itae,
            "iae": self.iae,
            "isco": self.isco,
            "settling_time": self.settling_time,
            "overshoot_percent": self.overshoot_percent,
            "j1": self.j1,
        }


@numba.njit(cache=True)
def _gl_march(m_inv, weights, mem, drive, steps):
    """Implicit GL recursion; returns states (N, steps+1) and the failing step (or -1)."""
    n = m_inv.shape[0]
    x = np.zeros((n, steps + 1))
    rhs = np.empty(n)
    for k in range(1, steps + 1):
        for i in range(n):
            acc = 0.0
            top = min(k, mem[i])
            wi = weights[i]
            xi = x[i]
            for j in range(1, top + 1):
                acc += wi[j] * xi[k - j]
            rhs[i] = drive[i] - acc
        for i in range(n):
            v = 0.0
            for l in range(n):
                v += m_inv[i, l] * rhs[l]
            if not (abs(v) < 1e100):
                return x, k
            x[i, k] = v
    return x, -1


def _closed_loop_matrices(ss, k, nbar, cfg):
    """Augmented (A, b, c, orders, gain-on-augmented) for the loop with an optional block."""
    n = ss.n_states
    orders = np.ones(n) if cfg.stepping == "integer" else ss.orders.copy()
    K = np.zeros((1, n)) if k is None else np.reshape(np.asarray(k, dtype=float), (1, n))
    A, B, C = ss.A, ss.B, ss.C
    block = None
    if cfg.perturbed and cfg.perturbation is not None and cfg.perturbation.kind == "external_tf":
        block = cfg.perturbation.realization()
    if block is None:
        return A - B @ K, B[:, 0] * nbar, C[0], orders, K[0], None

    d, pss = block
    p = 0 if pss is None else pss.n_states
    Ap = np.zeros((0, 0)) if pss is None else pss.A
    Bp = np.zeros((0, 1)) if pss is None else pss.B
    Cp = np.zeros((1, 0)) if pss is None else pss.C
    porders = np.zeros(0) if pss is None else (
        np.ones(p) if cfg.stepping == "integer" else pss.orders)
    Aa = np.zeros((n + p, n + p))
    ba = np.zeros(n + p)
    if cfg.perturbation_side == "input":
        # u -> L -> plant input
        Aa[:n, :n] = A - d * (B @ K)
        Aa[:n, n:] = B @ Cp
        Aa[n:, :n] = -(Bp @ K)
        Aa[n:, n:] = Ap
        ba[:n] = d * B[:, 0] * nbar
        ba[n:] = Bp[:, 0] * nbar
        ca = np.concatenate([C[0], np.zeros(p)])
    else:
        # plant output -> L -> measured y
        Aa[:n, :n] = A - B @ K
        Aa[n:, :n] = Bp @ C
        Aa[n:, n:] = Ap
        ba[:n] = B[:, 0] * nbar
        ca = np.concatenate([d * C[0], Cp[0]])
    ka = np.concatenate([K[0], np.zeros(p)])
    return Aa, ba, ca, np.concatenate([orders, porders]), ka, n


def simulate_closed_loop(
    ss: PseudoStateSpace,
    k=None,
    nbar: float = 1.0,
    config: SimConfig = SimConfig(),
    *,
    keep_states: bool = False,
) -> SimulationRecord:
    """Unit-step-type response of ``u = nbar*r - K x`` applied to ``ss``.

    Raises :class:`SimulationError` on a singular step matrix or divergence.
    """
    cfg = config
    h = cfg.h
    steps = int(round(cfg.horizon / h))
    A_cl, b, c, orders, kk, _ = _closed_loop_matrices(ss, k, nbar, cfg)
    r = cfg.reference
    n = A_cl.shape[0]
    hn = h ** orders
    M = np.eye(n) - hn[:, None] * A_cl
    try:
        m_inv = np.linalg.inv(M)
    except np.linalg.LinAlgError:
        raise SimulationError("step matrix I - diag(h^n) A_cl is singular") from None
    if not np.all(np.isfinite(m_inv)):
        raise SimulationError("step matrix I - diag(h^n) A_cl is singular")

    memory = steps if cfg.memory is None else min(cfg.memory, steps)
    mem = np.array([1 if o == 1.0 else memory for o in orders], dtype=np.int64)
    weights = np.zeros((n, memory + 1))
    for i, o in enumerate(orders):
        weights[i] = gl_weights(float(o), memory)
    drive = hn * b * r

    x, failed = _gl_march(m_inv, weights, mem, drive, steps)
    if failed >= 0:
        raise SimulationError("state diverged", step=int(failed))

    times = np.arange(steps + 1) * h
    y = c @ x
    u = nbar * r - kk @ x
    e = r - y
    return SimulationRecord(times, y, u, e, r, x if keep_states else None)


def step_metrics(
    rec: SimulationRecord,
    band_fraction: float = 0.02,
    s1: float = 1.0,
    s2: float = 1.0,
    use_time_weight: bool = True,
) -> StepMetrics:
    """Integral indices, settling time and overshoot of a step record."""
    if rec.times.size < 2:
        raise ValueError("record needs at least two samples")
    if not 0 < band_fraction <= 0.2:
        raise ValueError("band_fraction must lie in (0, 0.2]")
    t = rec.times
    abs_e = np.abs(rec.e)
    itae = float(trapezoid(t * abs_e, t))
    iae = float(trapezoid(abs_e, t))
    isco = float(trapezoid(rec.u ** 2, t))
    j1 = s1 * (itae if use_time_weight else iae) + s2 * isco

    r = rec.reference
    outside = np.nonzero(np.abs(rec.y - r) > band_fraction * abs(r))[0]
    if outside.size == 0:
        settling = float(t[0])
    elif outside[-1] == t.size - 1:
        settling = None
    else:
        settling = float(t[outside[-1] + 1])
    if r != 0:
        overshoot = max(0.0, (float(np.max(rec.y * np.sign(r))) - abs(r)) / abs(r) * 100.0)
    else:
        overshoot = 0.0
    return StepMetrics(itae, iae, isco, settling, overshoot, j1)


def objective_j1(ss: PseudoStateSpace, k, nbar: float, config: SimConfig = SimConfig()) -> float:
    """Weighted ITAE (or IAE) plus ISCO; the sentinel when the loop diverges."""
    if config.s1 == 0 and config.s2 == 0:
        return 0.0
    try:
        rec = simulate_closed_loop(ss, k, nbar, config)
    except SimulationError:
        return config.sentinel
    m = step_metrics(rec, config.band, config.s1, config.s2, config.use_time_weight)
    return m.j1 if math.isfinite(m.j1) else config.sentinel
