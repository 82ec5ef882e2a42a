"""Evaluation pipeline: weights -> LQR gain -> (J1, J2, J3) and step metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import freqdom
from .freqdom import FrequencyGrid
from .lqr import LqrError, LqrSolution, design, fractional_stability
from .model import PseudoStateSpace, SingularResolventError
from .simulate import (
    PerturbationSpec,
    SimConfig,
    SimulationError,
    SimulationRecord,
    StepMetrics,
    simulate_closed_loop,
    step_metrics,
)

__all__ = ["FreqConfig", "Evaluation", "evaluate", "LqrDesignProblem", "OBJECTIVE_SUBSETS"]

OBJECTIVE_SUBSETS = {
    "J1-J2": ("J1", "J2"),
    "J2-J3": ("J2", "J3"),
    "J1-J3": ("J1", "J3"),
    "J1-J2-J3": ("J1", "J2", "J3"),
}


@dataclass(frozen=True)
class FreqConfig:
    lo: float = 1e-3
    hi: float = 1e3
    points: int = 100
    mode: str = "fractional"
    perturbation: PerturbationSpec = PerturbationSpec()

    def __post_init__(self):
        if self.mode not in ("fractional", "literal"):
            raise ValueError(f"unknown resolvent mode {self.mode!r}")
        if not 0 < self.lo < self.hi or self.points < 2:
            raise ValueError("need 0 < lo < hi and at least two grid points")

    def grid(self) -> FrequencyGrid:
        return FrequencyGrid.logspace(self.lo, self.hi, self.points)


@dataclass
class Evaluation:
    q_diag: tuple
    r: float
    lqr: Optional[LqrSolution]
    j1: float
    j2: float
    j3: float
    metrics: Optional[StepMetrics] = None
    record: Optional[SimulationRecord] = field(default=None, repr=False)
    stable: Optional[bool] = None
    error: Optional[str] = None

    @property
    def settling_time(self) -> Optional[float]:
        return None if self.metrics is None else self.metrics.settling_time

    def to_dict(self) -> dict:
        out = {
            "q_diag": list(self.q_diag),
            "r": self.r,
            "J1": self.j1,
            "J2": self.j2,
            "J3": self.j3,
            "settling_time": self.settling_time,
            "overshoot_percent": None if self.metrics is None else self.metrics.overshoot_percent,
            "stable": self.stable,
        }
        if self.lqr is not None:
            out["K"] = self.lqr.k.ravel().tolist()
            out["nbar"] = self.lqr.nbar
        if self.error:
            out["error"] = self.error
        return out


def evaluate(ss: PseudoStateSpace, q_diag: Sequence[float], r: float,
             sim: SimConfig = SimConfig(), freq: FreqConfig = FreqConfig(),
             *, objectives: Sequence[str] = ("J1", "J2", "J3"),
             with_metrics: bool = True) -> Evaluation:
    """One pass of the design pipeline for fixed weights.

    Failures (Riccati, singular resolvent, divergence) become the sentinel in
    the affected objectives and are described in ``error``.
    """
    q_diag = tuple(float(v) for v in q_diag)
    bad = sim.sentinel
    try:
        sol = design(ss, q_diag, r)
    except (LqrError, ValueError, np.linalg.LinAlgError) as exc:
        return Evaluation(q_diag, r, None, bad, -bad, bad, error=str(exc))

    grid = freq.grid()
    j1 = j2 = j3 = math.nan
    metrics = record = None
    error = None
    if "J1" in objectives or with_metrics:
        try:
            record = simulate_closed_loop(ss, sol.k, sol.nbar, sim)
            metrics = step_metrics(record, sim.band, sim.s1, sim.s2, sim.use_time_weight)
            j1 = metrics.j1
        except SimulationError as exc:
            j1, error = bad, str(exc)
    if "J2" in objectives:
        try:
            j2 = freqdom.objective_j2(ss, q_diag, r, grid, freq.mode)
        except SingularResolventError as exc:
            j2, error = -bad, str(exc)
    if "J3" in objectives:
        try:
            j3 = freqdom.objective_j3(ss, sol.k, grid, freq.perturbation, freq.mode)
        except SingularResolventError as exc:
            j3, error = bad, str(exc)
    A_cl = ss.A - ss.B @ sol.k
    orders = np.ones(ss.n_states) if sim.stepping == "integer" else ss.orders
    base = 1.0 if sim.stepping == "integer" else ss.base_order
    stable = fractional_stability(A_cl, base, orders).stable
    return Evaluation(q_diag, r, sol, j1, j2, j3, metrics, record, stable, error)


class LqrDesignProblem:
    """Gene vector ``[log10 q_1 .. log10 q_N, log10 r]`` -> oriented objectives.

    J1 and J3 are minimized as-is; J2 is negated so that it is maximized.
    """

    def __init__(self, ss: PseudoStateSpace, objectives: Sequence[str] = ("J1", "J2", "J3"),
                 sim: SimConfig = SimConfig(), freq: FreqConfig = FreqConfig()):
        unknown = set(objectives) - {"J1", "J2", "J3"}
        if unknown or not objectives:
            raise ValueError(f"unknown objectives {sorted(unknown)}")
        self.ss = ss
        self.objectives = tuple(objectives)
        self.sim = sim
        self.freq = freq
        self._grid = freq.grid()

    @property
    def n_genes(self) -> int:
        return self.ss.n_states + 1

    @property
    def gene_names(self) -> list[str]:
        return [f"log10_Q{i + 1}" for i in range(self.ss.n_states)] + ["log10_R"]

    @property
    def orientation(self) -> list[str]:
        return ["max" if o == "J2" else "min" for o in self.objectives]

    @staticmethod
    def decode(genes) -> tuple[np.ndarray, float]:
        g = np.asarray(genes, dtype=float)
        return 10.0 ** g[:-1], float(10.0 ** g[-1])

    def raw_objectives(self, genes) -> dict[str, float]:
        q, r = self.decode(genes)
        sol = design(self.ss, q, r)
        out = {}
        for name in self.objectives:
            if name == "J1":
                rec = simulate_closed_loop(self.ss, sol.k, sol.nbar, self.sim)
                m = step_metrics(rec, self.sim.band, self.sim.s1, self.sim.s2,
                                 self.sim.use_time_weight)
                out["J1"] = m.j1
            elif name == "J2":
                out["J2"] = freqdom.objective_j2(self.ss, q, r, self._grid, self.freq.mode)
            else:
                out["J3"] = freqdom.objective_j3(self.ss, sol.k, self._grid,
                                                 self.freq.perturbation, self.freq.mode)
        return out

    def __call__(self, genes) -> np.ndarray:
        raw = self.raw_objectives(genes)
        return np.array([-raw[o] if o == "J2" else raw[o] for o in self.objectives])

    def to_raw(self, oriented: Sequence[float]) -> dict[str, float]:
        return {o: float(-v if o == "J2" else v) for o, v in zip(self.objectives, oriented)}
