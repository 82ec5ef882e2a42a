"""PESA-II: region-based Pareto envelope selection.

The archive holds mutually non-dominated individuals on an adaptive hypergrid.
Parents are picked by binary tournament between occupied grid cells, the less
crowded cell winning; archive overflow evicts from the most crowded cell.
All objectives are minimized.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "Individual",
    "PesaConfig",
    "ParetoArchive",
    "dominates",
    "grid_cell",
    "squeeze_factor",
    "select_parent",
    "vary",
    "update_archive",
    "optimize",
    "best_compromise",
    "hypervolume_2d",
]


@dataclass
class Individual:
    genes: np.ndarray
    objectives: Optional[np.ndarray] = None
    info: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "genes": [float(g) for g in self.genes],
            "objectives": None if self.objectives is None else [float(v) for v in self.objectives],
            **({"info": self.info} if self.info else {}),
        }


@dataclass(frozen=True)
class PesaConfig:
    """Optimizer settings.  ``bounds`` is one ``(lo, hi)`` pair per gene, or a
    single pair applied to every gene."""

    population: int = 200
    generations: int = 250
    capacity: int = 100
    crossover: float = 0.7
    divisions: int = 10
    bounds: tuple = (-4.0, 3.0)
    mutation_scale: float = 0.1
    seed: int = 0

    def __post_init__(self):
        for name in ("population", "capacity", "divisions"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.generations < 0:
            raise ValueError("generations must be >= 0")
        if not 0.0 <= self.crossover <= 1.0:
            raise ValueError("crossover probability must lie in [0, 1]")
        if self.mutation_scale < 0:
            raise ValueError("mutation_scale must be >= 0")

    def gene_bounds(self, n_genes: int) -> np.ndarray:
        b = np.asarray(self.bounds, dtype=float)
        if b.shape == (2,):
            b = np.tile(b, (n_genes, 1))
        if b.shape != (n_genes, 2) or np.any(b[:, 0] > b[:, 1]):
            raise ValueError(f"bounds {self.bounds} do not fit {n_genes} genes")
        return b

    def to_dict(self) -> dict:
        return {
            "population": self.population,
            "generations": self.generations,
            "capacity": self.capacity,
            "crossover": self.crossover,
            "divisions": self.divisions,
            "bounds": np.asarray(self.bounds, dtype=float).tolist(),
            "mutation_scale": self.mutation_scale,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PesaConfig":
        d = dict(d)
        if "bounds" in d:
            b = np.asarray(d["bounds"], dtype=float)
            d["bounds"] = tuple(b.tolist()) if b.ndim == 1 else tuple(map(tuple, b.tolist()))
        return cls(**d)


def dominates(a: Sequence[float], b: Sequence[float]) -> bool:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"objective vectors differ in length: {a.shape} vs {b.shape}")
    return bool(np.all(a <= b) and np.any(a < b))


def grid_cell(objectives, lo, hi, divisions: int) -> tuple[int, ...]:
    v = np.asarray(objectives, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    span = hi - lo
    with np.errstate(divide="ignore", invalid="ignore"):
        idx = np.floor(divisions * (v - lo) / span)
    idx = np.where(span > 0, idx, 0)
    idx = np.clip(idx, 0, divisions - 1)
    return tuple(int(i) for i in idx)


class ParetoArchive:
    """Bounded archive of mutually non-dominated individuals on an adaptive grid."""

    def __init__(self, capacity: int = 100, divisions: int = 10):
        if capacity < 1 or divisions < 1:
            raise ValueError("capacity and divisions must be positive")
        self.capacity = capacity
        self.divisions = divisions
        self.members: list[Individual] = []
        self.lo: Optional[np.ndarray] = None
        self.hi: Optional[np.ndarray] = None
        self._cells: list[tuple[int, ...]] = []

    def __len__(self) -> int:
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    def objectives(self) -> np.ndarray:
        return np.array([m.objectives for m in self.members], dtype=float)

    def genes(self) -> np.ndarray:
        return np.array([m.genes for m in self.members], dtype=float)

    def _regrid(self) -> None:
        if not self.members:
            self.lo = self.hi = None
            self._cells = []
            return
        F = self.objectives()
        self.lo = F.min(axis=0)
        self.hi = F.max(axis=0)
        self._cells = [grid_cell(f, self.lo, self.hi, self.divisions) for f in F]

    def cell_of(self, index: int) -> tuple[int, ...]:
        return self._cells[index]

    def cells(self) -> dict[tuple[int, ...], list[int]]:
        """Occupied cells mapped to member indices, in first-seen order."""
        occupied: dict[tuple[int, ...], list[int]] = {}
        for i, c in enumerate(self._cells):
            occupied.setdefault(c, []).append(i)
        return occupied

    def squeeze(self, index: int) -> int:
        c = self._cells[index]
        return sum(1 for other in self._cells if other == c)

    def remove(self, index: int) -> Individual:
        out = self.members.pop(index)
        self._regrid()
        return out

    def insert(self, ind: Individual) -> None:
        self.members.append(ind)
        self._regrid()

    def to_json(self, orientation: Optional[Sequence[str]] = None,
                names: Optional[Sequence[str]] = None) -> str:
        doc = {
            "capacity": self.capacity,
            "divisions": self.divisions,
            "objective_names": list(names) if names else None,
            "orientation": list(orientation) if orientation else None,
            "members": [m.to_dict() for m in self.members],
        }
        return json.dumps(doc, indent=2, sort_keys=True)

    def to_csv(self, path, gene_names: Sequence[str], objective_names: Sequence[str]) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(list(gene_names) + list(objective_names))
            for m in self.members:
                writer.writerow([repr(float(v)) for v in list(m.genes) + list(m.objectives)])


def squeeze_factor(member: Individual, archive: ParetoArchive) -> int:
    for i, m in enumerate(archive.members):
        if m is member:
            return archive.squeeze(i)
    raise ValueError("individual is not an archive member")


def select_parent(archive: ParetoArchive, rng: np.random.Generator) -> Individual:
    """Binary tournament between two occupied cells; the sparser one wins."""
    if not archive.members:
        raise ValueError("cannot select from an empty archive")
    cells = list(archive.cells().values())
    a, b = rng.integers(len(cells), size=2)
    sa, sb = len(cells[a]), len(cells[b])
    if sa < sb:
        win = a
    elif sb < sa:
        win = b
    else:
        win = a if rng.random() < 0.5 else b
    members = cells[win]
    return archive.members[members[rng.integers(len(members))]]


def vary(parents: Sequence[np.ndarray], bounds: np.ndarray, mutation_scale: float,
         rng: np.random.Generator, mutate_after_crossover: bool = True) -> np.ndarray:
    """Child genes from one parent (Gaussian mutation) or two (BLX-0.5 crossover).

    With two parents each child gene is drawn uniformly from the parents'
    interval widened by half its length on both sides, then mutated with
    probability ``1/len(genes)``.  The result is clamped to ``bounds``.
    """
    bounds = np.asarray(bounds, dtype=float)
    if len(parents) == 2:
        p1 = np.asarray(parents[0], dtype=float)
        p2 = np.asarray(parents[1], dtype=float)
        lo = np.minimum(p1, p2)
        hi = np.maximum(p1, p2)
        width = hi - lo
        child = rng.uniform(lo - 0.5 * width, hi + 0.5 * width)
        if mutate_after_crossover and mutation_scale > 0:
            mask = rng.random(child.size) < 1.0 / child.size
            child = child + mask * rng.normal(0.0, mutation_scale, child.size)
    elif len(parents) == 1:
        p = np.asarray(parents[0], dtype=float)
        child = p + rng.normal(0.0, 1.0, p.size) * mutation_scale
    else:
        raise ValueError("vary takes one or two parents")
    return np.clip(child, bounds[:, 0], bounds[:, 1])


def update_archive(archive: ParetoArchive, candidate: Individual,
                   rng: np.random.Generator) -> bool:
    """Fold one evaluated candidate into the archive; True if it was accepted."""
    f = np.asarray(candidate.objectives, dtype=float)
    F = archive.objectives() if archive.members else np.empty((0, f.size))
    if F.size:
        le = np.all(F <= f, axis=1)
        lt = np.any(F < f, axis=1)
        if np.any(le & lt):
            return False
        ge = np.all(f <= F, axis=1)
        gt = np.any(f < F, axis=1)
        keep = ~(ge & gt)
        if not np.all(keep):
            archive.members = [m for m, k in zip(archive.members, keep) if k]
    archive.insert(candidate)
    if len(archive) > archive.capacity:
        occupied = archive.cells()
        crowd = max(len(v) for v in occupied.values())
        worst = [v for v in occupied.values() if len(v) == crowd]
        cell = worst[rng.integers(len(worst))]
        archive.remove(cell[rng.integers(len(cell))])
    return True


def optimize(evaluate: Callable[[np.ndarray], Sequence[float]], n_genes: int,
             cfg: PesaConfig = PesaConfig(), *,
             on_generation: Optional[Callable[[int, ParetoArchive], None]] = None,
             sentinel: float = 1e12, n_objectives: Optional[int] = None) -> ParetoArchive:
    """Run PESA-II and return the final archive.

    ``evaluate`` maps a gene vector to a vector of objectives to minimize;
    exceptions and non-finite values become the ``sentinel`` vector.
    ``on_generation(g, archive)`` is called after generation ``g`` is folded
    in (``g = 0`` is the initial population).  ``n_objectives`` sizes the
    sentinel vector; when omitted it is taken from the first successful
    evaluation and earlier failures are folded in once it is known.
    """
    rng = np.random.default_rng(cfg.seed)
    bounds = cfg.gene_bounds(n_genes)
    archive = ParetoArchive(cfg.capacity, cfg.divisions)
    n_obj = n_objectives

    def score(genes: np.ndarray) -> Optional[np.ndarray]:
        try:
            f = np.asarray(evaluate(genes), dtype=float).ravel()
        except (ArithmeticError, ValueError, np.linalg.LinAlgError):
            return None
        if not np.all(np.isfinite(f)) or np.any(np.abs(f) >= sentinel):
            return None
        return f

    def fold(batch: np.ndarray) -> None:
        nonlocal n_obj
        scores = [score(g) for g in batch]
        if n_obj is None:
            n_obj = next((f.size for f in scores if f is not None), None)
            if n_obj is None:
                raise RuntimeError("every evaluation failed; objective count unknown")
        for genes, f in zip(batch, scores):
            f = np.full(n_obj, sentinel) if f is None else f
            update_archive(archive, Individual(genes, f), rng)

    fold(rng.uniform(bounds[:, 0], bounds[:, 1], size=(cfg.population, n_genes)))
    if on_generation:
        on_generation(0, archive)

    for gen in range(1, cfg.generations + 1):
        children = []
        for _ in range(cfg.population):
            if rng.random() < cfg.crossover:
                parents = [select_parent(archive, rng).genes, select_parent(archive, rng).genes]
            else:
                parents = [select_parent(archive, rng).genes]
            children.append(vary(parents, bounds, cfg.mutation_scale, rng))
        fold(np.array(children))
        if on_generation:
            on_generation(gen, archive)
    return archive


def best_compromise(archive: ParetoArchive | Sequence[Individual]) -> Individual:
    """Member closest to the ideal point after per-objective min-max scaling."""
    members = list(archive.members if isinstance(archive, ParetoArchive) else archive)
    if not members:
        raise ValueError("empty archive")
    F = np.array([m.objectives for m in members], dtype=float)
    lo = F.min(axis=0)
    span = F.max(axis=0) - lo
    norm = np.where(span > 0, (F - lo) / np.where(span > 0, span, 1.0), 0.0)
    dist = np.sqrt(np.sum(norm ** 2, axis=1))
    best = dist.min()
    tied = [i for i in range(len(members)) if math.isclose(dist[i], best, rel_tol=0, abs_tol=1e-12)]
    return members[min(tied, key=lambda i: tuple(members[i].genes))]


def hypervolume_2d(points, reference) -> float:
    """Area dominated by ``points`` and bounded by ``reference`` (minimization)."""
    P = np.asarray(points, dtype=float).reshape(-1, 2)
    ref = np.asarray(reference, dtype=float)
    P = P[np.all(P < ref, axis=1)]
    if P.size == 0:
        return 0.0
    P = P[np.lexsort((P[:, 1], P[:, 0]))]
    area = 0.0
    best_y = ref[1]
    for x, y in P:
        if y < best_y:
            area += (ref[0] - x) * (best_y - y)
            best_y = y
    return float(area)
