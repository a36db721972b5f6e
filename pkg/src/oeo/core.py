"""Domain types, the objective contract, box sampling and the seeded RNG."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Optional

import numpy as np

Array = np.ndarray

_UINT64 = (1 << 64) - 1


def seeded_stream(seed: int) -> np.random.Generator:
    """Return the single random stream used by one run.

    Any 64-bit integer is accepted; negative seeds are mapped onto their
    unsigned two's-complement value so that every seed is valid.
    """
    return np.random.Generator(np.random.PCG64(int(seed) & _UINT64))


@dataclass(frozen=True)
class Bounds:
    lower: Array
    upper: Array

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float)).copy()
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float)).copy()
        if lo.ndim != 1 or lo.shape != hi.shape or lo.size < 1:
            raise ValueError("bounds must be two 1-D vectors of equal length >= 1")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValueError("bounds must be finite")
        if not np.all(lo < hi):
            raise ValueError("lower must be strictly below upper in every dimension")
        lo.flags.writeable = False
        hi.flags.writeable = False
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def box(cls, lo: float, hi: float, dims: int) -> "Bounds":
        return cls(np.full(dims, float(lo)), np.full(dims, float(hi)))

    @property
    def dims(self) -> int:
        return self.lower.size

    @property
    def width(self) -> Array:
        return self.upper - self.lower

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool((x >= self.lower).all() and (x <= self.upper).all())


def random_point(bounds: Bounds, rng: np.random.Generator) -> Array:
    """Uniform sample ``lower + u * (upper - lower)`` with ``u`` in [0, 1)."""
    u = rng.random(bounds.dims)
    return bounds.lower + u * (bounds.upper - bounds.lower)


def clamp(point, bounds: Bounds) -> Array:
    x = np.asarray(point, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError(f"cannot clamp a non-finite point: {x}")
    return np.minimum(np.maximum(x, bounds.lower), bounds.upper)


@dataclass
class Solution:
    point: Array
    cost: float
    birth_iteration: int = 0


@dataclass
class Cluster:
    center: Array
    members: list[Solution] = field(default_factory=list)
    local_g: Optional[float] = None

    def __len__(self) -> int:
        return len(self.members)

    def best(self) -> Solution:
        return min(self.members, key=lambda s: s.cost)

    def points(self) -> Array:
        return np.array([m.point for m in self.members], dtype=float)

    def costs(self) -> Array:
        return np.array([m.cost for m in self.members], dtype=float)


@dataclass
class Objective:
    """A pure cost function over a box, optionally with an analytic gradient."""

    func: Callable[[Array], float]
    bounds: Bounds
    grad: Optional[Callable[[Array], Array]] = None
    name: str = "objective"
    optimum: Optional[float] = None
    optimum_point: Optional[Array] = None

    @property
    def dims(self) -> int:
        return self.bounds.dims

    def __call__(self, x) -> float:
        return float(self.func(np.asarray(x, dtype=float)))


class TraceRow(NamedTuple):
    iteration: int
    evaluations: int
    best_cost: float
    A: Optional[float] = None
    B: Optional[float] = None
    G_mean: Optional[float] = None
    clusters: Optional[int] = None


TRACE_HEADER = "iteration,evaluations,best_cost,A,B,G_mean,clusters"


@dataclass
class RunResult:
    best: Solution
    trace: list[TraceRow]
    seed: int
    config: dict
    algorithm: str = ""

    @property
    def best_cost(self) -> float:
        return self.best.cost

    @property
    def evaluations(self) -> int:
        return self.trace[-1].evaluations if self.trace else 0


class Evaluator:
    """Counts evaluations, enforces the box and finiteness, tracks the best."""

    def __init__(self, objective: Objective):
        self.objective = objective
        self.evaluations = 0
        self.best: Optional[Solution] = None

    def __call__(self, x: Array, iteration: int = 0) -> Solution:
        if not self.objective.bounds.contains(x):
            raise ValueError(f"point outside bounds: {x}")
        cost = self.objective(x)
        if not math.isfinite(cost):
            raise ValueError(f"objective returned non-finite cost {cost} at {x}")
        self.evaluations += 1
        sol = Solution(np.array(x, dtype=float), cost, iteration)
        if self.best is None or cost < self.best.cost:
            self.best = sol
        return sol
