"""Benchmark landscapes with stored optima.

Homogeneous-peak standards (sphere, Rastrigin, Ackley, Griewank), the
Shekel foxholes, a generator of Gaussian-peak landscapes whose peaks crowd
into one small region, and a box-penalty benchmark with a hard feasibility
band.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import minimize

from .core import Array, Bounds, Objective, seeded_stream

# Shekel m = 10 foxholes on [0, 10]^4.
SHEKEL_A = np.array(
    [
        [4, 4, 4, 4],
        [1, 1, 1, 1],
        [8, 8, 8, 8],
        [6, 6, 6, 6],
        [3, 7, 3, 7],
        [2, 9, 2, 9],
        [5, 5, 3, 3],
        [8, 1, 8, 1],
        [6, 2, 6, 2],
        [7, 3.6, 7, 3.6],
    ],
    dtype=float,
)
SHEKEL_C = np.array([0.1, 0.2, 0.2, 0.4, 0.4, 0.6, 0.3, 0.7, 0.5, 0.5])
SHEKEL_XSTAR = np.array([4.00074671, 4.00059326, 3.99966290, 3.99950981])

PENALTY_BAND = (0.95, 1.05)
PENALTY_WEIGHT = 1e6
PENALTY_TARGET = 1.08


def sphere(x: Array) -> float:
    return float(np.dot(x, x))


def sphere_grad(x: Array) -> Array:
    return 2.0 * x


def rastrigin(x: Array) -> float:
    return float(10.0 * x.size + np.sum(x * x - 10.0 * np.cos(2.0 * np.pi * x)))


def rastrigin_grad(x: Array) -> Array:
    return 2.0 * x + 20.0 * np.pi * np.sin(2.0 * np.pi * x)


def ackley(x: Array) -> float:
    r = np.sqrt(np.mean(x * x))
    return float(
        -20.0 * np.exp(-0.2 * r) - np.exp(np.mean(np.cos(2.0 * np.pi * x))) + 20.0 + np.e
    )


def ackley_grad(x: Array) -> Array:
    d = x.size
    r = np.sqrt(np.mean(x * x))
    g = (2.0 * np.pi / d) * np.exp(np.mean(np.cos(2.0 * np.pi * x))) * np.sin(2.0 * np.pi * x)
    if r > 0:
        g = g + 4.0 * np.exp(-0.2 * r) * x / (d * r)
    return g


def _griewank_terms(x: Array):
    root = np.sqrt(np.arange(1, x.size + 1, dtype=float))
    return x / root, root


def griewank(x: Array) -> float:
    z, _ = _griewank_terms(x)
    return float(1.0 + np.dot(x, x) / 4000.0 - np.prod(np.cos(z)))


def griewank_grad(x: Array) -> Array:
    z, root = _griewank_terms(x)
    cos = np.cos(z)
    # product of all cosines except the i-th, without dividing by cos
    left = np.concatenate(([1.0], np.cumprod(cos)[:-1]))
    right = np.concatenate((np.cumprod(cos[::-1])[:-1][::-1], [1.0]))
    return x / 2000.0 + np.sin(z) / root * left * right


def shekel(x: Array) -> float:
    d2 = ((x - SHEKEL_A) ** 2).sum(axis=1)
    return float(-np.sum(1.0 / (d2 + SHEKEL_C)))


def shekel_grad(x: Array) -> Array:
    diff = x - SHEKEL_A
    den = (diff**2).sum(axis=1) + SHEKEL_C
    return (2.0 * diff / den[:, None] ** 2).sum(axis=0)


def penalty_box(x, lo: float, hi: float, weight: float) -> float:
    """``weight`` times the number of coordinates outside ``[lo, hi]``."""
    if not lo < hi:
        raise ValueError("penalty band needs lo < hi")
    x = np.asarray(x, dtype=float)
    return float(weight * np.count_nonzero((x > hi) | (x < lo)))


def penalized(x: Array, weight: float = PENALTY_WEIGHT) -> float:
    lo, hi = PENALTY_BAND
    return float(np.sum((x - PENALTY_TARGET) ** 2)) + penalty_box(x, lo, hi, weight)


@dataclass
class Peak:
    center: Array
    width: float
    depth: float


@dataclass
class LandscapeSpec:
    name: str
    dims: int
    bounds: Bounds
    peaks: Optional[list[Peak]] = None
    penalty_weight: Optional[float] = None
    seed: Optional[int] = None
    optimum: float = 0.0
    optimum_point: Optional[Array] = None
    params: dict = field(default_factory=dict)

    def to_config(self) -> dict:
        """Flat string mapping for a config section; enough to rebuild the spec."""
        out = {"name": self.name, "dims": str(self.dims)}
        if self.seed is not None:
            out["seed"] = str(self.seed)
        for k, v in sorted(self.params.items()):
            out[k] = str(v)
        if self.penalty_weight is not None:
            out["penalty_weight"] = repr(self.penalty_weight)
        return out


class _PeakArrays:
    def __init__(self, peaks: list[Peak]):
        self.c = np.array([p.center for p in peaks], dtype=float)
        self.inv2w2 = np.array([1.0 / (2.0 * p.width**2) for p in peaks])
        self.depth = np.array([p.depth for p in peaks])
        self.w2 = np.array([p.width**2 for p in peaks])

    def cost(self, x: Array) -> float:
        d2 = ((x - self.c) ** 2).sum(axis=1)
        return float(-np.dot(self.depth, np.exp(-d2 * self.inv2w2)))

    def grad(self, x: Array) -> Array:
        diff = x - self.c
        e = self.depth * np.exp(-(diff**2).sum(axis=1) * self.inv2w2) / self.w2
        return e @ diff


GAUSS_BOX = (-5.0, 5.0)
DEEPEST_DEPTH = 1.0
OTHER_DEPTH = (0.2, 0.9)


def gaussian_landscape(
    dims: int,
    n_dense_region_peaks: int,
    n_sparse_peaks: int,
    rng: Union[int, np.random.Generator],
    name: str = "gaussian",
) -> LandscapeSpec:
    """Gaussian-peak landscape with one crowded region.

    ``n_dense_region_peaks`` narrow peaks sit inside a sub-box spanning 10% of
    every dimension; ``n_sparse_peaks`` broad peaks are spread over the rest
    of the domain. The deepest peak lies in the crowded region and beats every
    other depth by at least 0.1. The stored optimum is the best local
    minimum reached from every peak center.
    """
    if n_dense_region_peaks + n_sparse_peaks < 1 or min(n_dense_region_peaks, n_sparse_peaks) < 0:
        raise ValueError("need at least one peak")
    seed = int(rng) if isinstance(rng, (int, np.integer)) else None
    gen = seeded_stream(seed) if seed is not None else rng
    lo, hi = GAUSS_BOX
    width = hi - lo
    bounds = Bounds.box(lo, hi, dims)
    sub = 0.1 * width
    sub_lo = lo + gen.random(dims) * (width - sub)
    peaks: list[Peak] = []
    for _ in range(n_dense_region_peaks):
        c = sub_lo + gen.random(dims) * sub
        peaks.append(Peak(c, float(gen.uniform(0.01, 0.03) * width), 0.0))
    for _ in range(n_sparse_peaks):
        while True:
            c = lo + gen.random(dims) * width
            if not np.all((c >= sub_lo) & (c <= sub_lo + sub)):
                break
        peaks.append(Peak(c, float(gen.uniform(0.05, 0.12) * width), 0.0))
    deepest = int(gen.integers(n_dense_region_peaks)) if n_dense_region_peaks else 0
    for i, p in enumerate(peaks):
        p.depth = DEEPEST_DEPTH if i == deepest else float(gen.uniform(*OTHER_DEPTH))
    arrays = _PeakArrays(peaks)
    best_val, best_x = np.inf, None
    for p in peaks:
        res = minimize(
            arrays.cost,
            p.center,
            jac=arrays.grad,
            method="L-BFGS-B",
            bounds=list(zip(bounds.lower, bounds.upper)),
            options={"ftol": 1e-15, "gtol": 1e-12, "maxiter": 500},
        )
        if res.fun < best_val:
            best_val, best_x = float(res.fun), np.asarray(res.x, dtype=float)
    return LandscapeSpec(
        name=name,
        dims=dims,
        bounds=bounds,
        peaks=peaks,
        seed=seed,
        optimum=best_val,
        optimum_point=best_x,
        params={"dense_peaks": n_dense_region_peaks, "sparse_peaks": n_sparse_peaks},
    )


_STANDARD: dict[str, tuple] = {
    # name: (cost, grad, box, optimum point builder)
    "sphere": (sphere, sphere_grad, (-5.12, 5.12), lambda d: np.zeros(d)),
    "rastrigin": (rastrigin, rastrigin_grad, (-5.12, 5.12), lambda d: np.zeros(d)),
    "ackley": (ackley, ackley_grad, (-32.768, 32.768), lambda d: np.zeros(d)),
    "griewank": (griewank, griewank_grad, (-600.0, 600.0), lambda d: np.zeros(d)),
}


def standard_landscape(name: str, dims: int) -> LandscapeSpec:
    if name == "shekel":
        if dims != 4:
            raise ValueError("shekel is defined in 4 dimensions")
        return LandscapeSpec(
            "shekel", 4, Bounds.box(0.0, 10.0, 4),
            optimum=shekel(SHEKEL_XSTAR), optimum_point=SHEKEL_XSTAR.copy(),
        )
    if name == "penalized":
        x = np.full(dims, PENALTY_BAND[1])
        return LandscapeSpec(
            "penalized", dims, Bounds.box(0.8, 1.2, dims),
            penalty_weight=PENALTY_WEIGHT, optimum=penalized(x), optimum_point=x,
        )
    if name not in _STANDARD:
        raise KeyError(f"unknown benchmark {name!r}")
    f, _, (lo, hi), xstar = _STANDARD[name]
    x = xstar(dims)
    return LandscapeSpec(name, dims, Bounds.box(lo, hi, dims), optimum=f(x), optimum_point=x)


def _cost_and_grad(spec: LandscapeSpec) -> tuple[Callable, Optional[Callable]]:
    if spec.peaks is not None:
        arrays = _PeakArrays(spec.peaks)
        return arrays.cost, arrays.grad
    if spec.name == "shekel":
        return shekel, shekel_grad
    if spec.name == "penalized":
        w = PENALTY_WEIGHT if spec.penalty_weight is None else spec.penalty_weight
        return (lambda x: penalized(x, w)), None
    f, g, _, _ = _STANDARD[spec.name]
    return f, g


def eval_benchmark(spec: LandscapeSpec, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.dims,):
        raise ValueError(f"expected a point of dimension {spec.dims}")
    if not spec.bounds.contains(x):
        raise ValueError(f"point outside the {spec.name} domain")
    return _cost_and_grad(spec)[0](x)


def make_objective(spec: LandscapeSpec) -> Objective:
    f, g = _cost_and_grad(spec)
    return Objective(
        func=f,
        bounds=spec.bounds,
        grad=g,
        name=spec.name,
        optimum=spec.optimum,
        optimum_point=spec.optimum_point,
    )


# Three non-homogeneous instances used in experiments and acceptance checks.
GAUSSIAN_INSTANCES = {
    "gauss2d": dict(dims=2, n_dense_region_peaks=8, n_sparse_peaks=6, rng=11),
    "gauss5d_a": dict(dims=5, n_dense_region_peaks=10, n_sparse_peaks=8, rng=12),
    "gauss5d_b": dict(dims=5, n_dense_region_peaks=15, n_sparse_peaks=5, rng=13),
}

DEFAULT_DIMS = {
    "sphere": 5,
    "rastrigin": 5,
    "ackley": 5,
    "griewank": 5,
    "shekel": 4,
    "penalized": 5,
}


def landscape(name: str, dims: Optional[int] = None, **params) -> LandscapeSpec:
    """Resolve a benchmark name (plus optional generator parameters)."""
    if name in GAUSSIAN_INSTANCES and not params:
        kw = dict(GAUSSIAN_INSTANCES[name])
        return gaussian_landscape(name=name, **kw)
    if name == "gaussian" or name in GAUSSIAN_INSTANCES:
        return gaussian_landscape(
            dims=int(dims if dims is not None else params.get("dims", 2)),
            n_dense_region_peaks=int(params.get("dense_peaks", 5)),
            n_sparse_peaks=int(params.get("sparse_peaks", 5)),
            rng=int(params.get("seed", 0)),
            name=name,
        )
    return standard_landscape(name, int(dims if dims is not None else DEFAULT_DIMS[name]))


def benchmark_names() -> list[str]:
    return list(DEFAULT_DIMS) + list(GAUSSIAN_INSTANCES)
