"""Cluster scoring, the selection-flattening map, roulette selection and the
rule-based solution updates used inside a cluster."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from .core import Array, Bounds, Cluster, clamp

FITNESS_EPS = 1e-12
VOLUME_FLOOR = 1e-3
PROB_FLOOR = 1e-12
DEFAULT_LAMBDA = 18.0


class Metric(str, Enum):
    SUM_FITNESS_PER_VOLUME = "SumFitnessPerVolume"
    SUM_ELITE_FITNESS_PER_VOLUME = "SumEliteFitnessPerVolume"
    BEST_FITNESS_PER_VOLUME = "BestFitnessPerVolume"
    VAR_FITNESS_PER_VOLUME = "VarFitnessPerVolume"
    MEAN_ELITE_FITNESS = "MeanEliteFitness"
    SUBTRACT_FROM_NEAREST_FITNESS = "SubtractFromNearestFitness"


class Update(str, Enum):
    EITHER_RANDOMLY_OR_THROUGH_BEST = "EitherRandomlyOrThroughBest"
    MOVE_THROUGH_BEST = "MoveThroughBest"
    SELECT_2_SOLS_CHOOSE_ONE_BETWEEN = "Select2SolsChooseOneBetween"
    CLUSTER_MEAN = "ClusterMean"
    MEAN_OF_ELITES = "MeanOfElites"
    GET_WEIGHTED_MEAN_OF_SOLS = "GetWeightedMeanOfSols"
    GET_WEIGHTED_MEAN_OF_ELITES = "GetWeightedMeanOfElites"


PAIR_METHODS = frozenset(
    {
        Update.SELECT_2_SOLS_CHOOSE_ONE_BETWEEN,
        Update.GET_WEIGHTED_MEAN_OF_SOLS,
    }
)


@dataclass(frozen=True)
class EffectivenessMetric:
    tag: Metric
    elite_count: int = 3

    def __post_init__(self):
        object.__setattr__(self, "tag", Metric(self.tag))
        if self.elite_count < 1:
            raise ValueError("elite_count must be >= 1")


@dataclass(frozen=True)
class UpdateMethod:
    tag: Update
    p: float = 0.5
    elite_count: int = 3

    def __post_init__(self):
        object.__setattr__(self, "tag", Update(self.tag))
        if not 0.0 <= self.p <= 1.0:
            raise ValueError("p must lie in [0, 1]")
        if self.elite_count < 1:
            raise ValueError("elite_count must be >= 1")

    @property
    def min_members(self) -> int:
        return 2 if self.tag in PAIR_METHODS else 1


def fitness_of(costs) -> Array:
    """Map costs onto [0, 1] fitness: best -> ~1, worst -> 0."""
    c = np.asarray(costs, dtype=float)
    if c.size == 0:
        raise ValueError("fitness_of needs at least one cost")
    if not np.all(np.isfinite(c)):
        raise ValueError("costs must be finite")
    worst = c.max()
    return (worst - c) / (worst - c.min() + FITNESS_EPS)


def cluster_volume(cluster: Cluster, bounds: Bounds) -> float:
    """Bounding-box volume of the members in unit-box coordinates.

    Each extent is floored at 1e-3 so singleton clusters keep a positive
    volume.
    """
    if len(cluster) == 0:
        raise ValueError("volume of an empty cluster is undefined")
    pts = (cluster.points() - bounds.lower) / bounds.width
    extent = pts.max(axis=0) - pts.min(axis=0)
    return float(np.prod(np.maximum(extent, VOLUME_FLOOR)))


def _top(values: Array, count: int) -> Array:
    return np.sort(values)[::-1][:count]


def effectiveness_scores(
    clusters: Sequence[Cluster], metric: EffectivenessMetric, bounds: Bounds
) -> Array:
    """Score every cluster; fitness is taken over the union of all members."""
    if any(len(c) == 0 for c in clusters):
        raise ValueError("effectiveness of an empty cluster is undefined")
    metric = metric if isinstance(metric, EffectivenessMetric) else EffectivenessMetric(metric)
    sizes = [len(c) for c in clusters]
    fit_all = fitness_of(np.concatenate([c.costs() for c in clusters]))
    splits = np.split(fit_all, np.cumsum(sizes)[:-1])
    tag = metric.tag

    if tag is Metric.SUBTRACT_FROM_NEAREST_FITNESS:
        best = np.array([f.max() for f in splits])
        if len(clusters) == 1:
            return np.zeros(1)
        centers = np.array([c.center for c in clusters], dtype=float)
        d2 = ((centers[:, None, :] - centers[None, :, :]) ** 2).sum(axis=-1)
        np.fill_diagonal(d2, np.inf)
        raw = best - best[np.argmin(d2, axis=1)]
        return raw - raw.min()

    if tag is Metric.MEAN_ELITE_FITNESS:
        return np.array([_top(f, metric.elite_count).mean() for f in splits])

    scores = []
    for cluster, f in zip(clusters, splits):
        vol = cluster_volume(cluster, bounds)
        if tag is Metric.SUM_FITNESS_PER_VOLUME:
            s = f.sum()
        elif tag is Metric.SUM_ELITE_FITNESS_PER_VOLUME:
            s = _top(f, metric.elite_count).sum()
        elif tag is Metric.BEST_FITNESS_PER_VOLUME:
            s = f.max()
        else:
            s = f.var()
        scores.append(s / vol)
    return np.array(scores)


def effectiveness(
    cluster: Cluster,
    all_clusters: Sequence[Cluster],
    metric: EffectivenessMetric,
    bounds: Bounds,
) -> float:
    for i, c in enumerate(all_clusters):
        if c is cluster:
            return float(effectiveness_scores(all_clusters, metric, bounds)[i])
    raise ValueError("cluster is not a member of all_clusters")


def selection_distribution(scores) -> Array:
    """Shift scores to be non-negative, normalize, floor zeros, renormalize."""
    s = np.asarray(scores, dtype=float)
    if s.size == 0 or not np.all(np.isfinite(s)):
        raise ValueError("scores must be a non-empty finite vector")
    if s.min() < 0:
        s = s - s.min()
    total = s.sum()
    if total <= 0:
        return np.full(s.size, 1.0 / s.size)
    p = np.maximum(s / total, PROB_FLOOR)
    return p / p.sum()


def flatten_distribution(p, B: float, lam: float = DEFAULT_LAMBDA) -> Array:
    """``exp(log p / log(e + lam * B))`` renormalized; larger B is flatter."""
    p = np.asarray(p, dtype=float)
    if B < 0 or not math.isfinite(B):
        raise ValueError(f"B must be finite and non-negative, got {B}")
    if not np.all(np.isfinite(p)) or np.any(p <= 0) or np.any(p > 1):
        raise ValueError("p must hold finite probabilities in (0, 1]")
    if B == 0:
        return p.copy()
    f = np.exp(np.log(p) / math.log(math.e + lam * B))
    return f / f.sum()


def roulette_select(weights, rng: np.random.Generator) -> int:
    w = np.asarray(weights, dtype=float)
    if w.size == 0 or np.any(w < 0) or not np.all(np.isfinite(w)):
        raise ValueError("weights must be finite and non-negative")
    cum = np.cumsum(w)
    total = cum[-1]
    if total <= 0:
        raise ValueError("at least one weight must be positive")
    idx = int(np.searchsorted(cum, rng.random() * total, side="right"))
    return min(idx, w.size - 1)


def random_in_cluster(cluster: Cluster, bounds: Bounds, rng: np.random.Generator) -> Array:
    """Random point in the cluster's region.

    With two or more members: uniform in the member bounding box inflated by
    10% about its middle (zero extents floored at 1e-3 of the domain width).
    A singleton draws a Gaussian around the center with sigma = 5% of the
    domain width.
    """
    n = len(cluster)
    if n == 0:
        raise ValueError("cannot sample in an empty cluster")
    if n == 1:
        x = cluster.center + rng.standard_normal(bounds.dims) * (0.05 * bounds.width)
        return clamp(x, bounds)
    pts = cluster.points()
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    mid = 0.5 * (lo + hi)
    half = 0.55 * np.maximum(hi - lo, VOLUME_FLOOR * bounds.width)
    return clamp(mid - half + rng.random(bounds.dims) * (2.0 * half), bounds)


def _weighted_mean(points: Array, costs: Array) -> Array:
    f = fitness_of(costs)
    if f.sum() <= 0:
        return points.mean(axis=0)
    return (f[:, None] * points).sum(axis=0) / f.sum()


def propose_update(
    cluster: Cluster, method: UpdateMethod, rng: np.random.Generator, bounds: Bounds
) -> Array:
    """Rule-based proposal from the members of one cluster (clamped to the box).

    RNG use per method: MoveThroughBest draws a member index then u;
    EitherRandomlyOrThroughBest draws the p-gate first; the pair methods draw
    two distinct indices (then ``a`` for Select2Sols); mean methods draw
    nothing.
    """
    method = method if isinstance(method, UpdateMethod) else UpdateMethod(method)
    n = len(cluster)
    if n < method.min_members:
        raise ValueError(f"{method.tag.value} needs >= {method.min_members} members, got {n}")
    pts = cluster.points()
    costs = cluster.costs()
    if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(costs))):
        raise ValueError("cluster holds non-finite data")
    tag = method.tag

    if tag is Update.EITHER_RANDOMLY_OR_THROUGH_BEST:
        if rng.random() < method.p:
            return random_in_cluster(cluster, bounds, rng)
        tag = Update.MOVE_THROUGH_BEST

    if tag is Update.MOVE_THROUGH_BEST:
        start = pts[rng.integers(n)]
        best = pts[int(np.argmin(costs))]
        x = start + rng.random() * (best - start)
    elif tag is Update.SELECT_2_SOLS_CHOOSE_ONE_BETWEEN:
        i, j = rng.choice(n, size=2, replace=False)
        x = pts[j] + rng.random() * (pts[i] - pts[j])
    elif tag is Update.CLUSTER_MEAN:
        x = pts.mean(axis=0)
    elif tag is Update.MEAN_OF_ELITES:
        order = np.argsort(costs, kind="stable")[: method.elite_count]
        x = pts[order].mean(axis=0)
    elif tag is Update.GET_WEIGHTED_MEAN_OF_SOLS:
        i, j = rng.choice(n, size=2, replace=False)
        x = _weighted_mean(pts[[i, j]], costs[[i, j]])
    else:
        order = np.argsort(costs, kind="stable")[: method.elite_count]
        x = _weighted_mean(pts[order], costs[order])
    return clamp(x, bounds)
