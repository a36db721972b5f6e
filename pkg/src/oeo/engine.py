"""Observer-effect optimizer: main loop, A/B/G adaptation, pruning, and the
per-cluster-G (M-OEO) variant.

Random stream consumption per step is fixed:

1. ``u1`` decides new cluster (``u1 > A``) versus work inside a cluster.
2. New cluster: ``d`` uniforms for the point. Inside a cluster: one uniform
   for the roulette wheel, one uniform for the G gate (always drawn), the
   draws of the random placement or rule-based update, then one uniform for
   the A adaptation (always drawn).
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    Bounds,
    Cluster,
    Evaluator,
    Objective,
    RunResult,
    Solution,
    TraceRow,
    random_point,
    seeded_stream,
)
from .policies import (
    FITNESS_EPS,
    PROB_FLOOR,
    VOLUME_FLOOR,
    EffectivenessMetric,
    Metric,
    Update,
    UpdateMethod,
    flatten_distribution,
    propose_update,
    random_in_cluster,
    selection_distribution,
)

OEO = "OEO"
MOEO = "M-OEO"

# Update rule, cluster score, m1, m2 per mode.
PRESETS = {
    OEO: (Update.MEAN_OF_ELITES, Metric.MEAN_ELITE_FITNESS, 5.4, 3.9),
    MOEO: (Update.GET_WEIGHTED_MEAN_OF_SOLS, Metric.SUBTRACT_FROM_NEAREST_FITNESS, 7.4, 5.6),
}

NEW_CLUSTER = "new_cluster"
RANDOM_IN_CLUSTER = "random_in_cluster"
RULE_BASED = "rule_based"

# G is the probability of a rule-based update ("rule"), or, in the reading
# where a draw below G places randomly, the probability of random placement.
G_GATES = ("rule", "random")


@dataclass
class OeoConfig:
    mode: str = OEO
    n_clusters_init: int = 10
    a_start: float = 0.3
    b_start: float = 0.16
    g_start: float = 0.2
    m1: Optional[float] = None
    m2: Optional[float] = None
    step_scale: float = 0.01
    delta_a: float = 0.02
    delta_g: float = 0.02
    min_members_for_rule: int = 4
    prune_period: int = 4
    per_cluster_cap: int = 15
    population_cap: Optional[int] = 150
    update_method: Optional[str] = None
    effectiveness_metric: Optional[str] = None
    lam: float = 18.0
    max_evaluations: int = 5000
    elite_count: int = 3
    either_p: float = 0.5
    g_gate: str = "rule"
    a_range: tuple = (0.01, 0.99)
    b_range: tuple = (0.0, 10.0)
    g_range: tuple = (0.01, 0.99)

    def __post_init__(self):
        if self.mode not in PRESETS:
            raise ValueError(f"mode must be one of {sorted(PRESETS)}, got {self.mode!r}")
        update, metric, m1, m2 = PRESETS[self.mode]
        if self.m1 is None:
            self.m1 = m1
        if self.m2 is None:
            self.m2 = m2
        self.update_method = Update(self.update_method or update).value
        self.effectiveness_metric = Metric(self.effectiveness_metric or metric).value
        self.a_range = tuple(float(v) for v in self.a_range)
        self.b_range = tuple(float(v) for v in self.b_range)
        self.g_range = tuple(float(v) for v in self.g_range)
        if not self.m1 > self.m2:
            raise ValueError("m1 must exceed m2")
        for name in ("a_start", "b_start", "g_start"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.n_clusters_init < 1:
            raise ValueError("n_clusters_init must be >= 1")
        if self.max_evaluations < self.n_clusters_init:
            raise ValueError("max_evaluations must be >= n_clusters_init")
        if self.population_cap is not None and self.population_cap < 1:
            raise ValueError("population_cap must be >= 1")
        if self.per_cluster_cap < 1 or self.prune_period < 1:
            raise ValueError("per_cluster_cap and prune_period must be >= 1")
        if self.min_members_for_rule < UpdateMethod(self.update_method).min_members:
            raise ValueError("min_members_for_rule is below what the update rule needs")
        if self.g_gate not in G_GATES:
            raise ValueError(f"g_gate must be one of {G_GATES}")
        for lo, hi in (self.a_range, self.b_range, self.g_range):
            if not lo <= hi:
                raise ValueError("clamp intervals must satisfy lo <= hi")

    @property
    def per_cluster_g(self) -> bool:
        return self.mode == MOEO

    @property
    def method(self) -> UpdateMethod:
        return UpdateMethod(self.update_method, p=self.either_p, elite_count=self.elite_count)

    @property
    def metric(self) -> EffectivenessMetric:
        return EffectivenessMetric(self.effectiveness_metric, elite_count=self.elite_count)

    def snapshot(self) -> dict:
        d = asdict(self)
        d["a_range"], d["b_range"], d["g_range"] = (
            list(self.a_range),
            list(self.b_range),
            list(self.g_range),
        )
        return d


@dataclass
class IterationOutcome:
    branch: str
    cluster_index: Optional[int]
    improved_cluster_best: bool
    improved_global_best: bool


@dataclass
class ObserverState:
    A: float
    B: float
    G: Union[float, list]
    iteration: int = 0
    evaluations: int = 0
    best: Optional[Solution] = None

    @property
    def g_mean(self) -> float:
        return math.fsum(self.G) / len(self.G) if isinstance(self.G, list) else self.G


def _clip(v: float, bounds: tuple) -> float:
    return min(max(v, bounds[0]), bounds[1])


def adapt_A(A: float, outcome: IterationOutcome, config: OeoConfig, u: float) -> float:
    """Success raises A by ``delta_a``; failure lowers it by ``delta_a * u``."""
    if outcome.branch == NEW_CLUSTER:
        return A
    if outcome.improved_cluster_best:
        A = A + config.delta_a
    else:
        A = A - config.delta_a * u
    return _clip(A, config.a_range)


def adapt_B(B: float, outcome: IterationOutcome, config: OeoConfig) -> float:
    if outcome.branch == NEW_CLUSTER:
        return B
    if outcome.improved_cluster_best:
        B = B + config.m1 * config.step_scale
    else:
        B = B - config.m2 * config.step_scale
    return _clip(B, config.b_range)


def adapt_G(G: float, outcome: IterationOutcome, config: OeoConfig) -> float:
    """Lower G when a rule failed or a random placement succeeded."""
    if outcome.branch == NEW_CLUSTER:
        return G
    rule_failed = outcome.branch == RULE_BASED and not outcome.improved_cluster_best
    random_won = outcome.branch == RANDOM_IN_CLUSTER and outcome.improved_cluster_best
    if rule_failed or random_won:
        G = G - config.delta_g
    else:
        G = G + config.delta_g
    return _clip(G, config.g_range)


def _trim(cluster: Cluster, cap: int, best: Optional[Solution]) -> Cluster:
    if len(cluster) <= cap:
        return cluster
    ranked = sorted(cluster.members, key=lambda s: s.cost)
    keep = ranked[:cap]
    if best is not None and any(s is best for s in ranked[cap:]):
        keep[-1] = best
    return Cluster(cluster.center, keep, cluster.local_g)


def _population_keep(clusters: Sequence[Cluster], best: Optional[Solution], cap: int) -> set:
    """ids of the ``cap`` lowest-cost solutions over all clusters (best kept)."""
    members = [m for c in clusters for m in c.members]
    if len(members) <= cap:
        return {id(m) for m in members}
    order = np.argsort([m.cost for m in members], kind="stable")
    keep = [members[i] for i in order[:cap]]
    if best is not None and not any(m is best for m in keep):
        keep[-1] = best
    return {id(m) for m in keep}


def prune(
    clusters: Sequence[Cluster],
    best: Optional[Solution],
    cap: int,
    population_cap: Optional[int] = None,
) -> list[Cluster]:
    """Cut every cluster down to its ``cap`` lowest-cost members, then the
    whole population down to ``population_cap``, and drop empty clusters.

    The global best is never removed and at least one cluster survives.
    """
    trimmed = [_trim(c, cap, best) for c in clusters]
    if population_cap is not None:
        keep = _population_keep(trimmed, best, population_cap)
        trimmed = [
            Cluster(c.center, [m for m in c.members if id(m) in keep], c.local_g)
            if any(id(m) not in keep for m in c.members)
            else c
            for c in trimmed
        ]
    alive = [c for c in trimmed if len(c) > 0]
    if not alive and trimmed:
        holder = next(
            (c for c in clusters if best is not None and any(s is best for s in c.members)),
            clusters[0],
        )
        alive = [holder]
    return alive


_SCALARS = ("n", "sum", "m2", "min", "max", "elite_sum", "elite_cnt", "nn_d2")
_VECTORS = ("lo", "hi", "centers")


class _Scores:
    """Per-cluster running statistics so each step scores all clusters in
    vectorized form. Agrees with :func:`policies.effectiveness_scores`."""

    def __init__(self, bounds: Bounds, metric: EffectivenessMetric, capacity: int = 64):
        self.bounds = bounds
        self.metric = metric
        self.k = 0
        for name in _SCALARS:
            setattr(self, name, np.zeros(capacity))
        for name in _VECTORS:
            setattr(self, name, np.zeros((capacity, bounds.dims)))
        self.nn = np.zeros(capacity, dtype=int)
        self.elites: list[list[float]] = []

    def _arrays(self):
        return _SCALARS + _VECTORS + ("nn",)

    def _grow(self):
        cap = 2 * self.nn.size
        for name in self._arrays():
            arr = getattr(self, name)
            new = np.zeros((cap,) + arr.shape[1:], dtype=arr.dtype)
            new[: arr.shape[0]] = arr
            setattr(self, name, new)

    def _unit(self, x):
        return (x - self.bounds.lower) / self.bounds.width

    def add_cluster(self, cluster: Cluster):
        if self.k == self.nn.size:
            self._grow()
        j = self.k
        self.k += 1
        self.elites.append([])
        centers, nn_d2 = self.centers, self.nn_d2
        centers[j] = cluster.center
        nn_d2[j] = np.inf
        if j > 0:
            d2 = ((centers[:j] - cluster.center) ** 2).sum(axis=1)
            self.nn[j] = nearest = int(d2.argmin())
            nn_d2[j] = d2[nearest]
            closer = d2 < nn_d2[:j]
            self.nn[:j][closer] = j
            nn_d2[:j][closer] = d2[closer]
        if len(cluster) == 1:
            c = cluster.members[0].cost
            self.n[j], self.sum[j], self.m2[j] = 1, c, 0.0
            self.min[j] = self.max[j] = self.elite_sum[j] = c
            self.elite_cnt[j] = 1
            self.elites[j] = [c]
            self.lo[j] = self.hi[j] = self._unit(cluster.members[0].point)
        else:
            self.reset(j, cluster)

    def remove(self, dead: np.ndarray):
        """Drop clusters flagged in the boolean mask ``dead`` (length k)."""
        k = self.k
        alive = np.flatnonzero(~dead)
        remap = np.full(k, -1)
        remap[alive] = np.arange(alive.size)
        lost = dead[self.nn[:k]][alive]
        nn = remap[self.nn[:k][alive]]
        for name in _SCALARS + _VECTORS:
            arr = getattr(self, name)
            arr[: alive.size] = arr[alive]
        self.nn[: alive.size] = nn
        self.elites = [self.elites[i] for i in alive]
        self.k = alive.size
        centers = self.centers[: self.k]
        for j in np.flatnonzero(lost):
            d2 = ((centers - centers[j]) ** 2).sum(axis=1)
            d2[j] = np.inf
            self.nn[j] = nearest = int(d2.argmin())
            self.nn_d2[j] = d2[nearest]

    def reset(self, j: int, cluster: Cluster):
        costs = cluster.costs()
        pts = self._unit(cluster.points())
        self.n[j] = costs.size
        self.sum[j] = costs.sum()
        self.m2[j] = ((costs - costs.mean()) ** 2).sum()
        self.min[j] = costs.min()
        self.max[j] = costs.max()
        self.elites[j] = el = sorted(costs.tolist())[: self.metric.elite_count]
        self.elite_sum[j] = math.fsum(el)
        self.elite_cnt[j] = len(el)
        self.lo[j] = pts.min(axis=0)
        self.hi[j] = pts.max(axis=0)

    def add_member(self, j: int, sol: Solution):
        c = sol.cost
        old_mean = self.sum[j] / self.n[j]
        self.n[j] += 1
        self.sum[j] += c
        # Welford update of the sum of squared deviations
        self.m2[j] += (c - old_mean) * (c - self.sum[j] / self.n[j])
        if c < self.min[j]:
            self.min[j] = c
        if c > self.max[j]:
            self.max[j] = c
        el = self.elites[j]
        if len(el) < self.metric.elite_count or c < el[-1]:
            el.append(c)
            el.sort()
            del el[self.metric.elite_count :]
            self.elite_sum[j] = math.fsum(el)
            self.elite_cnt[j] = len(el)
        u = self._unit(sol.point)
        np.minimum(self.lo[j], u, out=self.lo[j])
        np.maximum(self.hi[j], u, out=self.hi[j])

    def scores(self) -> np.ndarray:
        k = self.k
        mn = self.min[:k]
        mx = self.max[:k].max()
        spread = mx - mn.min() + FITNESS_EPS
        tag = self.metric.tag
        if tag is Metric.SUBTRACT_FROM_NEAREST_FITNESS:
            if k == 1:
                return np.zeros(1)
            raw = (mn[self.nn[:k]] - mn) / spread
            return raw - raw.min()
        if tag is Metric.MEAN_ELITE_FITNESS:
            return (mx - self.elite_sum[:k] / self.elite_cnt[:k]) / spread
        vol = np.prod(np.maximum(self.hi[:k] - self.lo[:k], VOLUME_FLOOR), axis=1)
        n = self.n[:k]
        if tag is Metric.SUM_FITNESS_PER_VOLUME:
            s = (n * mx - self.sum[:k]) / spread
        elif tag is Metric.SUM_ELITE_FITNESS_PER_VOLUME:
            s = (self.elite_cnt[:k] * mx - self.elite_sum[:k]) / spread
        elif tag is Metric.BEST_FITNESS_PER_VOLUME:
            s = (mx - mn) / spread
        else:
            s = self.m2[:k] / n / spread**2
        return s / vol


class ObserverEffectOptimizer:
    """Stateful optimizer; ``init`` once, then ``step`` one evaluation at a time."""

    def __init__(self, config: OeoConfig, objective: Objective, rng: np.random.Generator):
        self.config = config
        self.objective = objective
        self.bounds = objective.bounds
        self.rng = rng
        self.evaluator = Evaluator(objective)
        self.clusters: list[Cluster] = []
        self.state: Optional[ObserverState] = None
        self.trace: list[TraceRow] = []
        self._method = config.method
        self._stats = _Scores(self.bounds, config.metric)
        self._touched: set[int] = set()

    @property
    def evaluations(self) -> int:
        return self.evaluator.evaluations

    @property
    def best(self) -> Optional[Solution]:
        return self.evaluator.best

    def init(self) -> ObserverState:
        cfg = self.config
        g0 = [cfg.g_start] * cfg.n_clusters_init if cfg.per_cluster_g else cfg.g_start
        self.state = ObserverState(cfg.a_start, cfg.b_start, g0)
        for _ in range(cfg.n_clusters_init):
            self._new_cluster(random_point(self.bounds, self.rng), 0)
        self._sync_state()
        self._record()
        return self.state

    def _new_cluster(self, x, iteration: int) -> Solution:
        sol = self.evaluator(x, iteration)
        g = self.config.g_start if self.config.per_cluster_g else None
        cluster = Cluster(sol.point, [sol], g)
        self.clusters.append(cluster)
        self._stats.add_cluster(cluster)
        return sol

    def _sync_state(self):
        st = self.state
        st.evaluations = self.evaluator.evaluations
        st.best = self.evaluator.best
        if self.config.per_cluster_g:
            st.G = [c.local_g for c in self.clusters]

    def _record(self):
        st = self.state
        self.trace.append(
            TraceRow(
                st.iteration,
                st.evaluations,
                st.best.cost,
                st.A,
                st.B,
                st.g_mean,
                len(self.clusters),
            )
        )

    def selection_weights(self) -> np.ndarray:
        p = selection_distribution(self._stats.scores())
        return flatten_distribution(p, self.state.B, self.config.lam)

    def _select(self) -> int:
        """Roulette draw on :meth:`selection_weights` without the argument
        checks (identical arithmetic, one uniform consumed)."""
        s = self._stats.scores()
        lo = s.min()
        if lo < 0:
            s = s - lo
        total = s.sum()
        if total <= 0:
            p = np.full(s.size, 1.0 / s.size)
        else:
            p = np.maximum(s / total, PROB_FLOOR)
            p /= p.sum()
        B = self.state.B
        if B != 0:
            p = np.exp(np.log(p) / math.log(math.e + self.config.lam * B))
            p /= p.sum()
        cum = np.cumsum(p)
        idx = int(np.searchsorted(cum, self.rng.random() * cum[-1], side="right"))
        return min(idx, s.size - 1)

    def step(self) -> IterationOutcome:
        cfg, rng, st = self.config, self.rng, self.state
        st.iteration += 1
        prev_best = self.evaluator.best.cost

        if rng.random() > st.A:
            sol = self._new_cluster(random_point(self.bounds, rng), st.iteration)
            outcome = IterationOutcome(
                NEW_CLUSTER, len(self.clusters) - 1, False, sol.cost < prev_best
            )
        else:
            j = self._select()
            cluster = self.clusters[j]
            g = cluster.local_g if cfg.per_cluster_g else st.G
            gate = rng.random() < g
            rule = gate if cfg.g_gate == "rule" else not gate
            if len(cluster) < cfg.min_members_for_rule or not rule:
                branch = RANDOM_IN_CLUSTER
                x = random_in_cluster(cluster, self.bounds, rng)
            else:
                branch = RULE_BASED
                x = propose_update(cluster, self._method, rng, self.bounds)
            cluster_best = self._stats.min[j]
            sol = self.evaluator(x, st.iteration)
            cluster.members.append(sol)
            self._stats.add_member(j, sol)
            self._touched.add(j)
            outcome = IterationOutcome(branch, j, sol.cost < cluster_best, sol.cost < prev_best)

            if cfg.per_cluster_g:
                cluster.local_g = adapt_G(cluster.local_g, outcome, cfg)
            else:
                st.G = adapt_G(st.G, outcome, cfg)
            st.A = adapt_A(st.A, outcome, cfg, rng.random())
            st.B = adapt_B(st.B, outcome, cfg)

        if st.iteration % cfg.prune_period == 0:
            self._prune()
        self._sync_state()
        self._record()
        return outcome

    def _prune(self):
        cfg, best = self.config, self.evaluator.best
        for j in sorted(self._touched):
            if len(self.clusters[j]) > cfg.per_cluster_cap:
                self.clusters[j] = _trim(self.clusters[j], cfg.per_cluster_cap, best)
                self._stats.reset(j, self.clusters[j])
        self._touched.clear()
        if cfg.population_cap is None:
            return
        excess = int(self._stats.n[: self._stats.k].sum()) - cfg.population_cap
        if excess <= 0:
            return
        # at most prune_period members arrived since the last prune, so drop
        # the worst ones one at a time using the tracked per-cluster maxima
        dead = np.zeros(len(self.clusters), dtype=bool)
        worst = np.where(dead, -np.inf, self._stats.max[: len(dead)])
        for _ in range(excess):
            j = int(np.argmax(worst))
            c = self.clusters[j]
            i = max(range(len(c.members)), key=lambda t: c.members[t].cost)
            if c.members[i] is best:
                break
            del c.members[i]
            if c.members:
                self._stats.reset(j, c)
                worst[j] = self._stats.max[j]
            else:
                dead[j] = True
                worst[j] = -np.inf
        if dead.any():
            self.clusters = [c for c, d in zip(self.clusters, dead) if not d]
            self._stats.remove(dead)

    def run(self) -> list[TraceRow]:
        if self.state is None:
            self.init()
        while self.evaluations < self.config.max_evaluations:
            self.step()
        return self.trace


def run(
    config: OeoConfig,
    objective: Objective,
    rng: Union[int, np.random.Generator],
) -> RunResult:
    seed = rng if isinstance(rng, (int, np.integer)) else None
    stream = seeded_stream(seed) if seed is not None else rng
    opt = ObserverEffectOptimizer(config, objective, stream)
    opt.run()
    return RunResult(
        best=opt.best,
        trace=opt.trace,
        seed=seed,
        config=config.snapshot(),
        algorithm=config.mode,
    )


def preset(mode: str, **overrides) -> OeoConfig:
    """Table-tuned configuration for ``OEO`` or ``M-OEO`` with overrides."""
    return OeoConfig(mode=mode, **overrides)
