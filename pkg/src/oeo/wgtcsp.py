"""Weighted CSP objective over per-trial covariances, its gradient in the
trial weights, and the hybrid driver that alternates Adam descent on the
weights with global re-initialization by a population optimizer.

Cost convention: the quotient is negated so that lower is better.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .core import (
    Array,
    Bounds,
    Objective,
    RunResult,
    Solution,
    TraceRow,
    random_point,
    seeded_stream,
)
from .numerics import AdamState, adam_step, gev_power, is_spd, random_spd, sanitize_gradient

WEIGHT_FLOOR = 1e-6
DENOM_FLOOR = 1e-12
FORMAT_TAG = "wgtcsp v1"

PROPOSERS = ("OEO", "M-OEO", "PSO", "Bat", "random")
ACCEPT_RULES = ("improve", "always")


@dataclass(frozen=True)
class TrialSet:
    """Per-trial covariance matrices for two classes, shape ``(n, N, N)``."""

    sigmas_class1: Array
    sigmas_class2: Array
    min_trials: int = 2

    def __post_init__(self):
        s1 = np.array(self.sigmas_class1, dtype=float)
        s2 = np.array(self.sigmas_class2, dtype=float)
        if s1.ndim != 3 or s1.shape != s2.shape or s1.shape[1] != s1.shape[2]:
            raise ValueError("expected two stacks of equal shape (n, N, N)")
        if s1.shape[0] < self.min_trials:
            raise ValueError(f"need at least {self.min_trials} trials, got {s1.shape[0]}")
        for m in (*s1, *s2):
            if not is_spd(m):
                raise ValueError("every covariance must be symmetric positive definite")
        s1.flags.writeable = False
        s2.flags.writeable = False
        object.__setattr__(self, "sigmas_class1", s1)
        object.__setattr__(self, "sigmas_class2", s2)
        object.__setattr__(self, "_pooled", s1 + s2)

    @property
    def n(self) -> int:
        return self.sigmas_class1.shape[0]

    @property
    def N(self) -> int:
        return self.sigmas_class1.shape[1]

    def target(self, target_class: int) -> Array:
        if target_class == 1:
            return self.sigmas_class1
        if target_class == 2:
            return self.sigmas_class2
        raise ValueError("target_class must be 1 or 2")

    @property
    def pooled(self) -> Array:
        return self._pooled

    def pencil(self, a, b, target_class: int = 1) -> tuple[Array, Array]:
        """Weighted numerator and denominator matrices."""
        num = np.tensordot(np.asarray(a, dtype=float), self.target(target_class), axes=1)
        den = np.tensordot(np.asarray(b, dtype=float), self.pooled, axes=1)
        return num, den


def synthetic_trialset(
    n: int,
    N: int,
    rng: np.random.Generator,
    noise: float = 0.3,
    outlier: Optional[int] = None,
    outlier_scale: float = 100.0,
    condition_cap: float = 100.0,
) -> TrialSet:
    """Per-class base SPD matrix plus independent SPD noise per trial.

    The ``outlier`` trial (if any) gets its noise scaled by ``outlier_scale``
    in both classes.
    """
    if outlier is not None and not 0 <= outlier < n:
        raise ValueError("outlier index out of range")
    base1 = random_spd(N, rng, condition_cap)
    base2 = random_spd(N, rng, condition_cap)
    s1, s2 = [], []
    for i in range(n):
        scale = noise * (outlier_scale if i == outlier else 1.0)
        s1.append(base1 + scale * random_spd(N, rng, condition_cap))
        s2.append(base2 + scale * random_spd(N, rng, condition_cap))
    return TrialSet(np.array(s1), np.array(s2))


def planted_outlier_set(seed: int = 0, n: int = 10, N: int = 4, outlier: int = 0) -> TrialSet:
    return synthetic_trialset(n, N, seeded_stream(seed), outlier=outlier)


def dump_trialset(data: TrialSet) -> str:
    lines = [f"{FORMAT_TAG} {data.n} {data.N}"]
    for stack in (data.sigmas_class1, data.sigmas_class2):
        for m in stack:
            lines.extend(" ".join(repr(float(v)) for v in row) for row in m)
    return "\n".join(lines) + "\n"


def load_trialset(text: str, min_trials: int = 2) -> TrialSet:
    head, _, body = text.partition("\n")
    parts = head.split()
    if len(parts) != 4 or " ".join(parts[:2]) != FORMAT_TAG:
        raise ValueError(f"expected header '{FORMAT_TAG} n N', got {head!r}")
    n, N = int(parts[2]), int(parts[3])
    values = np.array(body.split(), dtype=float)
    if values.size != 2 * n * N * N:
        raise ValueError(f"expected {2 * n * N * N} numbers, found {values.size}")
    stacks = values.reshape(2, n, N, N)
    return TrialSet(stacks[0], stacks[1], min_trials=min_trials)


def write_trialset(data: TrialSet, path: Union[str, Path]) -> None:
    Path(path).write_text(dump_trialset(data))


def read_trialset(path: Union[str, Path]) -> TrialSet:
    return load_trialset(Path(path).read_text())


@dataclass
class WgtcspPoint:
    a: Array
    b: Array
    w: Array

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        if self.a.shape != self.b.shape or self.a.ndim != 1:
            raise ValueError("a and b must be vectors of equal length")
        if not np.any(self.w):
            raise ValueError("w must be nonzero")


def project_weights(v) -> Array:
    """Clip to [1e-6, 1] and rescale to unit sum.

    Entries sitting at the floor stay there while the others are rescaled,
    so the result honours the floor exactly (a plain division would push
    floored entries just below it).
    """
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("weights must be finite")
    if v.ndim != 1 or v.size == 0 or v.size * WEIGHT_FLOOR > 1.0:
        raise ValueError("weights must be a non-empty vector that fits above the floor")
    c = np.clip(v, WEIGHT_FLOOR, 1.0)
    pinned = c <= WEIGHT_FLOOR
    for _ in range(v.size):
        free = ~pinned
        if not free.any():
            break
        c[free] *= (1.0 - WEIGHT_FLOOR * pinned.sum()) / c[free].sum()
        newly = free & (c < WEIGHT_FLOOR)
        if not newly.any():
            break
        c[newly] = WEIGHT_FLOOR
        pinned |= newly
    if not free.any():
        return np.full(v.size, 1.0 / v.size)
    return c


def _check(pt: WgtcspPoint, data: TrialSet):
    if pt.a.size != data.n or pt.w.size != data.N:
        raise ValueError(f"point shape does not match a TrialSet with n={data.n}, N={data.N}")


def _quadratics(pt: WgtcspPoint, data: TrialSet, target_class: int):
    w = pt.w
    q = np.einsum("j,ijk,k->i", w, data.target(target_class), w)
    r = np.einsum("j,ijk,k->i", w, data.pooled, w)
    num, den = float(pt.a @ q), float(pt.b @ r)
    if den < DENOM_FLOOR:
        raise ValueError(f"denominator {den} is below {DENOM_FLOOR}")
    return q, r, num, den


def wgtcsp_cost(pt: WgtcspPoint, data: TrialSet, target_class: int = 1) -> float:
    _check(pt, data)
    _, _, num, den = _quadratics(pt, data, target_class)
    return -num / den


def wgtcsp_grad(pt: WgtcspPoint, data: TrialSet, target_class: int = 1) -> tuple[Array, Array]:
    """Gradient of the (negated) cost in ``a`` and in ``b`` at fixed ``w``."""
    _check(pt, data)
    q, r, num, den = _quadratics(pt, data, target_class)
    return -q / den, num * r / den**2


def best_filter(a, b, data: TrialSet, target_class: int = 1, iters: int = 7) -> Array:
    """Top generalized eigenvector of the weighted pencil (minimizes the cost)."""
    num, den = data.pencil(a, b, target_class)
    w, _ = gev_power(num, den, k=1, iters=iters)
    return w[:, 0]


def weights_objective(data: TrialSet, target_class: int = 1, gev_iters: int = 7) -> Objective:
    """Box objective over raw ``(a, b)`` in [1e-6, 1]^(2n): project both
    halves, fit ``w`` and return the cost."""
    n = data.n

    def func(x):
        a, b = project_weights(x[:n]), project_weights(x[n:])
        w = best_filter(a, b, data, target_class, gev_iters)
        return wgtcsp_cost(WgtcspPoint(a, b, w), data, target_class)

    return Objective(func, Bounds.box(WEIGHT_FLOOR, 1.0, 2 * n), name="wgtcsp")


@dataclass
class HybridConfig:
    proposer: str = "OEO"
    max_evaluations: int = 3000
    gd_steps: int = 6
    reinit_period: int = 6
    proposal_evaluations: int = 60
    accept: str = "improve"
    gev_iters: int = 7
    gamma: float = 1e-10
    max_outer: Optional[int] = None
    restart_on_stall: bool = True
    learning_rate: float = 0.2
    momentum1: float = 0.9
    momentum2: float = 0.9
    epsilon: float = 1e-8
    target_class: int = 1
    proposer_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.proposer not in PROPOSERS:
            raise ValueError(f"proposer must be one of {PROPOSERS}")
        if self.accept not in ACCEPT_RULES:
            raise ValueError(f"accept must be one of {ACCEPT_RULES}")
        if self.gd_steps < 1 or self.reinit_period < 1 or self.gev_iters < 1:
            raise ValueError("gd_steps, reinit_period and gev_iters must be >= 1")
        if self.proposal_evaluations < 1:
            raise ValueError("proposal_evaluations must be >= 1")
        if self.max_evaluations < self.proposal_evaluations + 1:
            raise ValueError("max_evaluations must cover the first proposal")
        if self.target_class not in (1, 2):
            raise ValueError("target_class must be 1 or 2")

    def adam(self, size: int) -> AdamState:
        return AdamState.zeros(
            size,
            learning_rate=self.learning_rate,
            momentum1=self.momentum1,
            momentum2=self.momentum2,
            epsilon=self.epsilon,
        )


@dataclass
class HybridResult(RunResult):
    a: Optional[Array] = None
    b: Optional[Array] = None
    w: Optional[Array] = None
    outer_iterations: int = 0
    proposals_accepted: int = 0


def plain_gd_config(**overrides) -> HybridConfig:
    """Adam with uniform random restarts: one random point per re-init, always taken."""
    base = dict(proposer="random", proposal_evaluations=1, accept="always")
    base.update(overrides)
    return HybridConfig(**base)


def _propose(cfg: HybridConfig, objective: Objective, budget: int, rng) -> tuple[Array, float, int]:
    """Run the configured population optimizer for ``budget`` evaluations and
    return its best raw point, cost and evaluations used."""
    from .baselines import BatConfig, PsoConfig, bat_run, pso_run
    from .engine import OeoConfig
    from .engine import run as oeo_run

    opts = dict(cfg.proposer_options)
    if cfg.proposer == "random":
        x = random_point(objective.bounds, rng)
        return x, objective(x), 1
    if cfg.proposer in ("OEO", "M-OEO"):
        opts.setdefault("n_clusters_init", min(10, budget))
        res = oeo_run(OeoConfig(mode=cfg.proposer, max_evaluations=budget, **opts), objective, rng)
    elif cfg.proposer == "PSO":
        opts.setdefault("swarm_size", max(2, min(30, budget // 2)))
        res = pso_run(PsoConfig(max_evaluations=budget, **opts), objective, rng)
    else:
        opts.setdefault("population", max(1, min(30, budget // 2)))
        res = bat_run(BatConfig(max_evaluations=budget, **opts), objective, rng)
    return res.best.point, res.best.cost, res.evaluations


def oeo_gd_run(
    config: HybridConfig,
    data: TrialSet,
    rng: Union[int, np.random.Generator],
    init: Optional[tuple[Sequence[float], Sequence[float]]] = None,
) -> HybridResult:
    """Alternate Adam descent on ``(a, b)`` with global re-initialization.

    One outer round is ``gd_steps`` Adam updates at fixed ``w`` followed by a
    ``w`` refresh. A proposal is requested before the first round (unless
    ``init`` is given), every ``reinit_period`` rounds, and, with
    ``restart_on_stall``, whenever the change in ``a`` falls below ``gamma``.
    Without ``restart_on_stall`` the stall ends the run. Every gradient step
    and every ``w`` refresh counts as one evaluation; proposals count what
    the proposer spent.
    """
    seed = rng if isinstance(rng, (int, np.integer)) else None
    stream = seeded_stream(seed) if seed is not None else rng
    cfg, n, tc = config, data.n, config.target_class
    objective = weights_objective(data, tc, cfg.gev_iters)
    evals = 0
    trace: list[TraceRow] = []
    best: Optional[tuple[float, Array, Array, Array]] = None
    accepted = 0

    def fit(a, b):
        return best_filter(a, b, data, tc, cfg.gev_iters)

    def consider(a, b, w, cost):
        nonlocal best
        if best is None or cost < best[0]:
            best = (cost, a.copy(), b.copy(), w.copy())

    if init is not None:
        a, b = project_weights(init[0]), project_weights(init[1])
        w = fit(a, b)
        cost = wgtcsp_cost(WgtcspPoint(a, b, w), data, tc)
        evals += 1
        need_proposal = False
    else:
        a = b = w = None
        cost = math.inf
        need_proposal = True
    if init is not None:
        consider(a, b, w, cost)
        trace.append(TraceRow(0, evals, best[0]))

    outer = 0
    adam = cfg.adam(2 * n)
    while evals < cfg.max_evaluations:
        if cfg.max_outer is not None and outer >= cfg.max_outer:
            break
        if need_proposal:
            budget = min(cfg.proposal_evaluations, cfg.max_evaluations - evals)
            x, px_cost, used = _propose(cfg, objective, budget, stream)
            evals += used
            if cfg.accept == "always" or px_cost < cost:
                a, b = project_weights(x[:n]), project_weights(x[n:])
                w = fit(a, b)
                cost = px_cost
                adam = cfg.adam(2 * n)
                accepted += 1
                consider(a, b, w, cost)
            need_proposal = False
            if outer == 0 and not trace:
                trace.append(TraceRow(0, evals, best[0]))
            continue

        outer += 1
        prev_a = a.copy()
        params = np.concatenate([a, b])
        for _ in range(cfg.gd_steps):
            if evals >= cfg.max_evaluations:
                break
            pt = WgtcspPoint(params[:n], params[n:], w)
            ga, gb = wgtcsp_grad(pt, data, tc)
            consider(pt.a, pt.b, w, wgtcsp_cost(pt, data, tc))
            evals += 1
            params, adam = adam_step(params, sanitize_gradient(np.concatenate([ga, gb])), adam)
            params = np.concatenate([project_weights(params[:n]), project_weights(params[n:])])
        a, b = params[:n], params[n:]
        if evals < cfg.max_evaluations:
            w = fit(a, b)
            cost = wgtcsp_cost(WgtcspPoint(a, b, w), data, tc)
            evals += 1
            consider(a, b, w, cost)
        else:
            cost = wgtcsp_cost(WgtcspPoint(a, b, w), data, tc)
        trace.append(TraceRow(outer, evals, best[0]))

        stalled = float(np.abs(a - prev_a).sum()) < cfg.gamma
        if stalled and not cfg.restart_on_stall:
            break
        if stalled or outer % cfg.reinit_period == 0:
            need_proposal = True

    cost_best, a_best, b_best, w_best = best
    return HybridResult(
        best=Solution(np.concatenate([a_best, b_best]), cost_best, outer),
        trace=trace,
        seed=seed,
        config=asdict(cfg),
        algorithm=f"{cfg.proposer}-GD" if cfg.proposer != "random" else "GD",
        a=a_best,
        b=b_best,
        w=w_best,
        outer_iterations=outer,
        proposals_accepted=accepted,
    )
