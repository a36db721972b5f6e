"""Comparison optimizers: global-best PSO, the Bat algorithm, random search.

All three evaluate one candidate per ``step`` so budgets are exact and the
traces line up row-for-row with the observer-effect engine.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, fields
from importlib import resources
from typing import Optional, Union

import numpy as np

from .core import (
    Evaluator,
    Objective,
    RunResult,
    Solution,
    TraceRow,
    clamp,
    random_point,
    seeded_stream,
)


@dataclass
class PsoConfig:
    swarm_size: int = 30
    inertia: float = 0.729
    c1: float = 1.49445
    c2: float = 1.49445
    max_evaluations: int = 5000
    velocity_fraction: float = 0.2
    reinit_period: Optional[int] = None

    def __post_init__(self):
        if self.swarm_size < 2:
            raise ValueError("swarm_size must be >= 2")
        if self.max_evaluations < self.swarm_size:
            raise ValueError("max_evaluations must cover the initial swarm")


@dataclass
class BatConfig:
    population: int = 30
    freq_min: float = 0.0
    freq_max: float = 2.0
    loudness0: float = 0.5
    pulse_rate0: float = 0.5
    alpha: float = 0.9
    gamma_decay: float = 0.9
    max_evaluations: int = 5000
    walk_scale: float = 0.1

    def __post_init__(self):
        if not self.freq_min < self.freq_max:
            raise ValueError("freq_min must be below freq_max")
        if self.population < 1:
            raise ValueError("population must be >= 1")
        if self.max_evaluations < self.population:
            raise ValueError("max_evaluations must cover the initial population")


def _coerce(cls, section: dict) -> dict:
    types = {f.name: f.type for f in fields(cls)}
    out = {}
    for key, raw in section.items():
        if key not in types:
            raise ValueError(f"unknown {cls.__name__} key {key!r}")
        t = str(types[key])
        if raw in ("", "none", "None"):
            out[key] = None
        elif "int" in t:
            out[key] = int(raw)
        else:
            out[key] = float(raw)
    return out


def frozen_defaults() -> dict:
    """Baseline settings shipped in ``configs/baselines.ini``."""
    parser = configparser.ConfigParser()
    parser.read_string(resources.files("oeo").joinpath("configs/baselines.ini").read_text())
    return {
        "pso": PsoConfig(**_coerce(PsoConfig, dict(parser["pso"]))),
        "bat": BatConfig(**_coerce(BatConfig, dict(parser["bat"]))),
    }


class _Stepper:
    """Shared init/step/trace plumbing."""

    name = ""

    def __init__(self, objective: Objective, rng: np.random.Generator, max_evaluations: int):
        self.objective = objective
        self.bounds = objective.bounds
        self.rng = rng
        self.max_evaluations = max_evaluations
        self.evaluator = Evaluator(objective)
        self.iteration = 0
        self.trace: list[TraceRow] = []
        self.started = False

    @property
    def evaluations(self) -> int:
        return self.evaluator.evaluations

    @property
    def best(self) -> Solution:
        return self.evaluator.best

    def _record(self):
        self.trace.append(TraceRow(self.iteration, self.evaluations, self.best.cost))

    def init(self):
        self.started = True
        self._init()
        self._record()

    def step(self):
        self.iteration += 1
        self._step()
        self._record()

    def run(self) -> list[TraceRow]:
        if not self.started:
            self.init()
        while self.evaluations < self.max_evaluations:
            self.step()
        return self.trace


class RandomSearch(_Stepper):
    name = "random"

    def _init(self):
        self.evaluator(random_point(self.bounds, self.rng), 0)

    def _step(self):
        self.evaluator(random_point(self.bounds, self.rng), self.iteration)


class ParticleSwarm(_Stepper):
    """Global-best PSO with velocity clamping, updated one particle per step
    (the global best is refreshed after every particle)."""

    name = "PSO"

    def __init__(self, config: PsoConfig, objective: Objective, rng: np.random.Generator):
        super().__init__(objective, rng, config.max_evaluations)
        self.config = config
        self.vmax = config.velocity_fraction * self.bounds.width
        self._next = 0

    def _init(self):
        n, d = self.config.swarm_size, self.bounds.dims
        self.x = np.array([random_point(self.bounds, self.rng) for _ in range(n)])
        self.v = (2.0 * self.rng.random((n, d)) - 1.0) * self.vmax
        self.pbest = self.x.copy()
        self.pbest_cost = np.array([self.evaluator(p, 0).cost for p in self.x])
        g = int(np.argmin(self.pbest_cost))
        self.gbest, self.gbest_cost = self.pbest[g].copy(), float(self.pbest_cost[g])

    def _step(self):
        cfg, i, d = self.config, self._next, self.bounds.dims
        self._next = (i + 1) % cfg.swarm_size
        r1, r2 = self.rng.random(d), self.rng.random(d)
        v = (
            cfg.inertia * self.v[i]
            + cfg.c1 * r1 * (self.pbest[i] - self.x[i])
            + cfg.c2 * r2 * (self.gbest - self.x[i])
        )
        self.v[i] = np.clip(v, -self.vmax, self.vmax)
        self.x[i] = clamp(self.x[i] + self.v[i], self.bounds)
        cost = self.evaluator(self.x[i], self.iteration).cost
        if cost < self.pbest_cost[i]:
            self.pbest[i], self.pbest_cost[i] = self.x[i].copy(), cost
            if cost < self.gbest_cost:
                self.gbest, self.gbest_cost = self.x[i].copy(), cost


class BatSwarm(_Stepper):
    """Bat algorithm: frequency-tuned velocities, a pulse-rate-gated local
    walk around the best bat, and loudness-gated acceptance. Only accepted
    moves can change the reported best."""

    name = "Bat"

    def __init__(self, config: BatConfig, objective: Objective, rng: np.random.Generator):
        super().__init__(objective, rng, config.max_evaluations)
        self.config = config
        self._next = 0
        self.sweep = 0
        self._best: Optional[Solution] = None

    @property
    def best(self) -> Solution:
        return self._best

    def _init(self):
        cfg, d = self.config, self.bounds.dims
        n = cfg.population
        self.x = np.array([random_point(self.bounds, self.rng) for _ in range(n)])
        self.v = np.zeros((n, d))
        self.cost = np.array([self.evaluator(p, 0).cost for p in self.x])
        self.loudness = np.full(n, cfg.loudness0)
        self.pulse = np.full(n, cfg.pulse_rate0)
        g = int(np.argmin(self.cost))
        self._best = Solution(self.x[g].copy(), float(self.cost[g]), 0)

    def _step(self):
        cfg, i, d = self.config, self._next, self.bounds.dims
        if i == 0:
            self.sweep += 1
        self._next = (i + 1) % cfg.population
        best = self._best.point
        freq = cfg.freq_min + (cfg.freq_max - cfg.freq_min) * self.rng.random()
        self.v[i] = self.v[i] + (self.x[i] - best) * freq
        cand = self.x[i] + self.v[i]
        if self.rng.random() > self.pulse[i]:
            walk = (2.0 * self.rng.random(d) - 1.0) * self.loudness.mean()
            cand = best + walk * cfg.walk_scale * self.bounds.width
        cand = clamp(cand, self.bounds)
        cost = self.evaluator(cand, self.iteration).cost
        if self.rng.random() < self.loudness[i] and cost <= self.cost[i]:
            self.x[i], self.cost[i] = cand, cost
            self.loudness[i] *= cfg.alpha
            self.pulse[i] = cfg.pulse_rate0 * (1.0 - np.exp(-cfg.gamma_decay * self.sweep))
            if cost <= self._best.cost:
                self._best = Solution(cand.copy(), cost, self.iteration)

    def _record(self):
        self.trace.append(TraceRow(self.iteration, self.evaluations, self._best.cost))


def _stream(rng: Union[int, np.random.Generator]):
    if isinstance(rng, (int, np.integer)):
        return int(rng), seeded_stream(int(rng))
    return None, rng


def _result(opt: _Stepper, seed, config) -> RunResult:
    opt.run()
    return RunResult(opt.best, opt.trace, seed, config, opt.name)


def pso_run(config: PsoConfig, objective: Objective, rng) -> RunResult:
    seed, stream = _stream(rng)
    return _result(ParticleSwarm(config, objective, stream), seed, asdict(config))


def bat_run(config: BatConfig, objective: Objective, rng) -> RunResult:
    seed, stream = _stream(rng)
    return _result(BatSwarm(config, objective, stream), seed, asdict(config))


def random_search_run(max_evaluations: int, objective: Objective, rng) -> RunResult:
    seed, stream = _stream(rng)
    opt = RandomSearch(objective, stream, max_evaluations)
    return _result(opt, seed, {"max_evaluations": max_evaluations})
