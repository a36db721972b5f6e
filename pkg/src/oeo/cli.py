"""Experiment harness: ``run``, ``summarize``, ``replay`` and ``bench-list``.

Experiment configs are INI files::

    [experiment]
    algorithms = OEO, PSO
    objectives = sphere, gauss2d
    seeds = 0-19
    max_evaluations = 5000
    output = results

    [OEO]
    b_start = 0.01

Sections named after an algorithm override its settings; ``[hybrid]``
overrides the OEO-GD family; ``[objective:NAME]`` defines a custom objective
(``kind`` = ``gaussian``, ``standard`` or ``wgtcsp``). Output: one trace CSV
per (algorithm, objective, seed), ``summary.csv`` (population std) and
``manifest.jsonl``.
"""

from __future__ import annotations

import argparse
import ast
import configparser
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from . import __version__
from .baselines import bat_run, frozen_defaults, pso_run, random_search_run
from .benchmarks import benchmark_names, landscape, make_objective
from .core import TRACE_HEADER, Objective, RunResult, TraceRow, seeded_stream
from .engine import MOEO, OEO, OeoConfig
from .engine import run as oeo_run
from .wgtcsp import (
    HybridConfig,
    TrialSet,
    oeo_gd_run,
    planted_outlier_set,
    read_trialset,
    synthetic_trialset,
    weights_objective,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

SUMMARY_HEADER = "algorithm,objective,runs,cost_mean,cost_std,best_cost,mean_wall_seconds"

POPULATION_ALGORITHMS = (OEO, MOEO, "PSO", "Bat", "random")
# hybrid tag -> proposer
HYBRID_ALGORITHMS = {"OEO-GD": OEO, "M-OEO-GD": MOEO, "PSO-GD": "PSO", "Bat-GD": "Bat", "GD": "random"}
ALGORITHMS = POPULATION_ALGORITHMS + tuple(HYBRID_ALGORITHMS)

WGTCSP_BUILTIN = "wgtcsp_planted"


class ConfigError(ValueError):
    """The experiment config is unreadable or inconsistent."""


@dataclass
class ObjectiveEntry:
    name: str
    definition: dict
    objective: Optional[Objective] = None
    trialset: Optional[TrialSet] = None

    @property
    def is_wgtcsp(self) -> bool:
        return self.trialset is not None


@dataclass
class ExperimentConfig:
    algorithms: list[str]
    objectives: list[ObjectiveEntry]
    seeds: list[int]
    max_evaluations: int
    output: Path
    overrides: dict


@dataclass
class SummaryRow:
    algorithm: str
    objective: str
    runs: int
    cost_mean: float
    cost_std: float
    best_cost: float
    mean_wall_seconds: float

    def cells(self) -> list[str]:
        return [
            self.algorithm,
            self.objective,
            str(self.runs),
            repr(self.cost_mean),
            repr(self.cost_std),
            repr(self.best_cost),
            repr(self.mean_wall_seconds),
        ]


# ---------------------------------------------------------------- parsing


def _value(raw: str):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    if raw.lower() in ("true", "false"):
        return raw.lower() == "true"
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def _section(parser: configparser.ConfigParser, name: str) -> dict:
    if not parser.has_section(name):
        return {}
    return {k: _value(v) for k, v in parser.items(name)}


def parse_seeds(text: str) -> list[int]:
    seeds: list[int] = []
    for part in text.replace(",", " ").split():
        lo, sep, hi = part.partition("-")
        if sep and lo:
            a, b = int(lo), int(hi)
            if b < a:
                raise ConfigError(f"empty seed range {part!r}")
            seeds.extend(range(a, b + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ConfigError("at least one seed is required")
    return seeds


def _split(text: str) -> list[str]:
    return [t.strip() for t in text.replace("\n", ",").split(",") if t.strip()]


def build_objective(name: str, definition: dict) -> ObjectiveEntry:
    d = dict(definition)
    kind = d.pop("kind", None)
    if kind is None and name == WGTCSP_BUILTIN:
        return ObjectiveEntry(name, {"kind": "wgtcsp"}, trialset=planted_outlier_set())
    if kind is None and name in benchmark_names():
        return ObjectiveEntry(name, {}, objective=make_objective(landscape(name)))
    if kind == "wgtcsp":
        if "file" in d:
            data = read_trialset(d["file"])
        else:
            data = synthetic_trialset(
                int(d.get("n", 10)),
                int(d.get("channels", 4)),
                seeded_stream(int(d.get("seed", 0))),
                noise=float(d.get("noise", 0.3)),
                outlier=d.get("outlier", 0),
                outlier_scale=float(d.get("outlier_scale", 100.0)),
            )
        return ObjectiveEntry(name, definition, trialset=data)
    if kind == "gaussian":
        spec = landscape(
            "gaussian",
            dims=int(d.get("dims", 2)),
            dense_peaks=d.get("dense_peaks", 5),
            sparse_peaks=d.get("sparse_peaks", 5),
            seed=d.get("seed", 0),
        )
        return ObjectiveEntry(name, definition, objective=make_objective(replace(spec, name=name)))
    if kind == "standard":
        base = d.get("function", name)
        spec = landscape(base, dims=d.get("dims"))
        return ObjectiveEntry(name, definition, objective=make_objective(spec))
    raise ConfigError(f"unknown objective {name!r}")


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        text = path.read_text()
        parser.read_string(text, source=str(path))
    except (OSError, configparser.Error) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not parser.has_section("experiment"):
        raise ConfigError("config needs an [experiment] section")
    exp = parser["experiment"]
    known = {"algorithms", "objectives", "seeds", "max_evaluations", "output"}
    unknown = set(exp) - known
    if unknown:
        raise ConfigError(f"unknown [experiment] keys: {sorted(unknown)}")
    try:
        algorithms = _split(exp.get("algorithms", ""))
        names = _split(exp.get("objectives", ""))
        seeds = parse_seeds(exp.get("seeds", ""))
        max_evaluations = int(exp.get("max_evaluations", "5000"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if not algorithms or not names:
        raise ConfigError("algorithms and objectives must be non-empty")
    bad = [a for a in algorithms if a not in ALGORITHMS]
    if bad:
        raise ConfigError(f"unknown algorithms {bad}; choose from {list(ALGORITHMS)}")
    if max_evaluations < 1:
        raise ConfigError("max_evaluations must be positive")
    output = Path(exp.get("output", "results"))
    if not output.is_absolute():
        output = path.parent / output

    objectives = []
    for name in names:
        section = f"objective:{name}"
        definition = _section(parser, section)
        if "file" in definition and not Path(definition["file"]).is_absolute():
            definition["file"] = str(path.parent / definition["file"])
        try:
            objectives.append(build_objective(name, definition))
        except (ValueError, OSError, KeyError) as exc:
            raise ConfigError(f"objective {name!r}: {exc}") from exc
    for alg in algorithms:
        for obj in objectives:
            if alg in HYBRID_ALGORITHMS and not obj.is_wgtcsp:
                raise ConfigError(f"{alg} needs a wgtcsp objective, got {obj.name!r}")

    known_sections = {"experiment", "hybrid", *ALGORITHMS}
    overrides = {}
    for section in parser.sections():
        if section.startswith("objective:"):
            continue
        if section not in known_sections:
            raise ConfigError(f"unknown section [{section}]")
        if section != "experiment":
            overrides[section] = _section(parser, section)
    cfg = ExperimentConfig(algorithms, objectives, seeds, max_evaluations, output, overrides)
    for alg in algorithms:
        try:
            algorithm_config(cfg, alg)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"[{alg}] {exc}") from exc
    return cfg


def algorithm_config(cfg: ExperimentConfig, alg: str):
    """Dataclass config for ``alg`` with experiment-level overrides applied."""
    ov = dict(cfg.overrides.get(alg, {}))
    settings = {"max_evaluations": cfg.max_evaluations, **ov}
    if alg in (OEO, MOEO):
        return OeoConfig(mode=alg, **settings)
    if alg == "PSO":
        return replace(frozen_defaults()["pso"], **settings)
    if alg == "Bat":
        return replace(frozen_defaults()["bat"], **settings)
    if alg == "random":
        if ov:
            raise ConfigError("random search takes no settings")
        return settings
    hybrid = {"max_evaluations": cfg.max_evaluations, **cfg.overrides.get("hybrid", {}), **ov}
    return HybridConfig(proposer=HYBRID_ALGORITHMS[alg], **hybrid)


# ---------------------------------------------------------------- running


def run_one(cfg: ExperimentConfig, alg: str, entry: ObjectiveEntry, seed: int) -> RunResult:
    conf = algorithm_config(cfg, alg)
    if alg in HYBRID_ALGORITHMS:
        return oeo_gd_run(conf, entry.trialset, seed)
    objective = entry.objective or weights_objective(entry.trialset)
    if alg in (OEO, MOEO):
        return oeo_run(conf, objective, seed)
    if alg == "PSO":
        return pso_run(conf, objective, seed)
    if alg == "Bat":
        return bat_run(conf, objective, seed)
    return random_search_run(conf["max_evaluations"], objective, seed)


def trace_name(alg: str, objective: str, seed: int) -> str:
    return f"{alg}__{objective}__seed{seed}.csv"


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def trace_csv(trace: Sequence[TraceRow]) -> str:
    lines = [TRACE_HEADER]
    lines.extend(",".join(_cell(v) for v in row) for row in trace)
    return "\n".join(lines) + "\n"


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def manifest_record(cfg: ExperimentConfig, alg, entry: ObjectiveEntry, seed, res, wall) -> dict:
    return {
        "algorithm": alg,
        "objective": entry.name,
        "objective_definition": _jsonable(entry.definition),
        "seed": seed,
        "max_evaluations": cfg.max_evaluations,
        "overrides": _jsonable({k: cfg.overrides[k] for k in (alg, "hybrid") if k in cfg.overrides}),
        "config": _jsonable(res.config),
        "trace": trace_name(alg, entry.name, seed),
        "final_best_cost": res.best_cost,
        "evaluations": res.evaluations,
        "wall_seconds": wall,
        "version": __version__,
    }


def summarize_costs(groups: dict) -> list[SummaryRow]:
    """``groups`` maps (algorithm, objective) to a list of (final cost, wall)."""
    rows = []
    for (alg, obj) in sorted(groups):
        vals = groups[(alg, obj)]
        costs = np.array([c for c, _ in vals], dtype=float)
        walls = [w for _, w in vals if w is not None and not math.isnan(w)]
        rows.append(
            SummaryRow(
                alg,
                obj,
                costs.size,
                float(costs.mean()),
                float(costs.std()),
                float(costs.min()),
                float(np.mean(walls)) if walls else math.nan,
            )
        )
    return rows


def summary_csv(rows: Sequence[SummaryRow]) -> str:
    lines = [SUMMARY_HEADER]
    lines.extend(",".join(r.cells()) for r in rows)
    return "\n".join(lines) + "\n"


def run_experiment(config_path, log: Callable[[str], None] = print) -> int:
    try:
        cfg = load_config(config_path)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out = cfg.output
        out.mkdir(parents=True, exist_ok=True)
        groups: dict = {}
        records = []
        for entry in cfg.objectives:
            for alg in cfg.algorithms:
                for seed in cfg.seeds:
                    start = time.perf_counter()
                    res = run_one(cfg, alg, entry, seed)
                    wall = time.perf_counter() - start
                    write_atomic(out / trace_name(alg, entry.name, seed), trace_csv(res.trace))
                    groups.setdefault((alg, entry.name), []).append((res.best_cost, wall))
                    records.append(manifest_record(cfg, alg, entry, seed, res, wall))
                log(f"{alg} on {entry.name}: {len(cfg.seeds)} runs done")
        write_atomic(out / "summary.csv", summary_csv(summarize_costs(groups)))
        manifest = "".join(json.dumps(r, sort_keys=True) + "\n" for r in records)
        write_atomic(out / "manifest.jsonl", manifest)
    except Exception as exc:  # noqa: BLE001 - any failure maps to the runtime exit code
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


# ---------------------------------------------------------------- reading back


def read_trace(path: Path) -> list[TraceRow]:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines or lines[0] != TRACE_HEADER:
        raise ValueError(f"{path}: bad header")
    rows = []
    for rec in csv.reader(io.StringIO("\n".join(lines[1:]))):
        if len(rec) != 7:
            raise ValueError(f"{path}: expected 7 columns, got {len(rec)}")
        opt = [None if v == "" else float(v) for v in rec[3:6]]
        rows.append(
            TraceRow(int(rec[0]), int(rec[1]), float(rec[2]), *opt, int(rec[6]) if rec[6] else None)
        )
    if not rows:
        raise ValueError(f"{path}: no data rows")
    costs = [r.best_cost for r in rows]
    if any(b > a for a, b in zip(costs, costs[1:])):
        raise ValueError(f"{path}: best_cost increases")
    return rows


def _parse_name(path: Path) -> tuple[str, str, int]:
    parts = path.stem.split("__")
    if len(parts) != 3 or not parts[2].startswith("seed"):
        raise ValueError(f"{path.name}: not a trace file name")
    return parts[0], parts[1], int(parts[2][4:])


def summarize(paths: Sequence[Path], walls: Optional[dict] = None) -> list[SummaryRow]:
    """Per (algorithm, objective) statistics of final best costs."""
    if not paths:
        raise ValueError("no trace files")
    walls = walls or {}
    groups: dict = {}
    for p in paths:
        alg, obj, seed = _parse_name(Path(p))
        final = read_trace(p)[-1].best_cost
        groups.setdefault((alg, obj), []).append((final, walls.get(Path(p).name)))
    return summarize_costs(groups)


def trace_files(directory: Path) -> list[Path]:
    return sorted(p for p in Path(directory).glob("*__*__seed*.csv"))


def summarize_dir(directory, log: Callable[[str], None] = print) -> int:
    directory = Path(directory)
    walls = {}
    manifest = directory / "manifest.jsonl"
    try:
        if manifest.exists():
            for line in manifest.read_text().splitlines():
                rec = json.loads(line)
                walls[rec["trace"]] = rec.get("wall_seconds")
        rows = summarize(trace_files(directory), walls)
    except (ValueError, OSError, KeyError) as exc:
        print(f"cannot summarize {directory}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    text = summary_csv(rows)
    write_atomic(directory / "summary.csv", text)
    log(text.rstrip("\n"))
    return EXIT_OK


def replay(manifest_path, log: Callable[[str], None] = print) -> int:
    """Re-run every manifest entry and compare against the stored trace."""
    manifest_path = Path(manifest_path)
    try:
        records = [json.loads(l) for l in manifest_path.read_text().splitlines() if l.strip()]
    except (OSError, ValueError) as exc:
        print(f"cannot read manifest: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    mismatches = 0
    try:
        for rec in records:
            entry = build_objective(rec["objective"], rec["objective_definition"])
            overrides = rec.get("overrides", {})
            cfg = ExperimentConfig(
                [rec["algorithm"]], [entry], [rec["seed"]], rec["max_evaluations"],
                manifest_path.parent, overrides,
            )
            res = run_one(cfg, rec["algorithm"], entry, rec["seed"])
            stored = (manifest_path.parent / rec["trace"]).read_text()
            if trace_csv(res.trace) != stored:
                mismatches += 1
                log(f"MISMATCH {rec['trace']}")
    except Exception as exc:  # noqa: BLE001
        print(f"replay failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    log(f"replayed {len(records)} runs, {mismatches} mismatches")
    return EXIT_OK if mismatches == 0 else EXIT_FAIL


def bench_list(log: Callable[[str], None] = print) -> int:
    for name in benchmark_names():
        spec = landscape(name)
        log(f"{name}\tdims={spec.dims}\toptimum={spec.optimum!r}")
    log(f"{WGTCSP_BUILTIN}\ttrials=10\tchannels=4\t(weights objective)")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    ap = argparse.ArgumentParser(prog="oeo", description="Observer-effect optimization experiments")
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run an experiment config")
    p.add_argument("config")
    p = sub.add_parser("summarize", help="rebuild summary.csv from trace files")
    p.add_argument("directory")
    p = sub.add_parser("replay", help="re-run a manifest and compare traces")
    p.add_argument("manifest")
    sub.add_parser("bench-list", help="list built-in objectives")
    args = ap.parse_args(argv)
    if args.command == "run":
        return run_experiment(args.config)
    if args.command == "summarize":
        return summarize_dir(args.directory)
    if args.command == "replay":
        return replay(args.manifest)
    return bench_list()


if __name__ == "__main__":
    sys.exit(main())
