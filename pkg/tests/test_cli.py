import json
import subprocess
import sys
from pathlib import Path

import pytest

from oeo.cli import (
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_RUNTIME,
    SUMMARY_HEADER,
    ConfigError,
    load_config,
    main,
    parse_seeds,
    read_trace,
    summarize,
    trace_files,
)
from oeo.core import TRACE_HEADER


def _write(tmp_path: Path, body: str, name="exp.ini") -> Path:
    p = tmp_path / name
    p.write_text(body)
    return p


BASIC = """
[experiment]
algorithms = {algs}
objectives = {objs}
seeds = {seeds}
max_evaluations = {budget}
output = out
"""


def _config(tmp_path, algs="OEO", objs="sphere", seeds="0", budget=300, extra=""):
    return _write(tmp_path, BASIC.format(algs=algs, objs=objs, seeds=seeds, budget=budget) + extra)


def test_one_seed_file_contract(tmp_path):
    cfg = _config(tmp_path)
    assert main(["run", str(cfg)]) == EXIT_OK
    out = tmp_path / "out"
    assert sorted(p.name for p in out.glob("*.csv")) == ["OEO__sphere__seed0.csv", "summary.csv"]
    assert sorted(p.name for p in out.glob("*.jsonl")) == ["manifest.jsonl"]
    lines = (out / "OEO__sphere__seed0.csv").read_text().splitlines()
    assert lines[0] == TRACE_HEADER
    assert (out / "summary.csv").read_text().splitlines()[0] == SUMMARY_HEADER
    rec = json.loads((out / "manifest.jsonl").read_text())
    assert rec["seed"] == 0 and rec["trace"] == "OEO__sphere__seed0.csv"


def test_rerun_byte_identical(tmp_path):
    cfg = _config(tmp_path, algs="OEO, M-OEO, PSO, Bat, random", seeds="0-1")
    assert main(["run", str(cfg)]) == EXIT_OK
    first = {p.name: p.read_bytes() for p in trace_files(tmp_path / "out")}
    assert main(["run", str(cfg)]) == EXIT_OK
    second = {p.name: p.read_bytes() for p in trace_files(tmp_path / "out")}
    assert first == second and len(first) == 10


def test_baseline_traces_leave_adaptive_columns_empty(tmp_path):
    main(["run", str(_config(tmp_path, algs="PSO"))])
    row = (tmp_path / "out" / "PSO__sphere__seed0.csv").read_text().splitlines()[1]
    assert row.endswith(",,,,")


def test_comparison_summary(tmp_path):
    cfg = _config(tmp_path, algs="OEO, PSO", seeds="0-19", budget=200)
    assert main(["run", str(cfg)]) == EXIT_OK
    lines = (tmp_path / "out" / "summary.csv").read_text().splitlines()
    assert len(lines) == 3
    for line in lines[1:]:
        alg, obj, runs, mean, std, best, wall = line.split(",")
        assert runs == "20" and float(std) >= 0 and float(mean) >= float(best)
        assert float(wall) > 0


def test_hybrid_and_custom_objectives(tmp_path):
    extra = """
[objective:tiny]
kind = wgtcsp
n = 3
channels = 3
seed = 4

[objective:bumps]
kind = gaussian
dims = 2
dense_peaks = 3
sparse_peaks = 2
seed = 7

[hybrid]
proposal_evaluations = 20
"""
    cfg = _config(tmp_path, algs="OEO-GD, GD", objs="tiny, wgtcsp_planted", budget=120, extra=extra)
    assert main(["run", str(cfg)]) == EXIT_OK
    cfg2 = _write(tmp_path, BASIC.format(algs="OEO", objs="bumps, tiny", seeds="1", budget=100) + extra, "b.ini")
    assert main(["run", str(cfg2)]) == EXIT_OK
    names = {p.name for p in trace_files(tmp_path / "out")}
    assert {"OEO-GD__tiny__seed0.csv", "GD__wgtcsp_planted__seed0.csv", "OEO__bumps__seed1.csv"} <= names


@pytest.mark.parametrize(
    "algs,objs,seeds,extra",
    [
        ("Foo", "sphere", "0", ""),
        ("OEO", "nowhere", "0", ""),
        ("OEO", "sphere", "", ""),
        ("OEO-GD", "sphere", "0", ""),
        ("OEO", "sphere", "0", "\n[OEO]\nnot_a_field = 1\n"),
        ("OEO", "sphere", "0", "\n[OEO]\nm1 = 1.0\n"),
        ("OEO", "sphere", "0", "\n[mystery]\nx = 1\n"),
    ],
)
def test_invalid_configs_exit_2(tmp_path, algs, objs, seeds, extra, capsys):
    cfg = _write(tmp_path, BASIC.format(algs=algs, objs=objs, seeds=seeds, budget=100) + extra)
    assert main(["run", str(cfg)]) == EXIT_CONFIG
    assert "invalid config" in capsys.readouterr().err


def test_missing_config_exit_2(tmp_path):
    assert main(["run", str(tmp_path / "missing.ini")]) == EXIT_CONFIG


def test_runtime_failure_exit_3(tmp_path, capsys):
    cfg = _config(tmp_path)
    (tmp_path / "out").write_text("a file where the output directory should be")
    assert main(["run", str(cfg)]) == EXIT_RUNTIME
    assert "run failed" in capsys.readouterr().err


def test_parse_seeds():
    assert parse_seeds("0-3, 7") == [0, 1, 2, 3, 7]
    assert parse_seeds("5") == [5]
    with pytest.raises(ConfigError):
        parse_seeds("4-2")


def _trace(path: Path, costs):
    rows = [TRACE_HEADER] + [f"{i},{i + 1},{c!r},,,," for i, c in enumerate(costs)]
    path.write_text("\n".join(rows) + "\n")
    return path


def test_summarize_examples(tmp_path):
    one = summarize([_trace(tmp_path / "X__f__seed0.csv", [7.0, 5.0])])
    assert (one[0].cost_mean, one[0].cost_std, one[0].best_cost) == (5.0, 0.0, 5.0)
    files = [
        _trace(tmp_path / "Y__f__seed0.csv", [4.0]),
        _trace(tmp_path / "Y__f__seed1.csv", [9.0, 6.0]),
    ]
    two = summarize(files)[0]
    assert (two.cost_mean, two.cost_std, two.best_cost, two.runs) == (5.0, 1.0, 4.0, 2)
    assert summarize(files[::-1]) == summarize(files)


def test_summarize_rejects_malformed(tmp_path):
    bad = tmp_path / "Z__f__seed0.csv"
    bad.write_text("nope\n1,2,3\n")
    with pytest.raises(ValueError):
        summarize([bad])
    up = _trace(tmp_path / "Z__f__seed1.csv", [1.0, 2.0])
    with pytest.raises(ValueError):
        read_trace(up)
    with pytest.raises(ValueError):
        summarize([])


def test_summarize_command_and_replay(tmp_path, capsys):
    cfg = _config(tmp_path, algs="OEO, Bat", seeds="0-1", budget=150)
    main(["run", str(cfg)])
    out = tmp_path / "out"
    before = (out / "summary.csv").read_text()
    assert main(["summarize", str(out)]) == EXIT_OK
    assert (out / "summary.csv").read_text() == before
    assert main(["replay", str(out / "manifest.jsonl")]) == EXIT_OK
    # tamper with one trace: replay must notice
    victim = out / "OEO__sphere__seed1.csv"
    victim.write_text(victim.read_text().replace("\n1,", "\n1,", 1) + "")
    lines = victim.read_text().splitlines()
    lines[-1] = lines[-1].replace(lines[-1].split(",")[2], "0.0", 1)
    victim.write_text("\n".join(lines) + "\n")
    assert main(["replay", str(out / "manifest.jsonl")]) == 1
    assert main(["summarize", str(tmp_path / "nothing")]) == EXIT_CONFIG


def test_bench_list_and_module_entry(capsys):
    assert main(["bench-list"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "gauss5d_b" in out and "rastrigin" in out
    proc = subprocess.run([sys.executable, "-m", "oeo", "bench-list"], capture_output=True, text=True)
    assert proc.returncode == 0 and "sphere" in proc.stdout


def test_load_config_resolves_output_relative(tmp_path):
    cfg = load_config(_config(tmp_path))
    assert cfg.output == tmp_path / "out"


def test_inline_comments_and_trialset_file(tmp_path):
    from oeo.wgtcsp import planted_outlier_set, write_trialset

    write_trialset(planted_outlier_set(1), tmp_path / "trials.txt")
    body = """
[experiment]
algorithms = GD          ; plain gradient descent with restarts
objectives = mine
seeds = 0-1, 5           ; ranges and lists
max_evaluations = 80
output = out

[objective:mine]
kind = wgtcsp
file = trials.txt
"""
    cfg = _write(tmp_path, body)
    assert load_config(cfg).seeds == [0, 1, 5]
    assert main(["run", str(cfg)]) == EXIT_OK
    assert main(["replay", str(tmp_path / "out" / "manifest.jsonl")]) == EXIT_OK
