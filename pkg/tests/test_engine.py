import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oeo.benchmarks import benchmark_names, landscape, make_objective
from oeo.core import Bounds, Objective, Solution, seeded_stream
from oeo.engine import (
    MOEO,
    NEW_CLUSTER,
    OEO,
    RANDOM_IN_CLUSTER,
    RULE_BASED,
    IterationOutcome,
    ObserverEffectOptimizer,
    OeoConfig,
    _Scores,
    adapt_A,
    adapt_B,
    adapt_G,
    preset,
    prune,
    run,
)
from oeo.policies import (
    EffectivenessMetric,
    Metric,
    effectiveness_scores,
    flatten_distribution,
    roulette_select,
    selection_distribution,
)

from conftest import make_cluster

SPHERE = make_objective(landscape("sphere"))


def _outcome(branch, improved):
    return IterationOutcome(branch, 0, improved, improved)


# config


def test_presets():
    oeo = OeoConfig()
    assert (oeo.m1, oeo.m2) == (5.4, 3.9)
    assert oeo.update_method == "MeanOfElites"
    assert oeo.effectiveness_metric == "MeanEliteFitness"
    m = preset(MOEO)
    assert (m.m1, m.m2) == (7.4, 5.6)
    assert m.update_method == "GetWeightedMeanOfSols"
    assert m.effectiveness_metric == "SubtractFromNearestFitness"


@pytest.mark.parametrize(
    "kw",
    [
        dict(m1=3.0, m2=3.9),
        dict(a_start=1.5),
        dict(n_clusters_init=0),
        dict(max_evaluations=5),
        dict(mode="XYZ"),
        dict(g_gate="sometimes"),
        dict(update_method="GetWeightedMeanOfSols", min_members_for_rule=1),
    ],
)
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        OeoConfig(**kw)


# init


def test_init_defaults():
    opt = ObserverEffectOptimizer(OeoConfig(), SPHERE, seeded_stream(0))
    st = opt.init()
    assert len(opt.clusters) == 10 and opt.evaluations == 10
    assert (st.A, st.B, st.G) == (0.3, 0.16, 0.2)
    assert all(len(c) == 1 and np.array_equal(c.center, c.members[0].point) for c in opt.clusters)


def test_init_single_cluster():
    opt = ObserverEffectOptimizer(OeoConfig(n_clusters_init=1), SPHERE, seeded_stream(0))
    opt.init()
    assert len(opt.clusters) == 1
    opt.step()
    assert opt.evaluations == 2


def test_init_moeo_per_cluster_g():
    opt = ObserverEffectOptimizer(OeoConfig(mode=MOEO), SPHERE, seeded_stream(0))
    st = opt.init()
    assert st.G == [0.2] * 10
    assert all(c.local_g == 0.2 for c in opt.clusters)


# step


def _optimizer(seed=0, **kw):
    opt = ObserverEffectOptimizer(OeoConfig(**kw), SPHERE, seeded_stream(seed))
    opt.init()
    return opt


def test_a_one_never_creates_clusters():
    opt = _optimizer(a_start=1.0, a_range=(1.0, 1.0))
    assert all(opt.step().branch != NEW_CLUSTER for _ in range(300))


def test_a_zero_always_creates_clusters():
    opt = _optimizer(a_start=0.0, a_range=(0.0, 0.0))
    for i in range(50):
        assert opt.step().branch == NEW_CLUSTER
    assert opt.evaluations == 60


def test_fresh_clusters_get_random_placement():
    opt = _optimizer(a_start=1.0, a_range=(1.0, 1.0), g_start=0.99)
    for _ in range(20):
        out = opt.step()
        if len(opt.clusters[out.cluster_index]) <= 4:
            # at most three members before this step
            assert out.branch == RANDOM_IN_CLUSTER


def test_rule_branch_reachable_and_flags_consistent():
    opt = _optimizer(a_start=1.0, a_range=(1.0, 1.0), g_start=0.99, g_range=(0.99, 0.99))
    branches = []
    for _ in range(400):
        prev = opt.best.cost
        out = opt.step()
        branches.append(out.branch)
        assert out.improved_global_best == (opt.best.cost < prev)
        if out.improved_global_best:
            assert out.improved_cluster_best
    assert RULE_BASED in branches


def test_step_touches_only_its_cluster_g():
    opt = _optimizer(seed=3, mode=MOEO, a_start=1.0, a_range=(1.0, 1.0))
    for _ in range(50):
        before = [c.local_g for c in opt.clusters]
        ids = [id(c) for c in opt.clusters]
        out = opt.step()
        if [id(c) for c in opt.clusters] != ids:
            continue  # a prune reshaped the list
        after = [c.local_g for c in opt.clusters]
        changed = [i for i, (x, y) in enumerate(zip(before, after)) if x != y]
        assert set(changed) <= {out.cluster_index}


# adaptation


def test_adapt_a():
    cfg = OeoConfig()
    assert adapt_A(0.3, _outcome(RULE_BASED, True), cfg, 0.7) == pytest.approx(0.32)
    assert adapt_A(0.011, _outcome(RULE_BASED, False), cfg, 0.999999) == 0.01
    assert adapt_A(0.3, _outcome(NEW_CLUSTER, True), cfg, 0.5) == 0.3
    assert adapt_A(0.3, _outcome(RANDOM_IN_CLUSTER, False), cfg, 0.5) == pytest.approx(0.29)


def test_adapt_b():
    cfg = OeoConfig()
    assert adapt_B(0.16, _outcome(RULE_BASED, True), cfg) == pytest.approx(0.214)
    assert adapt_B(0.16, _outcome(RANDOM_IN_CLUSTER, False), cfg) == pytest.approx(0.121)
    b = 0.01
    for _ in range(5):
        b = adapt_B(b, _outcome(RULE_BASED, False), cfg)
    assert b == 0.0
    assert adapt_B(0.5, _outcome(NEW_CLUSTER, False), cfg) == 0.5


def test_adapt_g():
    cfg = OeoConfig()
    assert adapt_G(0.2, _outcome(RULE_BASED, True), cfg) == pytest.approx(0.22)
    assert adapt_G(0.2, _outcome(RANDOM_IN_CLUSTER, True), cfg) == pytest.approx(0.18)
    assert adapt_G(0.2, _outcome(RULE_BASED, False), cfg) == pytest.approx(0.18)
    assert adapt_G(0.2, _outcome(RANDOM_IN_CLUSTER, False), cfg) == pytest.approx(0.22)
    assert adapt_G(0.99, _outcome(RULE_BASED, True), cfg) == 0.99
    assert adapt_G(0.2, _outcome(NEW_CLUSTER, True), cfg) == 0.2


# prune


def test_prune_cap():
    rng = seeded_stream(0)
    costs = rng.permutation(20).astype(float)
    c = make_cluster(rng.random((20, 2)), costs)
    out = prune([c], None, 15)
    assert sorted(m.cost for m in out[0].members) == list(range(15))


def test_prune_keeps_global_best():
    c = make_cluster([[i, i] for i in range(20)], list(range(20)))
    best = c.members[19]  # pretend the worst-cost member is the tracked best
    out = prune([c], best, 15)
    assert any(m is best for m in out[0].members)
    assert len(out[0]) == 15


def test_prune_population_cap_empties_clusters():
    a = make_cluster([[0, 0]], [9.0])
    b = make_cluster([[1, 1]], [8.0])
    c = make_cluster([[2, 2]], [1.0])
    out = prune([a, b, c], c.members[0], 15, population_cap=1)
    assert out == [c]


def test_prune_floor_keeps_one_cluster():
    a = make_cluster([[0, 0]], [3.0])
    out = prune([a], None, 15, population_cap=1)
    assert len(out) == 1


def test_engine_prune_matches_reference():
    # the incremental in-engine prune keeps exactly what the reference keeps
    opt = _optimizer(seed=4, a_start=0.6)
    fast = opt._prune
    checked = []

    def wrapped():
        snap = [type(c)(c.center, list(c.members), c.local_g) for c in opt.clusters]
        fast()
        ref = prune(snap, opt.best, opt.config.per_cluster_cap, opt.config.population_cap)
        got = sorted(id(m) for c in opt.clusters for m in c.members)
        assert got == sorted(id(m) for c in ref for m in c.members)
        assert len(opt.clusters) == len(ref)
        checked.append(len(got))

    opt._prune = wrapped
    for _ in range(1500):
        opt.step()
    assert checked and max(checked) <= 150


# cached scores vs reference scoring


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(list(Metric)), st.integers(0, 10_000))
def test_cached_scores_match_reference(tag, seed):
    cfg = OeoConfig(effectiveness_metric=tag.value, a_start=0.7, max_evaluations=600)
    opt = ObserverEffectOptimizer(cfg, SPHERE, seeded_stream(seed))
    opt.init()
    metric = EffectivenessMetric(tag)
    for i in range(300):
        opt.step()
        if i % 37 == 0:
            ref = effectiveness_scores(opt.clusters, metric, SPHERE.bounds)
            np.testing.assert_allclose(opt._stats.scores(), ref, rtol=1e-9, atol=1e-12)


def test_fast_select_matches_reference():
    opt = _optimizer(seed=8, a_start=0.9)
    for _ in range(200):
        opt.step()
    for B in (0.0, 0.16, 3.0):
        opt.state.B = B
        w = flatten_distribution(selection_distribution(opt._stats.scores()), B)
        for s in range(20):
            opt.rng = seeded_stream(s)
            fast = opt._select()
            assert fast == roulette_select(w, seeded_stream(s))


# run


def test_budget_exact_and_trace_monotone():
    res = run(OeoConfig(max_evaluations=777), SPHERE, 5)
    assert res.evaluations == 777
    assert len(res.trace) == 777 - 10 + 1
    costs = [r.best_cost for r in res.trace]
    assert all(b <= a for a, b in zip(costs, costs[1:]))
    assert costs[-1] == res.best_cost


def test_run_returns_after_init():
    res = run(OeoConfig(max_evaluations=10), SPHERE, 1)
    assert len(res.trace) == 1 and res.evaluations == 10
    opt = ObserverEffectOptimizer(OeoConfig(), SPHERE, seeded_stream(1))
    opt.init()
    assert res.best_cost == min(c.members[0].cost for c in opt.clusters)


def test_run_deterministic():
    a = run(OeoConfig(mode=MOEO, max_evaluations=500), SPHERE, 9)
    b = run(OeoConfig(mode=MOEO, max_evaluations=500), SPHERE, 9)
    assert a.trace == b.trace


def test_best_is_min_over_all_evaluations():
    seen = []
    obj = Objective(lambda x: seen.append(float((x**2).sum())) or seen[-1], SPHERE.bounds)
    res = run(OeoConfig(max_evaluations=400), obj, 2)
    assert res.best_cost == min(seen)
    assert len(seen) == 400


@pytest.mark.parametrize("mode", [OEO, MOEO])
@pytest.mark.parametrize("name", benchmark_names())
def test_solutions_in_bounds_and_params_clamped(mode, name):
    obj = make_objective(landscape(name))
    cfg = OeoConfig(mode=mode, max_evaluations=1500)
    opt = ObserverEffectOptimizer(cfg, obj, seeded_stream(0))
    opt.init()
    while opt.evaluations < cfg.max_evaluations:
        opt.step()
        for c in opt.clusters:
            assert all(obj.bounds.contains(m.point) for m in c.members[-1:])
    for row in opt.trace:
        assert 0.01 <= row.A <= 0.99 and 0.0 <= row.B <= 10.0 and 0.01 <= row.G_mean <= 0.99


def test_sphere_quality_example():
    """Sphere 5-D, 5,000 evaluations: best < 0.1 in >= 18/20 runs."""
    finals = [run(OeoConfig(), SPHERE, s).best_cost for s in range(20)]
    hits = sum(f < 0.1 for f in finals)
    print(f"sphere-5D OEO: {hits}/20 below 0.1, median {np.median(finals):.4g}")
    assert hits >= 18
