import csv
import time

import numpy as np
import pytest

from planforge.benchmark import (CSV_COLUMNS, InMemoryDataset, QuerySpec, RunRecord, adversarial_order, aggregate,
                                 bootstrap_ci, export, load_records, normalized_cost_curves, prefix_curves, range_sweep,
                                 run_experiment, run_seed, summarize, sweep_grid, sweep_table, winner_flip, winners)
from planforge.errors import EmptyGroup, MissingCoverage, NoTraces, PrefixTooLarge
from planforge.geometry import Box, Pose
from planforge.planners import PlannerParams
from planforge.problems import MotionPlanningRequest
from planforge.scene import Scene, SceneObject

from conftest import robot, scene


def rec(planner, problem, t, rng=0.5, run=0, success=True, trace=(), dataset="d"):
    return RunRecord(planner, rng, dataset, problem, run, 0, success, t, 1.0 if success else None, 10.0,
                     [list(p) for p in trace])


def test_median_of_small_sample():
    s = summarize([1, 2, 3, 4, 100])
    assert s.median == 3 and s.mean == 22 and s.n == 5
    assert s.ci_low <= 3 <= s.ci_high


def test_bootstrap_ci_coverage():
    # a 99 % interval for the median of an exponential(1) sample should rarely miss ln 2
    rng = np.random.default_rng(0)
    hits = 0
    trials = 200
    for _ in range(trials):
        lo, hi = bootstrap_ci(rng.exponential(1.0, 60), resamples=2000)
        hits += lo <= np.log(2) <= hi
    assert hits / trials >= 0.95


def test_bootstrap_is_deterministic_and_handles_constants():
    v = [3.0, 1.0, 4.0, 1.0, 5.0]
    assert bootstrap_ci(v) == bootstrap_ci(v)
    assert bootstrap_ci([2.0, 2.0]) == (2.0, 2.0)
    with pytest.raises(EmptyGroup):
        bootstrap_ci([])


def test_aggregate_groups_and_counts_failures():
    records = [rec("a", 1, 1.0), rec("a", 2, 10.0, success=False), rec("b", 1, 2.0, rng=1.0)]
    out = aggregate(records)
    assert set(out) == {("a", 0.5), ("b", 1.0)}
    assert out[("a", 0.5)].success_rate == 0.5 and out[("a", 0.5)].mean == 5.5
    with pytest.raises(EmptyGroup):
        aggregate([])


def _synthetic_flip():
    """A wins 5 problems by a wide margin, B wins the other 95 narrowly but decisively overall."""
    records = []
    for p in range(1, 101):
        if p <= 5:
            ta, tb = 1.0, 10.0
        else:
            ta, tb = 5.0, 2.0
        for r in range(3):
            records += [rec("a", p, ta, run=r), rec("b", p, tb, run=r)]
    return records


def test_adversarial_order_matches_brute_force():
    rng = np.random.default_rng(1)
    records = [rec(n, p, float(rng.uniform(0, 5)), run=r) for n in "ab" for p in range(1, 31) for r in range(4)]
    mean = {(n, p): np.mean([x.time_s for x in records if x.planner == n and x.problem == p])
            for n in "ab" for p in range(1, 31)}
    order = adversarial_order(records, "a@0.5", "b@0.5")
    diffs = [mean[("a", p)] - mean[("b", p)] for p in order]
    assert diffs == sorted(diffs)
    flipped = adversarial_order(records, "a@0.5", "b@0.5", favor="b@0.5")
    assert [mean[("b", p)] - mean[("a", p)] for p in flipped] == sorted(mean[("b", p)] - mean[("a", p)] for p in flipped)


def test_adversarial_order_ties_keep_index_order():
    records = [rec(n, p, 1.0) for n in "ab" for p in (3, 1, 2)]
    assert adversarial_order(records, "a@0.5", "b@0.5") == [1, 2, 3]


def test_synthetic_winner_flip():
    records = _synthetic_flip()
    order = adversarial_order(records, "a@0.5", "b@0.5")
    rows = prefix_curves(records, order, [5, 100])
    small, large, flip = winner_flip(rows)
    assert (small, large, flip) == ("a@0.5", "b@0.5", True)
    by = {(r.prefix, r.planner): r.mean_time for r in rows}
    assert by[(5, "a@0.5")] == 1.0 and by[(100, "b@0.5")] == pytest.approx((5 * 10 + 95 * 2) / 100)


def test_prefix_errors():
    records = _synthetic_flip()
    with pytest.raises(PrefixTooLarge):
        prefix_curves(records, list(range(1, 101)), [101])
    with pytest.raises(MissingCoverage):
        adversarial_order(records + [rec("a", 200, 1.0)], "a@0.5", "b@0.5")
    assert winners(prefix_curves(records, list(range(1, 101)), [5]))[5] == "a@0.5"


def test_normalized_cost_curves_by_hand():
    records = [
        rec("x", 1, 3.0, trace=[(1.0, 4.0), (2.0, 2.0)]),
        rec("x", 1, 3.0, run=1, trace=[(0.5, 3.0)]),
        rec("x", 1, 3.0, run=2, trace=[(1.5, 2.5)]),
        rec("y", 1, 3.0, trace=[(0.2, 2.0)]),
    ]
    curves = normalized_cost_curves(records, times=[0.5, 1.0, 2.0])
    x = [p.median for p in curves["x@0.5"]]
    # best final cost on the problem is 2.0
    assert x[0] == np.inf  # only one of three solved at t=0.5
    assert x[1] == pytest.approx(2.0)  # {4/2, 3/2, inf}
    assert x[2] == pytest.approx(1.25)  # {1.0, 1.5, 1.25}
    assert [p.median for p in curves["y@0.5"]] == [1.0, 1.0, 1.0]
    with pytest.raises(NoTraces):
        normalized_cost_curves([rec("x", 1, 1.0)])


def test_export_round_trip(tmp_path):
    records = [rec("a", 1, 0.123456789, trace=[(0.1, 2.0)]), rec("b", 2, 10.0, success=False)]
    export(records, "csv", str(tmp_path / "r.csv"))
    with open(tmp_path / "r.csv") as fh:
        header = next(csv.reader(fh))
    assert tuple(header) == CSV_COLUMNS
    back = load_records(str(tmp_path / "r.csv"))
    for a, b in zip(records, back):
        assert (a.planner, a.range, a.problem, a.success, a.time_s, a.cost) == \
               (b.planner, b.range, b.problem, b.success, b.time_s, b.cost)
    export(records, "jsonl", str(tmp_path / "r.jsonl"))
    assert load_records(str(tmp_path / "r.jsonl")) == records
    with pytest.raises(ValueError):
        export(records, "xml", str(tmp_path / "r.xml"))


def test_run_seed_is_shared_and_stable():
    assert run_seed(0, 3, 1) == run_seed(0, 3, 1)
    assert len({run_seed(0, p, r) for p in range(10) for r in range(10)}) == 100


def test_sweep_grid():
    assert sweep_grid(0.25, 2.0, 0.25) == [0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0]
    assert sweep_grid(0.1, 0.3, 0.1) == [0.1, 0.2, 0.3]


def _tiny_dataset():
    model = robot("point2d")
    empty = scene("empty2d")
    probs = [(empty, MotionPlanningRequest(np.array([-0.5, -0.5]), np.array([0.5, 0.4 + 0.1 * k]))) for k in range(3)]
    return InMemoryDataset(model, probs, "tiny")


def test_run_experiment_records_every_cell():
    ds = _tiny_dataset()
    specs = [QuerySpec(PlannerParams(n, 0.3, 5.0), ds, p, repeats=2) for n in ("rrt_connect", "biest")
             for p in (1, 2, 3)]
    out = run_experiment(specs, experiment_seed=9)
    assert len(out) == 12 and all(r.success for r in out)
    assert [(r.planner, r.problem, r.run) for r in out][:3] == [("rrt_connect", 1, 0), ("rrt_connect", 1, 1),
                                                                ("rrt_connect", 2, 0)]
    # both planners see the same per-cell seed
    seeds = {(r.problem, r.run): set() for r in out}
    for r in out:
        seeds[(r.problem, r.run)].add(r.seed)
    assert all(len(s) == 1 for s in seeds.values())


def test_timeouts_are_clamped():
    model = robot("point2d")
    wall = Scene([SceneObject("wall", Box((0.1, 3.0, 1.0)), Pose.identity())])
    ds = InMemoryDataset(model, [(wall, MotionPlanningRequest(np.array([-0.5, 0]), np.array([0.5, 0])))])
    (r,) = run_experiment([QuerySpec(PlannerParams("rrt_connect", 0.3, 0.2), ds, 1)])
    assert not r.success and r.time_s == 0.2 and r.cost is None


def test_range_sweep_table():
    ds = _tiny_dataset()
    out = range_sweep(ds, ["rrt_connect"], [0.25, 0.5], timeout=5, repeats=1)
    table = sweep_table(out)
    assert [(p, r, n) for p, r, _, n in table] == [("rrt_connect", 0.25, 3), ("rrt_connect", 0.5, 3)]


def test_analysis_of_2000_records_is_fast():
    rng = np.random.default_rng(0)
    records = [rec(n, p, float(rng.exponential()), run=r) for n in "ab" for p in range(1, 101) for r in range(10)]
    assert len(records) == 2000
    t0 = time.perf_counter()
    aggregate(records)
    order = adversarial_order(records, "a@0.5", "b@0.5")
    prefix_curves(records, order, [5, 10, 50, 100])
    assert time.perf_counter() - t0 < 30
