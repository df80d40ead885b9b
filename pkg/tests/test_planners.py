import math

import numpy as np
import pytest

from planforge.collision import CollisionChecker
from planforge.errors import InvalidRequest, PlannerTimeout
from planforge.geometry import Box, Pose
from planforge.planners import PlannerParams, Path, load_path, plan, save_path, shortcut, validate_path
from planforge.problems import MotionPlanningRequest, generate_request, load_queries
from planforge.scene import Scene, SceneObject

from conftest import config, robot, scene

LEFT, RIGHT = np.array([-0.8, 0.6]), np.array([0.8, 0.6])
WALLS = [((0.0, 0.67), (0.05, 0.6)), ((0.0, -0.67), (0.05, 0.6))]  # (center, half extents) in x/y
RADIUS = 0.02


def point_states(path, res):
    """Independent re-interpolation: ceil(length/res) equal steps per segment."""
    out = [path[0]]
    for a, b in zip(path[:-1], path[1:]):
        n = max(1, math.ceil(np.linalg.norm(b - a) / res))
        out += [a + (b - a) * k / n for k in range(1, n + 1)]
    return np.array(out)


def point_free(states):
    """Closed-form sphere/box clearance for the narrow-passage walls (walls are tall in z)."""
    ok = np.all(np.abs(states) <= 1.0 + 1e-9, axis=1)
    for c, h in WALLS:
        d = np.linalg.norm(np.maximum(np.abs(states - c) - h, 0.0), axis=1)
        ok &= d >= RADIUS
    return ok


def _req(a, b):
    return MotionPlanningRequest(np.asarray(a, float), np.asarray(b, float))


@pytest.fixture(scope="module")
def narrow():
    return robot("point2d"), scene("narrow2d")


@pytest.mark.parametrize("name", ["rrt_connect", "biest", "rrt_star"])
def test_paths_are_sound_and_hit_endpoints(narrow, name):
    model, s = narrow
    params = PlannerParams(name, range=0.3, timeout=20 if name != "rrt_star" else 3, seed=1)
    res = plan(model, s, _req(LEFT, RIGHT), params)
    w = res.path.waypoints
    assert np.array_equal(w[0], LEFT) and np.array_equal(w[-1], RIGHT)
    assert validate_path(CollisionChecker(model, s), res.path, params.validation_resolution)
    assert point_free(point_states(w, params.validation_resolution)).all()


def test_arm_path_on_shelf_is_sound(shelf, arm6_adapter):
    queries, _ = load_queries(config("shelf_queries.yaml"))
    req = generate_request(shelf, queries["home"], queries["grasp_cylinder"], arm6_adapter,
                           rng=np.random.default_rng(0))
    res = plan(arm6_adapter.model, shelf, req, PlannerParams("rrt_connect", timeout=30, seed=3))
    checker = CollisionChecker(arm6_adapter.model, shelf)
    assert validate_path(checker, res.path, 0.05)
    assert np.array_equal(res.path.waypoints[0], req.start)
    assert np.array_equal(res.path.waypoints[-1], req.goal)


@pytest.mark.parametrize("name", ["rrt_connect", "biest"])
def test_same_seed_same_path(narrow, name):
    model, s = narrow
    p = PlannerParams(name, range=0.3, timeout=20, seed=5)
    assert plan(model, s, _req(LEFT, RIGHT), p).path == plan(model, s, _req(LEFT, RIGHT), p).path


def test_start_equals_goal(narrow):
    model, s = narrow
    for name in ("rrt_connect", "biest", "rrt_star"):
        res = plan(model, s, _req(LEFT, LEFT), PlannerParams(name, timeout=1))
        assert len(res.path) == 1 and res.path.cost == 0.0


def test_invalid_requests(narrow):
    model, s = narrow
    with pytest.raises(InvalidRequest):
        plan(model, s, _req([0.0, 0.67], RIGHT), PlannerParams())
    with pytest.raises(InvalidRequest):
        plan(model, s, _req([1.5, 0.0], RIGHT), PlannerParams())
    with pytest.raises(InvalidRequest):
        PlannerParams("prm")
    with pytest.raises(InvalidRequest):
        PlannerParams(range=0.0)


def test_blocked_problem_times_out():
    model = robot("point2d")
    wall = Scene([SceneObject("wall", Box((0.1, 3.0, 1.0)), Pose.identity())])
    for name in ("rrt_connect", "biest", "rrt_star"):
        with pytest.raises(PlannerTimeout) as e:
            plan(model, wall, _req(LEFT, RIGHT), PlannerParams(name, timeout=0.3))
        assert e.value.elapsed >= 0.3


def test_validate_path_catches_wall_crossing(narrow):
    model, s = narrow
    checker = CollisionChecker(model, s)
    through = Path(np.array([[-0.5, 0.3], [0.5, 0.3]]))
    assert not validate_path(checker, through, 0.05)
    assert validate_path(checker, Path(np.array([[-0.5, 0.0], [0.5, 0.0]])), 0.05)


def test_rrt_star_trace_strictly_decreasing():
    model = robot("point2d")
    empty = scene("empty2d")
    seen = []
    res = plan(model, empty, _req([-0.9, -0.9], [0.9, 0.9]), PlannerParams("rrt_star", range=0.2, timeout=2, seed=0),
               cost_callback=lambda t, c: seen.append((t, c)))
    costs = [c for _, c in res.trace]
    assert len(costs) >= 1
    assert all(b < a for a, b in zip(costs, costs[1:]))
    assert seen == res.trace
    assert costs[-1] == pytest.approx(res.path.cost, rel=1e-12)
    assert res.path.cost >= np.linalg.norm([1.8, 1.8]) - 1e-12


def test_shortcut_keeps_validity_and_never_lengthens(narrow):
    model, s = narrow
    checker = CollisionChecker(model, s)
    res = plan(model, s, _req(LEFT, RIGHT), PlannerParams("biest", range=0.2, timeout=20, seed=2))
    short = shortcut(res.path, checker, 200, np.random.default_rng(0))
    assert short.cost <= res.path.cost + 1e-12
    assert validate_path(checker, short, 0.05)
    assert np.array_equal(short.waypoints[0], LEFT) and np.array_equal(short.waypoints[-1], RIGHT)


def test_completeness_smoke_on_open_space():
    # every planner solves an easy problem over many seeds well inside the timeout
    model = robot("point2d")
    empty = scene("empty2d")
    for name in ("rrt_connect", "biest"):
        for seed in range(10):
            plan(model, empty, _req([-0.9, 0.0], [0.9, 0.1]), PlannerParams(name, range=0.1, timeout=5, seed=seed))


def test_path_file_round_trip(tmp_path):
    p = Path(np.random.default_rng(0).uniform(-1, 1, size=(7, 6)))
    save_path(p, str(tmp_path / "p.txt"))
    back = load_path(str(tmp_path / "p.txt"))
    assert back == p
    assert (tmp_path / "p.txt").read_text().startswith("# dof 6 cost ")
