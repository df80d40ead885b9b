import numpy as np
import pytest

from planforge.collision import CollisionChecker
from planforge.errors import IkNoSolution, SchemaError, UnknownTip
from planforge.geometry import Pose, random_pose
from planforge.problems import (IkParams, JointGoal, ManipulationQuery, RobotAdapter, collision_aware_ik,
                                generate_request, load_queries, load_request_file, multi_tip_ik, recheck_request,
                                request_to_dict, resolve_target_pose, save_request, tip_errors)
from planforge.scene import Scene

from conftest import config, robot


def _free_config(model, rng, checker):
    while True:
        q = model.sample_uniform(rng)
        if not checker.in_collision(q):
            return q


def test_target_pose_algebra(shelf):
    rng = np.random.default_rng(0)
    for _ in range(20):
        s1, s2 = random_pose(rng), random_pose(rng)
        adapter = RobotAdapter(robot("arm6"), {"tool": s2})
        q = ManipulationQuery("g", "cylinder", "tool", s1)
        target = resolve_target_pose(shelf, q, adapter)
        ref = shelf.world_pose("cylinder").matrix @ s1.matrix @ np.linalg.inv(s2.matrix)
        assert np.max(np.abs(target.matrix - ref)) < 1e-9
        # the tool frame lands on the grasp frame
        assert (target @ s2).almost_equal(shelf.world_pose("cylinder") @ s1, 1e-9)


def test_planar_ik_reaches_position():
    adapter = RobotAdapter(robot("planar2"))
    model = adapter.model
    target = model.link_pose([0.4, 0.9], "tip")
    q = collision_aware_ik(adapter, Scene(), target, IkParams(), np.random.default_rng(0), "tip",
                           orientation_free=True)
    assert np.linalg.norm(model.link_pose(q, "tip").translation - target.translation) <= 1e-3


def test_unreachable_target_fails():
    adapter = RobotAdapter(robot("planar2"))
    with pytest.raises(IkNoSolution):
        collision_aware_ik(adapter, Scene(), Pose((5.0, 0.0, 0.0)), IkParams(restarts=5),
                           np.random.default_rng(0), "tip", orientation_free=True)


def test_arm_ik_round_trip_small(arm6_adapter):
    model = arm6_adapter.model
    checker = CollisionChecker(model, Scene())
    rng = np.random.default_rng(10)
    ok = 0
    for _ in range(20):
        target = model.link_pose(_free_config(model, rng, checker), "tool")
        try:
            q = collision_aware_ik(arm6_adapter, Scene(), target, IkParams(), rng, "tool")
        except IkNoSolution:
            continue
        dp, dr = tip_errors(model, q, "tool", target)
        assert dp <= 1e-3 and dr <= 1e-2 and model.within_limits(q) and not checker.in_collision(q)
        ok += 1
    assert ok >= 17


def test_multi_tip_ik_reaches_both_hands():
    model = robot("twoarm")
    adapter = RobotAdapter(model)
    checker = CollisionChecker(model, Scene())
    rng = np.random.default_rng(5)
    solved = 0
    for _ in range(5):
        qstar = _free_config(model, rng, checker)
        targets = {t: model.link_pose(qstar, t) for t in ("left_hand", "right_hand")}
        q = multi_tip_ik(adapter, Scene(), targets, IkParams(), rng)
        for t, tgt in targets.items():
            dp, dr = tip_errors(model, q, t, tgt)
            assert dp <= 1e-3 and dr <= 1e-2
        solved += 1
    assert solved == 5


def test_ik_result_is_collision_free(shelf, arm6_adapter):
    queries, _ = load_queries(config("shelf_queries.yaml"))
    target = resolve_target_pose(shelf, queries["grasp_cylinder"], arm6_adapter)
    q = collision_aware_ik(arm6_adapter, shelf, target, IkParams(), np.random.default_rng(1), "tool")
    assert not CollisionChecker(arm6_adapter.model, shelf).in_collision(q)


def test_generated_request_rechecks_clean(shelf, arm6_adapter, tmp_path):
    queries, pairs = load_queries(config("shelf_queries.yaml"))
    s, g = pairs[0]
    req = generate_request(shelf, queries[s], queries[g], arm6_adapter, rng=np.random.default_rng(2))
    assert recheck_request(req, shelf, arm6_adapter.model) == []
    assert np.array_equal(req.start, queries["home"].q)
    save_request(req, str(tmp_path / "r.yaml"))
    back = load_request_file(str(tmp_path / "r.yaml"))
    assert back == req
    assert np.array_equal(back.goal, req.goal)
    bad = type(req)(req.start, req.goal + 0.05, req.attachments, req.meta)
    assert any("misses target" in p for p in recheck_request(bad, shelf, arm6_adapter.model))


def test_attached_object_rides_with_tip(shelf, arm6_adapter, tmp_path):
    grasp = ManipulationQuery("grab", "cylinder", "tool", Pose(rotation=[0.5, 0.5, 0.5, 0.5]), attach=True)
    home = JointGoal("home", (0.0, -0.3, 1.2, 0.0, 0.8, 0.0))
    req = generate_request(shelf, home, grasp, arm6_adapter, rng=np.random.default_rng(3))
    (label, att), = req.attachments
    assert label == "goal" and att.object_name == "cylinder" and "tool" in att.touch_links
    carried = arm6_adapter.model.link_pose(req.goal, "tool") @ att.link_to_object
    assert np.linalg.norm(carried.translation - shelf.world_pose("cylinder").translation) < 2e-3
    save_request(req, str(tmp_path / "r.yaml"))
    assert load_request_file(str(tmp_path / "r.yaml")) == req
    assert request_to_dict(req)["attached"][0]["object"] == "cylinder"


def test_explicit_endpoint_validated(shelf, arm6_adapter):
    with pytest.raises(IkNoSolution) as e:
        generate_request(shelf, JointGoal("bad", (0.0,) * 5), JointGoal("h", (0.0,) * 6), arm6_adapter)
    assert e.value.endpoint == "start"


def test_unknown_tip(shelf, arm6_adapter):
    with pytest.raises(UnknownTip):
        resolve_target_pose(shelf, ManipulationQuery("q", "cylinder", "nope"), arm6_adapter)


def test_query_file_validation(tmp_path):
    p = tmp_path / "q.yaml"
    p.write_text("queries:\n  - {name: a, tip: tool}\n  - {name: b, joints: [0, 0]}\n")
    with pytest.raises(SchemaError) as e:
        load_queries(str(p))
    assert e.value.field == "queries[0].object"
    p.write_text("queries:\n  - {name: a, joints: [0]}\n  - {name: b, joints: [1]}\npairs: [[a, c]]\n")
    with pytest.raises(SchemaError):
        load_queries(str(p))
