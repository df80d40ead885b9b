import os

import numpy as np
import pytest

from planforge.errors import DimensionMismatch, KinematicLoop, MissingLimit, UnknownLink, UnsupportedElement, XmlError
from planforge.geometry import Pose
from planforge.kinematics import load_urdf, parse_urdf

from conftest import ROBOTS, robot
from oracles import fd_jacobian, urdf_fk

FIXTURES = ["arm6", "planar2", "point2d", "cabinet", "twoarm"]


@pytest.mark.parametrize("name", FIXTURES)
def test_fk_matches_matrix_product_oracle(name):
    model = robot(name)
    rng = np.random.default_rng(1)
    for _ in range(50):
        q = model.sample_uniform(rng)
        ours = model.forward_kinematics(q)
        ref = urdf_fk(os.path.join(ROBOTS, f"{name}.urdf"), q)
        for link, m in ref.items():
            assert np.max(np.abs(ours[link].matrix - m)) < 1e-9, link


def test_fk_includes_base_offset():
    base = Pose.from_xyz_rpy((0.3, -0.1, 0.2), (0.0, 0.0, 0.7))
    model = robot("arm6").with_base_offset(base)
    q = np.full(6, 0.3)
    ref = urdf_fk(os.path.join(ROBOTS, "arm6.urdf"), q, base.matrix)
    assert np.allclose(model.link_pose(q, "tool").matrix, ref["tool"], atol=1e-9)


@pytest.mark.parametrize("name,tip", [("arm6", "tool"), ("planar2", "tip"), ("twoarm", "left_hand"),
                                      ("twoarm", "right_hand"), ("point2d", "body")])
def test_jacobian_matches_central_differences(name, tip):
    model = robot(name)
    if tip not in model.link_map:
        tip = model.tips[0]
    rng = np.random.default_rng(2)
    for _ in range(20):
        q = model.sample_uniform(rng)
        ref = fd_jacobian(lambda x: model.link_transforms(x)[model.link_index[tip]], q)
        assert np.max(np.abs(model.jacobian(q, tip) - ref)) < 1e-5


def test_batch_matches_single():
    model = robot("twoarm")
    rng = np.random.default_rng(3)
    qs = np.array([model.sample_uniform(rng) for _ in range(7)])
    batch = model.link_transforms_batch(qs)
    for k in range(7):
        assert np.array_equal(batch[k], model.link_transforms(qs[k]))


def test_structure_of_arm6():
    model = robot("arm6")
    assert model.dof == 6
    assert model.joint_names == [f"j{i}" for i in range(1, 7)]
    assert "tool" in model.tips
    # no adjacent link pairs are self-collision checked
    for a, b in model.self_collision_pairs:
        assert frozenset((a, b)) not in model.adjacent_pairs


def test_continuous_joint_gets_pi_limits():
    text = """<robot name="r"><link name="a"/><link name="b"/>
      <joint name="j" type="continuous"><parent link="a"/><child link="b"/><axis xyz="0 0 1"/></joint></robot>"""
    m = parse_urdf(text)
    assert m.lower[0] == pytest.approx(-np.pi) and m.upper[0] == pytest.approx(np.pi)


@pytest.mark.parametrize("text,exc", [
    ("<robot><link name='a'/><link name='b'/><joint name='j' type='revolute'><parent link='a'/>"
     "<child link='b'/></joint></robot>", MissingLimit),
    ("<robot><link name='a'/><link name='b'/><joint name='j' type='floating'><parent link='a'/>"
     "<child link='b'/></joint></robot>", UnsupportedElement),
    ("<robot><link name='a'/><link name='b'/>"
     "<joint name='j1' type='fixed'><parent link='a'/><child link='b'/></joint>"
     "<joint name='j2' type='fixed'><parent link='b'/><child link='a'/></joint></robot>", KinematicLoop),
    ("<robot><link name='a'", XmlError),
    ("<robot><link name='a'/><joint name='j' type='fixed'><parent link='a'/><child link='zz'/></joint></robot>",
     XmlError),
])
def test_malformed_urdf(text, exc):
    with pytest.raises(exc):
        parse_urdf(text)


def test_ignored_elements_warn(caplog):
    text = "<robot name='r'><link name='a'><visual/></link><transmission/></robot>"
    m = parse_urdf(text)
    assert m.dof == 0
    assert "transmission" in caplog.text


def test_bad_queries():
    model = robot("arm6")
    with pytest.raises(DimensionMismatch):
        model.forward_kinematics(np.zeros(5))
    with pytest.raises(UnknownLink):
        model.link_pose(np.zeros(6), "nope")
    with pytest.raises(XmlError):
        load_urdf("/nonexistent.urdf")
