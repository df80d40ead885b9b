import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from planforge.geometry import (AABB, Box, ConvexMesh, Cylinder, Pose, Sphere, aabb_of, collide, quat_to_rpy,
                                random_pose, rpy_to_quat, rotation_angle)
from planforge.errors import UnsupportedPair

angles = st.floats(-math.pi, math.pi, allow_nan=False)


def _as_scipy(q):
    w, x, y, z = q
    return Rotation.from_quat([x, y, z, w])


@given(angles, st.floats(-1.5, 1.5), angles)
def test_rpy_matches_extrinsic_xyz(r, p, y):
    # URDF rpy is Rz(yaw) Ry(pitch) Rx(roll), i.e. extrinsic x-y-z
    ours = Pose(np.zeros(3), rpy_to_quat(r, p, y)).rotation_matrix
    ref = Rotation.from_euler("xyz", [r, p, y]).as_matrix()
    assert np.allclose(ours, ref, atol=1e-12)
    back = quat_to_rpy(rpy_to_quat(r, p, y))
    assert np.allclose(Pose(np.zeros(3), rpy_to_quat(*back)).rotation_matrix, ref, atol=1e-9)


@settings(max_examples=50)
@given(st.integers(0, 2**32 - 1))
def test_compose_and_inverse_match_matrices(seed):
    rng = np.random.default_rng(seed)
    a, b = random_pose(rng), random_pose(rng)
    assert np.allclose((a @ b).matrix, a.matrix @ b.matrix, atol=1e-12)
    assert np.allclose(a.inverse().matrix, np.linalg.inv(a.matrix), atol=1e-12)
    assert (a @ a.inverse()).almost_equal(Pose.identity(), 1e-12)
    assert abs(np.linalg.norm(a.rotation) - 1.0) < 1e-12


def test_rotation_angle_against_scipy():
    rng = np.random.default_rng(4)
    for _ in range(100):
        q = random_pose(rng).rotation
        assert rotation_angle(q) == pytest.approx(_as_scipy(q).magnitude(), abs=1e-9)


def test_apply_and_from_matrix_round_trip():
    p = Pose.from_xyz_rpy((0.1, -0.2, 0.3), (0.4, -0.5, 0.6))
    pts = np.array([[1.0, 0.0, 0.0], [0.0, 2.0, -1.0]])
    ref = (p.matrix @ np.c_[pts, np.ones(2)].T).T[:, :3]
    assert np.allclose(p.apply(pts), ref)
    assert Pose.from_matrix(p.matrix).almost_equal(p, 1e-12)


# -- collision ----------------------------------------------------------------


def _sat_boxes(ea, pa, eb, pb):
    """Separating-axis oracle for two oriented boxes (True when overlapping)."""
    ra, rb = pa.rotation_matrix, pb.rotation_matrix
    ha, hb = 0.5 * np.asarray(ea), 0.5 * np.asarray(eb)
    t = pb.translation - pa.translation
    axes = [ra[:, i] for i in range(3)] + [rb[:, i] for i in range(3)]
    axes += [np.cross(ra[:, i], rb[:, j]) for i in range(3) for j in range(3)]
    for ax in axes:
        n = np.linalg.norm(ax)
        if n < 1e-9:
            continue
        ax = ax / n
        pa_r = np.sum(ha * np.abs(ra.T @ ax))
        pb_r = np.sum(hb * np.abs(rb.T @ ax))
        if abs(t @ ax) > pa_r + pb_r + 1e-12:
            return False
    return True


def test_box_box_against_separating_axis_oracle():
    rng = np.random.default_rng(11)
    agree = 0
    for _ in range(400):
        ea, eb = rng.uniform(0.1, 1.0, 3), rng.uniform(0.1, 1.0, 3)
        pa = Pose(rng.uniform(-0.5, 0.5, 3), random_pose(rng).rotation)
        pb = Pose(rng.uniform(-0.5, 0.5, 3), random_pose(rng).rotation)
        assert collide(Box(ea), pa, Box(eb), pb).in_collision == _sat_boxes(ea, pa, eb, pb)
        agree += 1
    assert agree == 400


def test_sphere_box_distance_is_exact():
    box = Box((2.0, 2.0, 2.0))
    r = collide(Sphere(0.5), Pose((3.0, 0.0, 0.0)), box, Pose.identity())
    assert not r.in_collision
    assert r.distance == pytest.approx(1.5, abs=1e-12)
    corner = collide(Sphere(0.1), Pose((2.0, 2.0, 1.0)), box, Pose.identity())
    assert corner.distance == pytest.approx(math.sqrt(2) - 0.1, abs=1e-12)


def test_touching_is_not_collision():
    r = collide(Sphere(0.5), Pose((1.0, 0.0, 0.0)), Sphere(0.5), Pose.identity())
    assert not r.in_collision
    assert collide(Box((1, 1, 1)), Pose((1.0, 0, 0)), Box((1, 1, 1)), Pose.identity()).in_collision is False


def _inside_cylinder(pts, r, length):
    return (pts[:, 0] ** 2 + pts[:, 1] ** 2 <= r * r) & (np.abs(pts[:, 2]) <= length / 2)


def test_cylinder_sphere_against_point_membership():
    # a sphere hits the cylinder iff some point of the cylinder lies within the radius
    rng = np.random.default_rng(5)
    cyl = Cylinder(0.2, 0.6)
    grid = rng.uniform([-0.2, -0.2, -0.3], [0.2, 0.2, 0.3], size=(60000, 3))
    grid = grid[_inside_cylinder(grid, 0.2, 0.6)]
    checked = 0
    for _ in range(200):
        c = rng.uniform(-0.6, 0.6, 3)
        rad = 0.15
        d = np.linalg.norm(grid - c, axis=1).min() - rad
        if abs(d) < 0.02:
            continue  # too close to call from a finite sample
        assert collide(Sphere(rad), Pose(c), cyl, Pose.identity()).in_collision == (d < 0)
        checked += 1
    assert checked > 100


def test_convex_mesh_matches_equivalent_box():
    verts = np.array([[x, y, z] for x in (-0.5, 0.5) for y in (-0.25, 0.25) for z in (-0.1, 0.1)])
    mesh = ConvexMesh(verts)
    box = Box((1.0, 0.5, 0.2))
    rng = np.random.default_rng(9)
    for _ in range(200):
        other = Pose(rng.uniform(-1, 1, 3), random_pose(rng).rotation)
        s = Sphere(0.2)
        assert collide(mesh, Pose.identity(), s, other).in_collision == \
            collide(box, Pose.identity(), s, other).in_collision


def test_nonconvex_mesh_replaced_by_hull(caplog):
    verts = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1], [0.1, 0.1, 0.1]], dtype=float)
    m = ConvexMesh(verts)
    assert len(m.vertices) == 4
    assert "not convex" in caplog.text


def test_aabb_contains_shape_samples():
    rng = np.random.default_rng(2)
    for shape in (Box((0.3, 0.2, 0.1)), Sphere(0.2), Cylinder(0.1, 0.4)):
        pose = random_pose(rng)
        box = aabb_of(shape, pose)
        local = rng.uniform(-0.25, 0.25, size=(4000, 3))
        if isinstance(shape, Box):
            inside = np.all(np.abs(local) <= shape.half, axis=1)
        elif isinstance(shape, Sphere):
            inside = np.linalg.norm(local, axis=1) <= 0.2
        else:
            inside = _inside_cylinder(local, 0.1, 0.4)
        assert np.all(box.contains(pose.apply(local[inside]), tol=1e-12))


def test_unsupported_shape_raises():
    with pytest.raises(UnsupportedPair):
        collide(object(), Pose.identity(), Sphere(1.0), Pose.identity())


def test_invalid_shapes_rejected():
    with pytest.raises(ValueError):
        Box((1.0, -1.0, 1.0))
    with pytest.raises(ValueError):
        ConvexMesh(np.zeros((4, 3)))
    assert AABB(np.zeros(3), np.ones(3)).overlaps(AABB(np.full(3, 0.5), np.full(3, 2.0)))
