import itertools

import numpy as np
import pytest

from planforge.errors import PointOutOfRootRegion
from planforge.geometry import AABB, Box, Cylinder, Pose, Sphere, random_pose
from planforge.sampler import load_variation_spec, variation
from planforge.scene import Scene, SceneObject
from planforge.sensing import (CameraModel, OcTree, PointCloud, build_octree, load_cameras, load_octree, load_ply,
                               octree_collision, render_depth, save_octree, save_ply, sense_scene)

from conftest import config
from oracles import ray_sphere_hits

NEIGHBORS = np.array(list(itertools.product((-1, 0, 1), repeat=3)))


def pixel_rays(cam):
    """World ray directions straight from the pinhole intrinsics."""
    v, u = np.divmod(np.arange(cam.width * cam.height), cam.width)
    local = np.stack([(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, np.ones(len(u))], axis=1)
    return local @ cam.pose.rotation_matrix.T


def front_face_coverage(scene, tree, names, n=25):
    """Share of samples on the -x faces of ``names`` within one voxel of an occupied leaf."""
    hits = total = 0
    u = np.linspace(-1, 1, n)
    for name in names:
        h = scene.object(name).shape.half
        pts = scene.world_pose(name).apply(np.array([[-h[0], a * h[1], b * h[2]] for a in u for b in u]))
        for idx in tree.voxel_index(pts):
            total += 1
            hits += any(tree.is_occupied(idx + o) for o in NEIGHBORS)
    return hits / total


@pytest.mark.parametrize("center,radius", [((0, 0, 2.0), 0.5), ((0.3, -0.2, 1.5), 0.2), ((1.0, 1.0, 3.0), 0.7)])
def test_ray_sphere_hit_count_is_exact(center, radius):
    cam = CameraModel(width=80, height=60, fx=60.0, fy=60.0, cx=39.5, cy=29.5, min_range=0.0, max_range=100.0)
    s = Scene([SceneObject("ball", Sphere(radius), Pose(center))])
    cloud = render_depth(s, cam)
    assert len(cloud) == ray_sphere_hits(np.zeros(3), pixel_rays(cam), np.array(center, float), radius)
    assert np.allclose(np.linalg.norm(cloud.points - center, axis=1), radius, atol=1e-9)


def test_ray_hits_lie_on_surfaces():
    cam = CameraModel.look_at((2.0, 0.3, 1.0), (0, 0, 0), width=64, height=48, fx=50, fy=50, cx=31.5, cy=23.5)
    box = Box((0.5, 0.4, 0.3))
    cyl = Cylinder(0.2, 0.5)
    pb, pc = Pose.from_xyz_rpy((0, 0, 0), (0.2, 0.1, 0.3)), Pose((0, -0.8, 0))
    s = Scene([SceneObject("b", box, pb), SceneObject("c", cyl, pc)])
    pts = render_depth(s, cam).points
    assert len(pts) > 100
    lb = pb.inverse().apply(pts)
    on_box = np.abs(np.max(np.abs(lb) / box.half, axis=1) - 1.0) < 1e-6
    lc = pc.inverse().apply(pts)
    rad = np.hypot(lc[:, 0], lc[:, 1])
    on_cyl = ((np.abs(rad - 0.2) < 1e-6) & (np.abs(lc[:, 2]) <= 0.25 + 1e-9)) | \
             ((np.abs(np.abs(lc[:, 2]) - 0.25) < 1e-6) & (rad <= 0.2 + 1e-9))
    assert np.all(on_box | on_cyl)


def test_depth_range_gating():
    s = Scene([SceneObject("ball", Sphere(0.5), Pose((0, 0, 5.0)))])
    cam = CameraModel(width=20, height=20, fx=20, fy=20, cx=9.5, cy=9.5, max_range=4.0)
    assert len(render_depth(s, cam)) == 0


def test_every_cloud_point_in_an_occupied_leaf(shelf):
    res = sense_scene(shelf, load_cameras(config("shelf_cameras.yaml")), 0.05)
    assert len(res.cloud) > 1000
    occupied = res.octree.occupied
    for idx in res.octree.voxel_index(res.cloud.points):
        assert tuple(idx) in occupied


@pytest.mark.parametrize("index", [None, 0, 4, 9])
def test_shelf_front_face_coverage(shelf, index):
    s = shelf
    if index is not None:
        s = variation(shelf, load_variation_spec(config("shelf_variations.yaml"), shelf), 7, index)
    tree = sense_scene(s, load_cameras(config("shelf_cameras.yaml")), 0.05).octree
    names = [n for n in s.object_names if n.startswith("shelf")]
    assert front_face_coverage(s, tree, names) >= 0.95


def test_octree_queries_match_brute_force():
    rng = np.random.default_rng(0)
    tree = OcTree(0.1)
    pts = rng.uniform(-2, 2, size=(3000, 3))
    tree.insert_points(pts)
    assert tree.occupied == {tuple(i) for i in np.floor(pts / 0.1).astype(int).tolist()}
    for _ in range(20):
        lo = rng.uniform(-2.5, 2, 3)
        box = AABB(lo, lo + rng.uniform(0.05, 1.5, 3))
        got = {tuple(i) for i in tree.leaves_in_aabb(box).tolist()}
        want = {i for i in tree.occupied
                if np.all(np.array(i) * 0.1 <= box.max) and np.all((np.array(i) + 1) * 0.1 >= box.min)}
        assert got == want


def test_leaf_order_is_depth_first():
    tree = OcTree(1.0)
    tree.insert_points(np.random.default_rng(1).uniform(-4, 4, size=(200, 3)))
    keys = [tree.morton_key(i) for i in tree.leaf_indices()]
    assert keys == sorted(keys)


def test_octree_growth_limit():
    tree = OcTree(0.05)
    tree.insert_points([[100.0, 0, 0]])
    assert tree.root_region.contains(np.array([[100.0, 0, 0]])).all()
    with pytest.raises(PointOutOfRootRegion):
        tree.insert_points([[1e9, 0, 0]])


def test_octree_collision_is_conservative():
    rng = np.random.default_rng(3)
    pts = rng.uniform(-1, 1, size=(500, 3))
    tree = build_octree([PointCloud(pts)], 0.05)
    for _ in range(200):
        pose = random_pose(rng)
        shape = Sphere(rng.uniform(0.02, 0.2))
        if np.any(np.linalg.norm(pts - pose.translation, axis=1) < shape.radius):
            assert octree_collision(shape, pose, tree)
    assert not octree_collision(Sphere(0.1), Pose((5.0, 5.0, 5.0)), tree)


def test_file_round_trips(tmp_path, shelf):
    res = sense_scene(shelf, load_cameras(config("shelf_cameras.yaml")), 0.05)
    save_ply(res.cloud, str(tmp_path / "c.ply"))
    assert np.array_equal(load_ply(str(tmp_path / "c.ply")).points, res.cloud.points)
    save_octree(res.octree, str(tmp_path / "o.txt"))
    back = load_octree(str(tmp_path / "o.txt"))
    assert back == res.octree
    assert np.array_equal(back.leaf_indices(), res.octree.leaf_indices())


def test_sensed_only_scene_keeps_octree(shelf):
    res = sense_scene(shelf, load_cameras(config("shelf_cameras.yaml")), 0.05)
    sensed = res.scene.sensed_only()
    assert len(sensed) == 0 and sensed.octree is res.octree
