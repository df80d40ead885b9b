"""Simulated depth cameras, point clouds and a binary-occupancy octree."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import PointOutOfRootRegion, SchemaError
from .geometry import AABB, Box, ConvexMesh, Cylinder, Pose, Shape, Sphere, aabb_of, collide
from .scene import Scene, pose_from_dict, pose_to_dict, read_yaml

DEFAULT_RESOLUTION = 0.05
MAX_DEPTH = 16


# --------------------------------------------------------------------------
# camera


@dataclass(frozen=True)
class CameraModel:
    """Pinhole depth camera; the pose is the optical frame (z forward, x right, y down)."""

    pose: Pose = field(default_factory=Pose.identity)
    width: int = 640
    height: int = 480
    fx: float = 570.0
    fy: float = 570.0
    cx: float = 319.5
    cy: float = 239.5
    min_range: float = 0.1
    max_range: float = 10.0

    def __post_init__(self):
        if int(self.width) < 1 or int(self.height) < 1:
            raise ValueError("camera width/height must be >= 1")
        if not (self.fx > 0 and self.fy > 0):
            raise ValueError("camera focal lengths must be positive")
        if not (0 <= self.min_range < self.max_range):
            raise ValueError("camera range must satisfy 0 <= min_range < max_range")

    @classmethod
    def look_at(cls, eye, target, up=(0.0, 0.0, 1.0), **intrinsics) -> "CameraModel":
        eye = np.asarray(eye, float)
        z = np.asarray(target, float) - eye
        z /= np.linalg.norm(z)
        x = np.cross(z, np.asarray(up, float))
        if np.linalg.norm(x) < 1e-9:
            x = np.cross(z, [1.0, 0.0, 0.0] if abs(z[0]) < 0.9 else [0.0, 1.0, 0.0])
        x /= np.linalg.norm(x)
        y = np.cross(z, x)
        m = np.eye(4)
        m[:3, :3] = np.stack([x, y, z], axis=1)
        m[:3, 3] = eye
        return cls(pose=Pose.from_matrix(m), **intrinsics)

    def ray_directions(self) -> np.ndarray:
        """Camera-frame ray directions with unit z, one per pixel (row-major)."""
        u, v = np.meshgrid(np.arange(self.width, dtype=float), np.arange(self.height, dtype=float))
        d = np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy, np.ones_like(u)], axis=-1)
        return d.reshape(-1, 3)


def camera_to_dict(cam: CameraModel) -> dict:
    return {
        "pose": pose_to_dict(cam.pose), "width": cam.width, "height": cam.height,
        "fx": cam.fx, "fy": cam.fy, "cx": cam.cx, "cy": cam.cy,
        "min_range": cam.min_range, "max_range": cam.max_range,
    }


def camera_from_dict(d: dict, where: str = "camera") -> CameraModel:
    if not isinstance(d, dict):
        raise SchemaError(where, "expected a mapping")
    intr = {k: d[k] for k in ("width", "height", "fx", "fy", "cx", "cy", "min_range", "max_range") if k in d}
    try:
        if "look_at" in d:
            la = d["look_at"]
            return CameraModel.look_at(la["eye"], la["target"], la.get("up", (0, 0, 1)), **intr)
        return CameraModel(pose=pose_from_dict(d.get("pose"), f"{where}.pose"), **intr)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(where, str(exc)) from None


def load_cameras(path: str) -> list[CameraModel]:
    data = read_yaml(path) or {}
    cams = data.get("cameras") if isinstance(data, dict) else None
    if not cams:
        raise SchemaError("cameras", "at least one camera is required", path)
    return [camera_from_dict(c, f"cameras[{i}]") for i, c in enumerate(cams)]


# --------------------------------------------------------------------------
# ray casting (all vectorized over rays, local shape frame)


def _ray_sphere(o, d, r):
    b = d @ o
    a = np.einsum("ij,ij->i", d, d)
    c = o @ o - r * r
    disc = b * b - a * c
    hit = disc >= 0
    sq = np.sqrt(np.where(hit, disc, 0.0))
    t0 = (-b - sq) / a
    t1 = (-b + sq) / a
    t = np.where(t0 >= 0, t0, t1)
    return np.where(hit & (t >= 0), t, np.inf)


def _slab(o, d, lo, hi):
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / d
        t1 = (lo - o) * inv
        t2 = (hi - o) * inv
    tmin = np.minimum(t1, t2)
    tmax = np.maximum(t1, t2)
    parallel = d == 0
    inside = (o >= lo) & (o <= hi)
    tmin = np.where(parallel, np.where(inside, -np.inf, np.inf), tmin)
    tmax = np.where(parallel, np.where(inside, np.inf, -np.inf), tmax)
    return tmin, tmax


def _ray_box(o, d, half):
    tmin, tmax = _slab(o, d, -half, half)
    tn = tmin.max(axis=1)
    tf = tmax.min(axis=1)
    hit = (tn <= tf) & (tf >= 0)
    t = np.where(tn >= 0, tn, tf)
    return np.where(hit, t, np.inf)


def _ray_cylinder(o, d, r, length):
    h = 0.5 * length
    best = np.full(len(d), np.inf)
    a = d[:, 0] ** 2 + d[:, 1] ** 2
    b = o[0] * d[:, 0] + o[1] * d[:, 1]
    c = o[0] ** 2 + o[1] ** 2 - r * r
    disc = b * b - a * c
    ok = (a > 1e-300) & (disc >= 0)
    sq = np.sqrt(np.where(ok, disc, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        for t in ((-b - sq) / a, (-b + sq) / a):
            z = o[2] + t * d[:, 2]
            valid = ok & (t >= 0) & (np.abs(z) <= h)
            best = np.where(valid & (t < best), t, best)
        for zc in (-h, h):
            t = (zc - o[2]) / d[:, 2]
            x = o[0] + t * d[:, 0]
            y = o[1] + t * d[:, 1]
            valid = (d[:, 2] != 0) & (t >= 0) & (x * x + y * y <= r * r)
            best = np.where(valid & (t < best), t, best)
    return best


def _ray_convex(o, d, equations):
    n = equations[:, :3]
    off = equations[:, 3]
    denom = d @ n.T  # (R, F)
    num = -(n @ o + off)  # (F,)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num[None, :] / denom
    entering = denom < 0
    leaving = denom > 0
    t_enter = np.where(entering, t, -np.inf).max(axis=1)
    t_exit = np.where(leaving, t, np.inf).min(axis=1)
    blocked = ((denom == 0) & (num[None, :] < 0)).any(axis=1)
    hit = (t_enter <= t_exit) & (t_exit >= 0) & ~blocked
    tt = np.where(t_enter >= 0, t_enter, t_exit)
    return np.where(hit, tt, np.inf)


def ray_cast(shape: Shape, pose: Pose, origin: np.ndarray, dirs: np.ndarray) -> np.ndarray:
    """Ray parameter of the first surface hit per ray (``inf`` on miss)."""
    inv = pose.inverse()
    o = inv.apply(origin)
    d = inv.rotate(dirs)
    if isinstance(shape, Sphere):
        return _ray_sphere(o, d, shape.radius)
    if isinstance(shape, Box):
        return _ray_box(o, d, shape.half)
    if isinstance(shape, Cylinder):
        return _ray_cylinder(o, d, shape.radius, shape.length)
    if isinstance(shape, ConvexMesh):
        return _ray_convex(o, d, shape.equations)
    raise TypeError(f"cannot ray cast {type(shape).__name__}")


# --------------------------------------------------------------------------
# point clouds


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    source_camera: CameraModel | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise ValueError("point cloud contains non-finite points")
        p.flags.writeable = False
        object.__setattr__(self, "points", p)

    def __len__(self):
        return len(self.points)

    @staticmethod
    def concatenate(clouds: Sequence["PointCloud"]) -> "PointCloud":
        if not clouds:
            return PointCloud()
        return PointCloud(np.concatenate([c.points for c in clouds], axis=0))


def render_depth(scene: Scene, camera: CameraModel) -> PointCloud:
    """Cast one ray per pixel and back-project the nearest in-range hit."""
    dirs_cam = camera.ray_directions()
    origin = camera.pose.translation
    dirs = camera.pose.rotate(dirs_cam)
    best = np.full(len(dirs), np.inf)
    to_cam = camera.pose.inverse()
    for _, shape, pose in scene.collision_objects():
        # objects wholly behind the camera or beyond max range cannot produce a visible hit
        center_cam = to_cam.apply(pose.translation)
        if center_cam[2] + shape.bounding_radius < 0:
            continue
        if center_cam[2] - shape.bounding_radius > camera.max_range:
            continue
        t = ray_cast(shape, pose, origin, dirs)
        np.minimum(best, t, out=best)
    # t is depth along the optical axis because camera-frame directions have unit z
    keep = np.isfinite(best) & (best >= camera.min_range) & (best <= camera.max_range)
    pts = origin + best[keep, None] * dirs[keep]
    return PointCloud(pts, camera)


# --------------------------------------------------------------------------
# octree


def _part1by2(x: int) -> int:
    out = 0
    for b in range(MAX_DEPTH + 1):
        out |= ((x >> b) & 1) << (3 * b)
    return out


class OcTree:
    """Occupancy-only octree over a world-aligned voxel grid.

    Leaves are cubes of edge ``resolution``; leaf ``(i, j, k)`` covers
    ``[i*res, (i+1)*res) x ...``.  The root is a cube of ``2**depth`` leaves per
    axis that grows (doubling) to include new points.  A leaf is occupied iff
    at least one inserted point fell into it.
    """

    def __init__(self, resolution: float = DEFAULT_RESOLUTION):
        if not (resolution > 0 and math.isfinite(resolution)):
            raise ValueError(f"resolution must be positive, got {resolution}")
        self.resolution = float(resolution)
        self.depth = 1
        self.origin = np.array([-1, -1, -1], dtype=np.int64)
        self._leaves: set[tuple[int, int, int]] = set()
        self._levels: list[set] | None = None
        self._array: np.ndarray | None = None

    # -- construction ----------------------------------------------------

    def voxel_index(self, points) -> np.ndarray:
        p = np.atleast_2d(np.asarray(points, dtype=float))
        return np.floor(p / self.resolution).astype(np.int64)

    def _grow_to(self, idx: np.ndarray):
        lo = idx.min(axis=0)
        hi = idx.max(axis=0)
        while True:
            size = 1 << self.depth
            below = lo < self.origin
            above = hi >= self.origin + size
            if not (below.any() or above.any()):
                return
            if self.depth >= MAX_DEPTH:
                raise PointOutOfRootRegion(
                    f"point outside root region and the tree cannot grow beyond 2^{MAX_DEPTH} leaves per axis"
                )
            self.origin = np.where(below, self.origin - size, self.origin)
            self.depth += 1

    def insert_points(self, points) -> int:
        """Insert a batch of points; returns the number of newly occupied leaves."""
        p = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(p) == 0:
            return 0
        idx = self.voxel_index(p)
        self._grow_to(idx)
        before = len(self._leaves)
        self._leaves.update(map(tuple, np.unique(idx, axis=0).tolist()))
        self._levels = None
        self._array = None
        return len(self._leaves) - before

    def insert_cloud(self, cloud: PointCloud) -> int:
        return self.insert_points(cloud.points)

    def insert_leaf_indices(self, idx) -> None:
        idx = np.asarray(idx, dtype=np.int64).reshape(-1, 3)
        if len(idx):
            self._grow_to(idx)
            self._leaves.update(map(tuple, idx.tolist()))
            self._levels = None
            self._array = None

    # -- queries ---------------------------------------------------------

    def __len__(self):
        return len(self._leaves)

    @property
    def occupied(self) -> frozenset:
        return frozenset(self._leaves)

    @property
    def root_region(self) -> AABB:
        size = (1 << self.depth) * self.resolution
        lo = self.origin * self.resolution
        return AABB(lo, lo + size)

    def morton_key(self, index) -> int:
        """Depth-first (Morton) key of a leaf relative to the root corner."""
        rel = np.asarray(index, dtype=np.int64) - self.origin
        return _part1by2(int(rel[0])) | (_part1by2(int(rel[1])) << 1) | (_part1by2(int(rel[2])) << 2)

    def leaf_indices(self) -> np.ndarray:
        """Occupied leaf indices in depth-first order, shape (M, 3)."""
        if self._array is None:
            if not self._leaves:
                self._array = np.zeros((0, 3), dtype=np.int64)
            else:
                arr = np.array(sorted(self._leaves), dtype=np.int64)
                keys = np.array([self.morton_key(i) for i in arr], dtype=object)
                order = np.argsort(keys, kind="stable")
                self._array = arr[order]
            self._array.flags.writeable = False
        return self._array

    def leaf_centers(self) -> np.ndarray:
        return (self.leaf_indices() + 0.5) * self.resolution

    def is_occupied(self, index) -> bool:
        return tuple(int(v) for v in index) in self._leaves

    def contains_point(self, point) -> bool:
        return self.is_occupied(self.voxel_index(point)[0])

    def leaf_box(self) -> Box:
        return Box((self.resolution,) * 3)

    def _level_sets(self) -> list[set]:
        if self._levels is None:
            rel = np.array(sorted(self._leaves), dtype=np.int64).reshape(-1, 3) - self.origin
            self._levels = [
                set(map(tuple, np.unique(rel >> (self.depth - lvl), axis=0).tolist()))
                for lvl in range(self.depth + 1)
            ]
        return self._levels

    def leaves_in_aabb(self, box: AABB) -> np.ndarray:
        """Occupied leaves whose cube overlaps ``box`` (top-down traversal)."""
        if not self._leaves:
            return np.zeros((0, 3), dtype=np.int64)
        lo = np.floor(box.min / self.resolution).astype(np.int64) - self.origin
        hi = np.floor(box.max / self.resolution).astype(np.int64) - self.origin
        size = 1 << self.depth
        if np.any(hi < 0) or np.any(lo >= size):
            return np.zeros((0, 3), dtype=np.int64)
        levels = self._level_sets()
        out = []
        stack = [(0, (0, 0, 0))]
        while stack:
            lvl, node = stack.pop()
            if node not in levels[lvl]:
                continue
            shift = self.depth - lvl
            nlo = np.array(node) << shift
            nhi = nlo + (1 << shift) - 1
            if np.any(nhi < lo) or np.any(nlo > hi):
                continue
            if lvl == self.depth:
                out.append(nlo)
                continue
            x, y, z = node
            for c in range(8):
                stack.append((lvl + 1, (2 * x + (c >> 2 & 1), 2 * y + (c >> 1 & 1), 2 * z + (c & 1))))
        if not out:
            return np.zeros((0, 3), dtype=np.int64)
        return np.array(out, dtype=np.int64) + self.origin

    def copy(self) -> "OcTree":
        t = OcTree(self.resolution)
        t.depth = self.depth
        t.origin = self.origin.copy()
        t._leaves = set(self._leaves)
        return t

    def without_leaves(self, indices) -> "OcTree":
        t = self.copy()
        for i in np.asarray(indices, dtype=np.int64).reshape(-1, 3):
            t._leaves.discard(tuple(int(v) for v in i))
        return t

    def __eq__(self, other):
        return isinstance(other, OcTree) and self.resolution == other.resolution and self._leaves == other._leaves

    def __repr__(self):
        return f"OcTree(resolution={self.resolution}, leaves={len(self)}, depth={self.depth})"


def build_octree(clouds: Iterable[PointCloud], resolution: float = DEFAULT_RESOLUTION) -> OcTree:
    tree = OcTree(resolution)
    for c in clouds:
        tree.insert_cloud(c)
    return tree


def octree_collision(shape: Shape, pose: Pose, tree: OcTree) -> bool:
    """True iff the posed shape intersects any occupied leaf cube."""
    if tree is None or len(tree) == 0:
        return False
    leaves = tree.leaves_in_aabb(aabb_of(shape, pose))
    if len(leaves) == 0:
        return False
    cube = tree.leaf_box()
    for c in (leaves + 0.5) * tree.resolution:
        if collide(shape, pose, cube, Pose(c)).in_collision:
            return True
    return False


class SensingResult(NamedTuple):
    cloud: PointCloud
    octree: OcTree
    scene: Scene


def sense_scene(scene: Scene, cameras: Sequence[CameraModel], resolution: float = DEFAULT_RESOLUTION) -> SensingResult:
    """Render every camera, merge the clouds and build their octree."""
    if not cameras:
        raise ValueError("at least one camera is required")
    clouds = [render_depth(scene, cam) for cam in cameras]
    merged = PointCloud.concatenate(clouds)
    tree = build_octree([merged], resolution)
    return SensingResult(merged, tree, scene.with_point_cloud(merged).with_octree(tree))


# --------------------------------------------------------------------------
# file formats


def save_ply(cloud: PointCloud, path: str) -> None:
    lines = [
        "ply", "format ascii 1.0", f"element vertex {len(cloud)}",
        "property double x", "property double y", "property double z", "end_header",
    ]
    lines += [" ".join(repr(float(v)) for v in p) for p in cloud.points]
    _write_text(path, "\n".join(lines) + "\n")


def load_ply(path: str) -> PointCloud:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != "ply":
        raise SchemaError("ply", "missing 'ply' magic", path)
    n = None
    end = None
    for i, line in enumerate(lines):
        parts = line.split()
        if parts[:2] == ["format", "binary_little_endian"] or parts[:2] == ["format", "binary_big_endian"]:
            raise SchemaError("format", "only ASCII PLY is supported", path)
        if parts[:2] == ["element", "vertex"]:
            n = int(parts[2])
        if line.strip() == "end_header":
            end = i
            break
    if n is None or end is None:
        raise SchemaError("header", "missing vertex element or end_header", path)
    body = lines[end + 1:end + 1 + n]
    if len(body) != n:
        raise SchemaError("vertex", f"expected {n} vertices, found {len(body)}", path)
    pts = np.array([[float(v) for v in l.split()[:3]] for l in body], dtype=float).reshape(-1, 3)
    return PointCloud(pts)


def save_octree(tree: OcTree, path: str) -> None:
    lines = [f"resolution {tree.resolution!r}"]
    lines += [" ".join(repr(float(v)) for v in c) for c in tree.leaf_centers()]
    _write_text(path, "\n".join(lines) + "\n")


def load_octree(path: str) -> OcTree:
    with open(path) as fh:
        lines = [l for l in fh.read().splitlines() if l.strip()]
    if not lines or not lines[0].startswith("resolution"):
        raise SchemaError("resolution", "missing header", path)
    res = float(lines[0].split()[1])
    tree = OcTree(res)
    if len(lines) > 1:
        centers = np.array([[float(v) for v in l.split()] for l in lines[1:]], dtype=float)
        tree.insert_leaf_indices(np.rint(centers / res - 0.5).astype(np.int64))
    return tree


def _write_text(path: str, text: str) -> None:
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
