"""Rigid-body math, convex shape primitives and pairwise collision queries.

Conventions
-----------
* Quaternions are stored as ``(w, x, y, z)`` and always have unit norm.
* Roll/pitch/yaw angles follow the URDF convention ``R = Rz(yaw) Ry(pitch) Rx(roll)``.
* Lengths are meters, angles radians.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np

from .errors import UnsupportedPair

logger = logging.getLogger(__name__)

# Separation below this is treated as touching, not intersecting.
CONTACT_TOL = 1e-9


# --------------------------------------------------------------------------
# quaternion helpers


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(m: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns the quaternion with non-negative w."""
    m = np.asarray(m, dtype=float)
    tr = m[0, 0] + m[1, 1] + m[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2
        q = [0.25 * s, (m[2, 1] - m[1, 2]) / s, (m[0, 2] - m[2, 0]) / s, (m[1, 0] - m[0, 1]) / s]
    elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
        s = math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2]) * 2
        q = [(m[2, 1] - m[1, 2]) / s, 0.25 * s, (m[0, 1] + m[1, 0]) / s, (m[0, 2] + m[2, 0]) / s]
    elif m[1, 1] > m[2, 2]:
        s = math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2]) * 2
        q = [(m[0, 2] - m[2, 0]) / s, (m[0, 1] + m[1, 0]) / s, 0.25 * s, (m[1, 2] + m[2, 1]) / s]
    else:
        s = math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1]) * 2
        q = [(m[1, 0] - m[0, 1]) / s, (m[0, 2] + m[2, 0]) / s, (m[1, 2] + m[2, 1]) / s, 0.25 * s]
    q = np.array(q)
    q /= np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    return q


def axis_angle_to_quat(axis: Sequence[float], angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    n = np.linalg.norm(axis)
    if n == 0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = axis / n
    half = 0.5 * angle
    return np.concatenate([[math.cos(half)], math.sin(half) * axis])


def rpy_to_quat(roll: float, pitch: float, yaw: float) -> np.ndarray:
    cr, sr = math.cos(roll / 2), math.sin(roll / 2)
    cp, sp = math.cos(pitch / 2), math.sin(pitch / 2)
    cy, sy = math.cos(yaw / 2), math.sin(yaw / 2)
    return np.array(
        [
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        ]
    )


def quat_to_rpy(q: np.ndarray) -> tuple[float, float, float]:
    w, x, y, z = q
    roll = math.atan2(2 * (w * x + y * z), 1 - 2 * (x * x + y * y))
    pitch = math.asin(max(-1.0, min(1.0, 2 * (w * y - z * x))))
    yaw = math.atan2(2 * (w * z + x * y), 1 - 2 * (y * y + z * z))
    return roll, pitch, yaw


def rotation_angle(q: np.ndarray) -> float:
    """Geodesic angle of a unit quaternion's rotation, in [0, pi]."""
    return 2.0 * math.atan2(float(np.linalg.norm(q[1:])), abs(float(q[0])))


def rotation_error_vector(r_current: np.ndarray, r_target: np.ndarray) -> np.ndarray:
    """World-frame axis*angle that rotates ``r_current`` onto ``r_target``."""
    q = matrix_to_quat(r_target @ r_current.T)
    s = float(np.linalg.norm(q[1:]))
    if s < 1e-12:
        return 2.0 * q[1:]
    angle = 2.0 * math.atan2(s, q[0])
    return (angle / s) * q[1:]


def _as_vec3(v, name="vector") -> np.ndarray:
    a = np.array(v, dtype=float).reshape(-1)
    if a.shape != (3,):
        raise ValueError(f"{name} must have 3 components, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be finite")
    return a


# --------------------------------------------------------------------------
# Pose


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform: ``p_world = R @ p_local + translation``."""

    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))
    rotation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        t = _as_vec3(self.translation, "translation")
        q = np.array(self.rotation, dtype=float).reshape(-1)
        if q.shape != (4,) or not np.all(np.isfinite(q)):
            raise ValueError("rotation must be a finite quaternion (w, x, y, z)")
        n = np.linalg.norm(q)
        if n < 1e-12:
            raise ValueError("rotation quaternion has zero norm")
        if abs(n - 1.0) > 1e-15:
            q = q / n
        t.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "translation", t)
        object.__setattr__(self, "rotation", q)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_xyz_rpy(cls, xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(np.asarray(xyz, dtype=float), rpy_to_quat(*rpy))

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, 3].copy(), matrix_to_quat(m[:3, :3]))

    @classmethod
    def from_axis_angle(cls, axis, angle: float, translation=(0.0, 0.0, 0.0)) -> "Pose":
        return cls(np.asarray(translation, dtype=float), axis_angle_to_quat(axis, angle))

    @cached_property
    def rotation_matrix(self) -> np.ndarray:
        r = quat_to_matrix(self.rotation)
        r.flags.writeable = False
        return r

    @cached_property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix
        m[:3, 3] = self.translation
        m.flags.writeable = False
        return m

    def compose(self, other: "Pose") -> "Pose":
        q = quat_multiply(self.rotation, other.rotation)
        t = self.translation + self.rotation_matrix @ other.translation
        return Pose(t, q / np.linalg.norm(q))

    __matmul__ = compose

    def inverse(self) -> "Pose":
        q_inv = self.rotation * np.array([1.0, -1.0, -1.0, -1.0])
        t = -(self.rotation_matrix.T @ self.translation)
        return Pose(t, q_inv)

    def apply(self, points) -> np.ndarray:
        """Transform points of shape (3,) or (N, 3) into the parent frame."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation_matrix.T + self.translation

    def rotate(self, vectors) -> np.ndarray:
        return np.asarray(vectors, dtype=float) @ self.rotation_matrix.T

    def rpy(self) -> tuple[float, float, float]:
        return quat_to_rpy(self.rotation)

    def almost_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        if not np.allclose(self.translation, other.translation, atol=tol, rtol=0):
            return False
        # q and -q encode the same rotation
        d = min(np.abs(self.rotation - other.rotation).max(), np.abs(self.rotation + other.rotation).max())
        return bool(d <= tol)

    def __repr__(self):
        t = ", ".join(f"{v:.6g}" for v in self.translation)
        q = ", ".join(f"{v:.6g}" for v in self.rotation)
        return f"Pose(xyz=[{t}], quat_wxyz=[{q}])"


def compose_all(poses: Sequence[Pose]) -> Pose:
    out = Pose.identity()
    for p in poses:
        out = out.compose(p)
    return out


def random_pose(rng: np.random.Generator, scale: float = 1.0) -> Pose:
    """Uniformly random rotation with a Gaussian translation; used by tests and fixtures."""
    q = rng.normal(size=4)
    return Pose(rng.normal(scale=scale, size=3), q / np.linalg.norm(q))


# --------------------------------------------------------------------------
# shapes


@dataclass(frozen=True)
class Box:
    extents: tuple

    def __post_init__(self):
        e = tuple(float(v) for v in self.extents)
        if len(e) != 3 or min(e) <= 0 or not all(math.isfinite(v) for v in e):
            raise ValueError(f"box extents must be 3 positive numbers, got {self.extents}")
        object.__setattr__(self, "extents", e)

    @property
    def half(self) -> np.ndarray:
        return 0.5 * np.array(self.extents)

    def support(self, d: np.ndarray) -> np.ndarray:
        h = self.half
        return np.where(d >= 0, h, -h)

    def local_vertices(self) -> np.ndarray:
        h = self.half
        signs = np.array([[sx, sy, sz] for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)], dtype=float)
        return signs * h

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.half))


@dataclass(frozen=True)
class Sphere:
    radius: float

    def __post_init__(self):
        r = float(self.radius)
        if not (r > 0 and math.isfinite(r)):
            raise ValueError(f"sphere radius must be positive, got {self.radius}")
        object.__setattr__(self, "radius", r)

    def support(self, d: np.ndarray) -> np.ndarray:
        n = np.linalg.norm(d)
        if n == 0:
            return np.array([self.radius, 0.0, 0.0])
        return self.radius * d / n

    @property
    def bounding_radius(self) -> float:
        return self.radius


@dataclass(frozen=True)
class Cylinder:
    """Solid cylinder centered at the origin, axis along local z."""

    radius: float
    length: float

    def __post_init__(self):
        r, l = float(self.radius), float(self.length)
        if not (r > 0 and l > 0 and math.isfinite(r) and math.isfinite(l)):
            raise ValueError(f"cylinder radius/length must be positive, got {self.radius}, {self.length}")
        object.__setattr__(self, "radius", r)
        object.__setattr__(self, "length", l)

    def support(self, d: np.ndarray) -> np.ndarray:
        dxy = math.hypot(d[0], d[1])
        z = 0.5 * self.length if d[2] >= 0 else -0.5 * self.length
        if dxy < 1e-15:
            return np.array([0.0, 0.0, z])
        return np.array([self.radius * d[0] / dxy, self.radius * d[1] / dxy, z])

    @property
    def bounding_radius(self) -> float:
        return math.hypot(self.radius, 0.5 * self.length)


@dataclass(frozen=True, eq=False)
class ConvexMesh:
    """Convex polytope given by its vertices.

    Vertices that are not on the convex hull are dropped with a warning, so a
    non-convex input is replaced by its hull (a sound over-approximation).
    """

    vertices: np.ndarray
    source: str | None = None

    def __post_init__(self):
        from scipy.spatial import ConvexHull, QhullError

        v = np.array(self.vertices, dtype=float)
        if v.ndim != 2 or v.shape[1] != 3 or len(v) < 4:
            raise ValueError("mesh needs at least 4 vertices of 3 coordinates")
        if not np.all(np.isfinite(v)):
            raise ValueError("mesh vertices must be finite")
        try:
            hull = ConvexHull(v)
        except QhullError as exc:
            raise ValueError(f"mesh vertices are degenerate (coplanar?): {exc}") from None
        if len(hull.vertices) < len(v):
            logger.warning(
                "mesh %s is not convex (%d of %d vertices on hull); using its convex hull",
                self.source or "<inline>", len(hull.vertices), len(v),
            )
            v = v[np.sort(hull.vertices)]
            hull = ConvexHull(v)
        v.flags.writeable = False
        eq = hull.equations.copy()
        eq.flags.writeable = False
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "_equations", eq)

    @property
    def equations(self) -> np.ndarray:
        """Hull facets as rows ``(nx, ny, nz, offset)`` with ``n.x + offset <= 0`` inside."""
        return self._equations

    def support(self, d: np.ndarray) -> np.ndarray:
        return self.vertices[int(np.argmax(self.vertices @ d))]

    @property
    def bounding_radius(self) -> float:
        return float(np.linalg.norm(self.vertices, axis=1).max())

    def __eq__(self, other):
        return isinstance(other, ConvexMesh) and np.array_equal(self.vertices, other.vertices)

    def __hash__(self):
        return hash(self.vertices.tobytes())


Shape = Union[Box, Sphere, Cylinder, ConvexMesh]


# --------------------------------------------------------------------------
# axis-aligned bounding boxes


@dataclass(frozen=True, eq=False)
class AABB:
    min: np.ndarray
    max: np.ndarray

    def __post_init__(self):
        lo, hi = _as_vec3(self.min, "min"), _as_vec3(self.max, "max")
        if np.any(lo > hi):
            raise ValueError("AABB min must be <= max componentwise")
        object.__setattr__(self, "min", lo)
        object.__setattr__(self, "max", hi)

    def overlaps(self, other: "AABB", margin: float = 0.0) -> bool:
        return bool(np.all(self.min <= other.max + margin) and np.all(other.min <= self.max + margin))

    def contains(self, points, tol: float = 0.0) -> np.ndarray:
        p = np.atleast_2d(points)
        return np.all((p >= self.min - tol) & (p <= self.max + tol), axis=1)

    def union(self, other: "AABB") -> "AABB":
        return AABB(np.minimum(self.min, other.min), np.maximum(self.max, other.max))


def aabb_of(shape: Shape, pose: Pose) -> AABB:
    """Tight axis-aligned box around a posed shape."""
    r = pose.rotation_matrix
    c = pose.translation
    if isinstance(shape, Sphere):
        h = np.full(3, shape.radius)
    elif isinstance(shape, Box):
        h = np.abs(r) @ shape.half
    elif isinstance(shape, Cylinder):
        axis = r[:, 2]
        h = 0.5 * shape.length * np.abs(axis) + shape.radius * np.sqrt(np.maximum(0.0, 1.0 - axis**2))
    elif isinstance(shape, ConvexMesh):
        w = pose.apply(shape.vertices)
        return AABB(w.min(axis=0), w.max(axis=0))
    else:
        raise UnsupportedPair(f"no bounding box routine for {type(shape).__name__}")
    return AABB(c - h, c + h)


# --------------------------------------------------------------------------
# collision


class CollisionResult(NamedTuple):
    in_collision: bool
    distance: float


def _sphere_sphere(ra, ca, rb, cb) -> CollisionResult:
    d = float(np.linalg.norm(cb - ca)) - ra - rb
    return CollisionResult(d < -CONTACT_TOL, d)


def box_point_distance(half: np.ndarray, local_points: np.ndarray) -> np.ndarray:
    """Signed distance from points (box frame) to a box surface, negative inside."""
    q = np.abs(local_points) - half
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    inside = np.minimum(np.max(q, axis=-1), 0.0)
    return outside + inside


def _sphere_box(sphere: Sphere, ps: Pose, box: Box, pb: Pose) -> CollisionResult:
    local = pb.inverse().apply(ps.translation)
    d = float(box_point_distance(box.half, local)) - sphere.radius
    return CollisionResult(d < -CONTACT_TOL, d)


def _world_support(shape: Shape, pose: Pose) -> Callable[[np.ndarray], np.ndarray]:
    r = pose.rotation_matrix
    t = pose.translation
    rt = r.T
    if isinstance(shape, Sphere):
        # spheres enter GJK as their center; the radius is added back as a margin
        return lambda d: t
    return lambda d: r @ shape.support(rt @ d) + t


def collide(sa: Shape, pa: Pose, sb: Shape, pb: Pose) -> CollisionResult:
    """Pairwise collision query.

    ``distance`` is the separation when disjoint (>= 0) and negative when the
    shapes intersect; for non-analytic pairs the negative magnitude is only a
    projection-overlap estimate, the sign is what matters.
    """
    for s in (sa, sb):
        if not isinstance(s, (Box, Sphere, Cylinder, ConvexMesh)):
            raise UnsupportedPair(f"no narrow-phase routine for {type(s).__name__}")
    if isinstance(sa, Sphere) and isinstance(sb, Sphere):
        return _sphere_sphere(sa.radius, pa.translation, sb.radius, pb.translation)
    if isinstance(sa, Sphere) and isinstance(sb, Box):
        return _sphere_box(sa, pa, sb, pb)
    if isinstance(sa, Box) and isinstance(sb, Sphere):
        return _sphere_box(sb, pb, sa, pa)

    margin = (sa.radius if isinstance(sa, Sphere) else 0.0) + (sb.radius if isinstance(sb, Sphere) else 0.0)
    sup_a = _world_support(sa, pa)
    sup_b = _world_support(sb, pb)
    dist, touching_core = gjk_distance(sup_a, sup_b, pb.translation - pa.translation)
    if touching_core:
        # interiors that intersect overlap on every axis; zero overlap is face contact
        depth = _projection_overlap(sa, pa, sb, pb)
        return CollisionResult(depth > CONTACT_TOL, -depth)
    d = dist - margin
    return CollisionResult(d < -CONTACT_TOL, d)


def _projection_overlap(sa: Shape, pa: Pose, sb: Shape, pb: Pose) -> float:
    """Overlap of the shapes' projections on the center line (a penetration estimate)."""
    u = pb.translation - pa.translation
    n = np.linalg.norm(u)
    u = u / n if n > 1e-12 else np.array([1.0, 0.0, 0.0])
    def extent(shape, pose, d):
        if isinstance(shape, Sphere):
            return float(pose.translation @ d) + shape.radius
        return float((pose.rotation_matrix @ shape.support(pose.rotation_matrix.T @ d) + pose.translation) @ d)
    hi_a = extent(sa, pa, u)
    lo_b = -extent(sb, pb, -u)
    return max(0.0, hi_a - lo_b)


# --------------------------------------------------------------------------
# GJK distance on the Minkowski difference A - B


def _closest_on_segment(a, b):
    ab = b - a
    t = -float(a @ ab)
    if t <= 0:
        return a, [0]
    denom = float(ab @ ab)
    if t >= denom:
        return b, [1]
    return a + (t / denom) * ab, [0, 1]


def _closest_on_triangle(a, b, c):
    # Ericson, Real-Time Collision Detection 5.1.5, with the query point at the origin
    ab = b - a
    ac = c - a
    ap = -a
    d1 = float(ab @ ap)
    d2 = float(ac @ ap)
    if d1 <= 0 and d2 <= 0:
        return a, [0]
    bp = -b
    d3 = float(ab @ bp)
    d4 = float(ac @ bp)
    if d3 >= 0 and d4 <= d3:
        return b, [1]
    vc = d1 * d4 - d3 * d2
    if vc <= 0 and d1 >= 0 and d3 <= 0:
        v = d1 / (d1 - d3)
        return a + v * ab, [0, 1]
    cp = -c
    d5 = float(ab @ cp)
    d6 = float(ac @ cp)
    if d6 >= 0 and d5 <= d6:
        return c, [2]
    vb = d5 * d2 - d1 * d6
    if vb <= 0 and d2 >= 0 and d6 <= 0:
        w = d2 / (d2 - d6)
        return a + w * ac, [0, 2]
    va = d3 * d6 - d5 * d4
    if va <= 0 and (d4 - d3) >= 0 and (d5 - d6) >= 0:
        w = (d4 - d3) / ((d4 - d3) + (d5 - d6))
        return b + w * (c - b), [1, 2]
    denom = va + vb + vc
    if abs(denom) < 1e-300:
        return _closest_on_segment(a, b)
    v = vb / denom
    w = vc / denom
    return a + ab * v + ac * w, [0, 1, 2]


def _origin_outside_plane(a, b, c, d) -> bool:
    n = np.cross(b - a, c - a)
    sign_p = float(-a @ n)
    sign_d = float((d - a) @ n)
    return sign_p * sign_d < 0


def _closest_on_tetrahedron(pts):
    a, b, c, d = pts
    best = None
    best_idx = None
    best_d2 = math.inf
    inside = True
    for (i, j, k, l) in ((0, 1, 2, 3), (0, 2, 3, 1), (0, 3, 1, 2), (1, 3, 2, 0)):
        if _origin_outside_plane(pts[i], pts[j], pts[k], pts[l]):
            inside = False
            q, sub = _closest_on_triangle(pts[i], pts[j], pts[k])
            d2 = float(q @ q)
            if d2 < best_d2:
                best_d2 = d2
                best = q
                best_idx = [(i, j, k)[s] for s in sub]
    if inside:
        return np.zeros(3), [0, 1, 2, 3]
    return best, best_idx


def _closest_on_simplex(pts):
    n = len(pts)
    if n == 1:
        return pts[0], [0]
    if n == 2:
        return _closest_on_segment(pts[0], pts[1])
    if n == 3:
        return _closest_on_triangle(pts[0], pts[1], pts[2])
    return _closest_on_tetrahedron(pts)


def gjk_distance(support_a, support_b, initial_dir=None, max_iter: int = 64, rel_tol: float = 1e-12):
    """Distance between two convex sets given by world-frame support maps.

    Returns ``(distance, intersecting)``; ``intersecting`` is True when the
    origin lies in (or numerically on) the Minkowski difference.
    """
    d = np.array(initial_dir, dtype=float) if initial_dir is not None else np.array([1.0, 0.0, 0.0])
    if not np.any(d):
        d = np.array([1.0, 0.0, 0.0])
    v = support_a(d) - support_b(-d)
    simplex = [v]
    v_len2 = float(v @ v)
    for _ in range(max_iter):
        if v_len2 <= 1e-24:
            return 0.0, True
        w = support_a(-v) - support_b(v)
        # no further progress possible along -v
        if v_len2 - float(v @ w) <= rel_tol * max(v_len2, 1e-12) + 1e-18:
            return math.sqrt(v_len2), False
        if any(np.array_equal(w, s) for s in simplex):
            return math.sqrt(v_len2), False
        simplex.append(w)
        v_new, idx = _closest_on_simplex(simplex)
        simplex = [simplex[i] for i in idx]
        new_len2 = float(v_new @ v_new)
        if len(simplex) == 4:
            return 0.0, True
        if new_len2 >= v_len2:
            # numerical stall
            return math.sqrt(min(new_len2, v_len2)), False
        v, v_len2 = v_new, new_len2
    return math.sqrt(v_len2), v_len2 <= 1e-24


# --------------------------------------------------------------------------
# point sampling (used by sensing coverage checks and tests)


def sample_surface(shape: Shape, pose: Pose, n: int, rng: np.random.Generator) -> np.ndarray:
    """Points on the surface of a posed shape (area-weighted for boxes and cylinders)."""
    if isinstance(shape, Sphere):
        d = rng.normal(size=(n, 3))
        pts = shape.radius * d / np.linalg.norm(d, axis=1, keepdims=True)
    elif isinstance(shape, Box):
        h = shape.half
        areas = np.array([h[1] * h[2], h[0] * h[2], h[0] * h[1]])
        axis = rng.choice(3, size=n, p=areas / areas.sum())
        pts = rng.uniform(-1, 1, size=(n, 3)) * h
        sign = rng.choice([-1.0, 1.0], size=n)
        pts[np.arange(n), axis] = sign * h[axis]
    elif isinstance(shape, Cylinder):
        r, hl = shape.radius, 0.5 * shape.length
        side = 2 * math.pi * r * shape.length
        cap = math.pi * r * r
        on_side = rng.uniform(size=n) < side / (side + 2 * cap)
        theta = rng.uniform(0, 2 * math.pi, size=n)
        rad = np.where(on_side, r, r * np.sqrt(rng.uniform(size=n)))
        z = np.where(on_side, rng.uniform(-hl, hl, size=n), rng.choice([-hl, hl], size=n))
        pts = np.stack([rad * np.cos(theta), rad * np.sin(theta), z], axis=1)
    elif isinstance(shape, ConvexMesh):
        from scipy.spatial import ConvexHull

        hull = ConvexHull(shape.vertices)
        tri = shape.vertices[hull.simplices]
        area = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
        k = rng.choice(len(tri), size=n, p=area / area.sum())
        u, v = rng.uniform(size=(2, n))
        flip = u + v > 1
        u[flip], v[flip] = 1 - u[flip], 1 - v[flip]
        t = tri[k]
        pts = t[:, 0] + u[:, None] * (t[:, 1] - t[:, 0]) + v[:, None] * (t[:, 2] - t[:, 0])
    else:
        raise UnsupportedPair(f"cannot sample {type(shape).__name__}")
    return pose.apply(pts)
