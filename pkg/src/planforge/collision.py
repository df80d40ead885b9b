"""Robot state validity: joint limits, self-collision and robot-vs-scene collision.

Robot links made of spheres are checked in vectorized batches against boxes,
spheres, cylinders and octree leaves; any other pairing goes through
:func:`planforge.geometry.collide` after an AABB cull.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import AABB, CONTACT_TOL, Box, Cylinder, Pose, Shape, Sphere, aabb_of, collide
from .kinematics import KinematicModel
from .scene import Scene
from .sensing import OcTree, octree_collision


@dataclass(frozen=True)
class Attachment:
    """A scene object welded to a robot link for the duration of a motion."""

    object_name: str
    shape: Shape
    link: str
    link_to_object: Pose = field(default_factory=Pose.identity)
    world_pose: Pose | None = None  # pose in the scene when it was picked up
    touch_links: frozenset = frozenset()


class CollisionChecker:
    """Validity checks for one robot in one scene (read-only, reusable)."""

    def __init__(self, model: KinematicModel, scene: Scene | None = None,
                 attachments: Sequence[Attachment] = (), check_self: bool = True):
        self.model = model
        self.scene = scene if scene is not None else Scene()
        self.attachments = tuple(attachments)
        self.check_self = check_self
        attached = {a.object_name for a in self.attachments}
        self._obstacles = [(n, s, p) for n, s, p in self.scene.collision_objects() if n not in attached]
        self._octree = self.scene.octree if self.scene.octree is not None and len(self.scene.octree) else None
        if self._octree is not None and self.attachments:
            self._octree = _clear_attached(self._octree, self.attachments)
        self._prepare_obstacles()
        self._prepare_robot()

    # -- setup -----------------------------------------------------------

    def _prepare_obstacles(self):
        boxes, spheres, cyls, other = [], [], [], []
        for name, shape, pose in self._obstacles:
            if isinstance(shape, Box):
                boxes.append((shape, pose))
            elif isinstance(shape, Sphere):
                spheres.append((shape, pose))
            elif isinstance(shape, Cylinder):
                cyls.append((shape, pose))
            else:
                other.append((name, shape, pose, aabb_of(shape, pose)))
        self._box_rot = np.array([p.rotation_matrix for _, p in boxes]).reshape(-1, 3, 3)
        self._box_pos = np.array([p.translation for _, p in boxes]).reshape(-1, 3)
        self._box_half = np.array([s.half for s, _ in boxes]).reshape(-1, 3)
        self._sph_pos = np.array([p.translation for _, p in spheres]).reshape(-1, 3)
        self._sph_rad = np.array([s.radius for s, _ in spheres])
        self._cyl_rot = np.array([p.rotation_matrix for _, p in cyls]).reshape(-1, 3, 3)
        self._cyl_pos = np.array([p.translation for _, p in cyls]).reshape(-1, 3)
        self._cyl_dims = np.array([[s.radius, 0.5 * s.length] for s, _ in cyls]).reshape(-1, 2)
        self._other = other
        if self._octree is not None:
            idx = self._octree.leaf_indices()
            self._oct_lo = idx.min(axis=0)
            dims = idx.max(axis=0) - self._oct_lo + 1
            grid = np.zeros(tuple(int(d) for d in dims), dtype=bool)
            rel = idx - self._oct_lo
            grid[rel[:, 0], rel[:, 1], rel[:, 2]] = True
            self._oct_grid = grid
            self._oct_dims = dims

    def _prepare_robot(self):
        m = self.model
        s_link, s_center, s_rad, s_owner = [], [], [], []
        generic = []  # (link index, shape, origin)
        for li, lname in enumerate(m.link_order):
            for geom in m.link_map[lname].collisions:
                if isinstance(geom.shape, Sphere):
                    s_link.append(li)
                    s_center.append(geom.origin.translation)
                    s_rad.append(geom.shape.radius)
                    s_owner.append(lname)
                else:
                    generic.append((li, lname, geom.shape, geom.origin))
        self._s_link = np.array(s_link, dtype=int)
        self._s_center = np.array(s_center, dtype=float).reshape(-1, 3)
        self._s_rad = np.array(s_rad, dtype=float)
        self._s_max = float(self._s_rad.max()) if len(s_rad) else 0.0
        self._generic = generic

        pairs = {frozenset(p) for p in m.self_collision_pairs}
        pa, pb, gen_pairs = [], [], []
        for i in range(len(s_owner)):
            for j in range(i + 1, len(s_owner)):
                if frozenset((s_owner[i], s_owner[j])) in pairs:
                    pa.append(i)
                    pb.append(j)
        elems = [("s", i, s_owner[i]) for i in range(len(s_owner))] + [("g", k, g[1]) for k, g in enumerate(generic)]
        for x in range(len(elems)):
            for y in range(x + 1, len(elems)):
                ex, ey = elems[x], elems[y]
                if ex[0] == "s" and ey[0] == "s":
                    continue
                if frozenset((ex[2], ey[2])) in pairs:
                    gen_pairs.append((ex, ey))
        self._pair_a = np.array(pa, dtype=int)
        self._pair_b = np.array(pb, dtype=int)
        self._pair_r = self._s_rad[self._pair_a] + self._s_rad[self._pair_b] if pa else np.zeros(0)
        self._gen_pairs = gen_pairs

        self._att = []
        for a in self.attachments:
            li = m.link_index[m.link(a.link).name]
            touch = set(a.touch_links) | m.rigid_group(a.link)
            keep = np.array([m.link_order[k] not in touch for k in self._s_link], dtype=bool)
            self._att.append((a, li, keep, touch))

    # -- core batch evaluation --------------------------------------------

    def _sphere_centers(self, mats: np.ndarray) -> np.ndarray:
        if not len(self._s_link):
            return np.zeros((mats.shape[0], 0, 3))
        t = mats[:, self._s_link]  # (N, S, 4, 4)
        return np.einsum("nsij,sj->nsi", t[:, :, :3, :3], self._s_center) + t[:, :, :3, 3]

    def _spheres_hit_scene(self, c: np.ndarray) -> np.ndarray:
        """Per-state collision flags for sphere geometry ``c`` (N, S, 3)."""
        n = c.shape[0]
        hit = np.zeros(n, dtype=bool)
        if c.shape[1] == 0:
            return hit
        r = self._s_rad
        if len(self._box_pos):
            local = np.einsum("nbsj,bjk->nbsk", c[:, None, :, :] - self._box_pos[None, :, None, :], self._box_rot)
            q = np.abs(local) - self._box_half[None, :, None, :]
            d = np.linalg.norm(np.maximum(q, 0.0), axis=-1) + np.minimum(q.max(axis=-1), 0.0)
            hit |= (d - r[None, None, :] < -CONTACT_TOL).any(axis=(1, 2))
        if len(self._sph_pos):
            d = np.linalg.norm(c[:, None, :, :] - self._sph_pos[None, :, None, :], axis=-1)
            hit |= (d - r[None, None, :] - self._sph_rad[None, :, None] < -CONTACT_TOL).any(axis=(1, 2))
        if len(self._cyl_pos):
            local = np.einsum("nbsj,bjk->nbsk", c[:, None, :, :] - self._cyl_pos[None, :, None, :], self._cyl_rot)
            dr = np.hypot(local[..., 0], local[..., 1]) - self._cyl_dims[None, :, None, 0]
            dz = np.abs(local[..., 2]) - self._cyl_dims[None, :, None, 1]
            d = np.where((dr <= 0) & (dz <= 0), np.maximum(dr, dz),
                         np.hypot(np.maximum(dr, 0), np.maximum(dz, 0)))
            hit |= (d - r[None, None, :] < -CONTACT_TOL).any(axis=(1, 2))
        if self._octree is not None:
            hit |= self._spheres_hit_octree(c, r)
        return hit

    def _spheres_hit_octree(self, c: np.ndarray, r: np.ndarray) -> np.ndarray:
        res = self._octree.resolution
        m = int(math.ceil(self._s_max / res)) + 1
        rng = np.arange(-m, m + 1)
        off = np.stack(np.meshgrid(rng, rng, rng, indexing="ij"), axis=-1).reshape(-1, 3)
        base = np.floor(c / res).astype(np.int64)  # (N, S, 3)
        cand = base[:, :, None, :] + off[None, None, :, :]  # (N, S, K, 3)
        rel = cand - self._oct_lo
        inb = np.all((rel >= 0) & (rel < self._oct_dims), axis=-1)
        if not inb.any():
            return np.zeros(c.shape[0], dtype=bool)
        ni, si, ki = np.nonzero(inb)
        rr = rel[ni, si, ki]
        occ = self._oct_grid[rr[:, 0], rr[:, 1], rr[:, 2]]
        if not occ.any():
            return np.zeros(c.shape[0], dtype=bool)
        ni, si, ki = ni[occ], si[occ], ki[occ]
        center = (cand[ni, si, ki] + 0.5) * res
        q = np.abs(c[ni, si] - center) - 0.5 * res
        d = np.linalg.norm(np.maximum(q, 0.0), axis=-1) + np.minimum(q.max(axis=-1), 0.0) - r[si]
        out = np.zeros(c.shape[0], dtype=bool)
        out[ni[d < -CONTACT_TOL]] = True
        return out

    def _self_hits(self, c: np.ndarray) -> np.ndarray:
        if not len(self._pair_a):
            return np.zeros(c.shape[0], dtype=bool)
        d = np.linalg.norm(c[:, self._pair_a] - c[:, self._pair_b], axis=-1) - self._pair_r
        return (d < -CONTACT_TOL).any(axis=1)

    def _generic_state_hit(self, mats: np.ndarray, centers: np.ndarray) -> bool:
        """Checks that do not fit the vectorized sphere path, for one state."""
        posed = []
        for li, lname, shape, origin in self._generic:
            pose = Pose.from_matrix(mats[li]).compose(origin)
            posed.append((lname, shape, pose, aabb_of(shape, pose)))
            if self._hits_obstacles(shape, pose, posed[-1][3]):
                return True
        for _, shape, pose, box in [(n, s, p, b) for n, s, p, b in self._other]:
            for k, c in enumerate(centers):
                sp = Pose(c)
                sh = Sphere(self._s_rad[k])
                if box.overlaps(aabb_of(sh, sp)) and collide(sh, sp, shape, pose).in_collision:
                    return True
        if self.check_self and self._gen_pairs:
            gen_pose = {("g", k): (posed[k][1], posed[k][2]) for k in range(len(posed))}
            for ex, ey in self._gen_pairs:
                sa, pa = gen_pose[("g", ex[1])] if ex[0] == "g" else (Sphere(self._s_rad[ex[1]]), Pose(centers[ex[1]]))
                sb, pb = gen_pose[("g", ey[1])] if ey[0] == "g" else (Sphere(self._s_rad[ey[1]]), Pose(centers[ey[1]]))
                if aabb_of(sa, pa).overlaps(aabb_of(sb, pb)) and collide(sa, pa, sb, pb).in_collision:
                    return True
        for a, li, keep, touch in self._att:
            pose = Pose.from_matrix(mats[li]).compose(a.link_to_object)
            box = aabb_of(a.shape, pose)
            if self._hits_obstacles(a.shape, pose, box):
                return True
            for k in np.nonzero(keep)[0]:
                sp = Pose(centers[k])
                sh = Sphere(self._s_rad[k])
                if box.overlaps(aabb_of(sh, sp)) and collide(a.shape, pose, sh, sp).in_collision:
                    return True
            for lname, shape, gpose, gbox in posed:
                if lname not in touch and box.overlaps(gbox) and collide(a.shape, pose, shape, gpose).in_collision:
                    return True
        return False

    def _hits_obstacles(self, shape: Shape, pose: Pose, box: AABB) -> bool:
        for _, oshape, opose in self._obstacles:
            if box.overlaps(aabb_of(oshape, opose)) and collide(shape, pose, oshape, opose).in_collision:
                return True
        if self._octree is not None and octree_collision(shape, pose, self._octree):
            return True
        return False

    def _needs_generic(self) -> bool:
        return bool(self._generic or self._att or (self._other and len(self._s_link)) or (self.check_self and self._gen_pairs))

    # -- public API ------------------------------------------------------

    def collision_flags(self, qs: np.ndarray, stop_early: bool = False) -> np.ndarray:
        """Per-configuration collision flags (self + scene + attachments)."""
        qs = np.atleast_2d(np.asarray(qs, dtype=float))
        mats = self.model.link_transforms_batch(qs)
        c = self._sphere_centers(mats)
        hit = self._spheres_hit_scene(c)
        if self.check_self:
            hit |= self._self_hits(c)
        if self._needs_generic():
            for i in range(len(qs)):
                if hit[i]:
                    if stop_early:
                        break
                    continue
                if self._generic_state_hit(mats[i], c[i]):
                    hit[i] = True
                    if stop_early:
                        break
        return hit

    def in_collision(self, q) -> bool:
        q = self.model.check_config(q)
        return bool(self.collision_flags(q[None, :])[0])

    def within_limits(self, qs, tol: float = 1e-9) -> np.ndarray:
        qs = np.atleast_2d(qs)
        return np.all((qs >= self.model.lower - tol) & (qs <= self.model.upper + tol), axis=1)

    def is_valid(self, q) -> bool:
        q = self.model.check_config(q)
        return bool(self.within_limits(q)[0]) and not self.in_collision(q)

    def all_valid(self, qs) -> bool:
        qs = np.atleast_2d(np.asarray(qs, dtype=float))
        if not self.within_limits(qs).all():
            return False
        return not self.collision_flags(qs, stop_early=True).any()

    def motion_valid(self, a, b, resolution: float) -> bool:
        """Check the straight joint-space segment at spacing <= ``resolution`` (endpoints included)."""
        states = interpolate(a, b, resolution)
        return self.all_valid(states)

    def self_collision(self, q) -> bool:
        q = self.model.check_config(q)
        mats = self.model.link_transforms_batch(q[None, :])
        c = self._sphere_centers(mats)
        if self._self_hits(c)[0]:
            return True
        if not self._gen_pairs:
            return False
        only_self = CollisionChecker(self.model, Scene(), check_self=True)
        return bool(only_self.collision_flags(q[None, :])[0])

    def scene_collision(self, q) -> bool:
        q = self.model.check_config(q)
        no_self = CollisionChecker(self.model, self.scene, self.attachments, check_self=False) if self.check_self else self
        return bool(no_self.collision_flags(q[None, :])[0])


def interpolate(a, b, resolution: float) -> np.ndarray:
    """States along a straight segment with spacing <= ``resolution``, including both ends."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    dist = float(np.linalg.norm(b - a))
    n = max(1, int(math.ceil(dist / resolution))) if dist > 0 else 0
    if n == 0:
        return a[None, :]
    t = np.arange(n + 1, dtype=float) / n
    out = a[None, :] + t[:, None] * (b - a)[None, :]
    out[-1] = b
    return out


def _clear_attached(tree: OcTree, attachments: Sequence[Attachment]) -> OcTree:
    """Drop leaves produced by the attached objects themselves at their pick-up pose."""
    drop = []
    cube = tree.leaf_box()
    for a in attachments:
        if a.world_pose is None:
            continue
        for idx in tree.leaves_in_aabb(aabb_of(a.shape, a.world_pose)):
            c = Pose((idx + 0.5) * tree.resolution)
            if collide(a.shape, a.world_pose, cube, c).distance <= tree.resolution:
                drop.append(idx)
    return tree.without_leaves(drop) if drop else tree


def self_collision(model: KinematicModel, q) -> bool:
    """True iff any non-adjacent link pair of ``model`` collides at ``q``."""
    return CollisionChecker(model, Scene()).self_collision(q)


def robot_scene_collision(model: KinematicModel, q, scene: Scene, attachments: Sequence[Attachment] = ()) -> bool:
    """True iff any robot link (or attached object) collides with the scene at ``q``."""
    return CollisionChecker(model, scene, attachments, check_self=False).scene_collision(q)
