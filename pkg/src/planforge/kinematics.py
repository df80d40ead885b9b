"""URDF-subset parsing, forward kinematics and geometric Jacobians.

Supported URDF subset: ``<link>`` with ``<collision>`` geometry (box, sphere,
cylinder, mesh), ``<joint>`` of type revolute, prismatic, fixed and
continuous (mapped to revolute with limits [-pi, pi]), ``<origin xyz rpy>``,
``<axis xyz>`` and ``<limit lower upper>``.  Visual, inertial, transmission
and gazebo tags are ignored.
"""
from __future__ import annotations

import logging
import math
import os
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimensionMismatch,
    KinematicLoop,
    MissingLimit,
    UnknownLink,
    UnsupportedElement,
    XmlError,
)
from .geometry import Box, ConvexMesh, Cylinder, Pose, Shape, Sphere

logger = logging.getLogger(__name__)

_IGNORED_QUIET = {"visual", "inertial"}
_IGNORED_WARN = {"transmission", "gazebo", "material"}


@dataclass(frozen=True)
class CollisionGeometry:
    shape: Shape
    origin: Pose = field(default_factory=Pose.identity)


@dataclass(frozen=True)
class Link:
    name: str
    collisions: tuple = ()


@dataclass(frozen=True, eq=False)
class Joint:
    name: str
    type: str  # revolute | prismatic | fixed
    parent: str
    child: str
    origin: Pose = field(default_factory=Pose.identity)
    axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    lower: float = 0.0
    upper: float = 0.0

    @property
    def active(self) -> bool:
        return self.type != "fixed"


def load_vertices(path: str, scale=(1.0, 1.0, 1.0)) -> np.ndarray:
    """Read mesh vertices from an ``x y z`` per line text file or the ``v`` lines of an OBJ."""
    pts = []
    with open(path) as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if parts[0] == "v":
                parts = parts[1:4]
            elif not _is_number(parts[0]):
                continue
            pts.append([float(x) for x in parts[:3]])
    return np.array(pts, dtype=float) * np.asarray(scale, dtype=float)


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


class KinematicModel:
    """Tree-structured articulated body.

    Joint values are ordered like the active (non-fixed) joints in the source
    document.  Link transforms are world frame and include ``base_offset``.
    """

    def __init__(self, name: str, links: Sequence[Link], joints: Sequence[Joint],
                 base_offset: Pose | None = None, source: str | None = None):
        self.name = name
        self.links = tuple(links)
        self.joints = tuple(joints)
        self.base_offset = base_offset or Pose.identity()
        self.source = source
        self._build()

    # -- structure -----------------------------------------------------------

    def _build(self):
        link_names = [l.name for l in self.links]
        if len(set(link_names)) != len(link_names):
            raise XmlError("duplicate link names")
        self.link_map = {l.name: l for l in self.links}
        parent_joint: dict[str, Joint] = {}
        children: dict[str, list[Joint]] = {n: [] for n in link_names}
        for j in self.joints:
            for end in (j.parent, j.child):
                if end not in self.link_map:
                    raise XmlError(f"joint '{j.name}' references unknown link '{end}'")
            if j.child in parent_joint:
                raise KinematicLoop(f"link '{j.child}' has more than one parent joint")
            if j.parent == j.child:
                raise KinematicLoop(f"joint '{j.name}' connects link '{j.child}' to itself")
            parent_joint[j.child] = j
            children[j.parent].append(j)
        roots = [n for n in link_names if n not in parent_joint]
        if len(roots) != 1:
            if not roots:
                raise KinematicLoop("kinematic graph has no root link (cycle)")
            raise XmlError(f"kinematic graph must have a single root link, found {roots}")
        self.base_link = roots[0]

        # breadth-first order; links unreachable from the root sit on a cycle
        order = [self.base_link]
        i = 0
        while i < len(order):
            for j in children[order[i]]:
                order.append(j.child)
            i += 1
        if len(order) != len(link_names):
            missing = sorted(set(link_names) - set(order))
            raise KinematicLoop(f"links {missing} form a kinematic loop")

        self.link_order = order
        self.link_index = {n: k for k, n in enumerate(order)}
        self.parent_joint = parent_joint
        self.child_joints = children
        self.active_joints = [j for j in self.joints if j.active]
        self.joint_names = [j.name for j in self.active_joints]
        self.joint_index = {j.name: k for k, j in enumerate(self.active_joints)}
        self.dof = len(self.active_joints)
        self.lower = np.array([j.lower for j in self.active_joints], dtype=float)
        self.upper = np.array([j.upper for j in self.active_joints], dtype=float)
        self.tips = [n for n in order if not children[n] and n != self.base_link] or [self.base_link]

        # per link (in order, skipping the root): parent index, origin, joint kind, axis, q index
        self._chain = []
        for name in order[1:]:
            j = parent_joint[name]
            qi = self.joint_index.get(j.name, -1)
            self._chain.append((self.link_index[j.parent], j.origin.matrix, j.type, np.asarray(j.axis, float), qi))

        adjacent = set()
        for j in self.joints:
            adjacent.add(frozenset((j.parent, j.child)))
        self.adjacent_pairs = adjacent
        geom_links = [n for n in order if self.link_map[n].collisions]
        self.self_collision_pairs = [
            (a, b)
            for ia, a in enumerate(geom_links)
            for b in geom_links[ia + 1:]
            if frozenset((a, b)) not in adjacent
        ]

    def with_base_offset(self, base_offset: Pose) -> "KinematicModel":
        return KinematicModel(self.name, self.links, self.joints, base_offset, self.source)

    def link(self, name: str) -> Link:
        try:
            return self.link_map[name]
        except KeyError:
            raise UnknownLink(f"unknown link '{name}'") from None

    def ancestors(self, link_name: str) -> list[str]:
        """Links from ``link_name`` up to the root, inclusive."""
        self.link(link_name)
        out = [link_name]
        while out[-1] in self.parent_joint:
            out.append(self.parent_joint[out[-1]].parent)
        return out

    def path_joint_indices(self, tip_link: str) -> list[int]:
        idx = []
        for name in self.ancestors(tip_link)[:-1]:
            j = self.parent_joint[name]
            if j.active:
                idx.append(self.joint_index[j.name])
        return sorted(idx)

    def rigid_group(self, link_name: str) -> set[str]:
        """Links welded to ``link_name`` through fixed joints."""
        group = {link_name}
        frontier = [link_name]
        while frontier:
            n = frontier.pop()
            nbrs = [j.child for j in self.child_joints[n] if not j.active]
            pj = self.parent_joint.get(n)
            if pj is not None and not pj.active:
                nbrs.append(pj.parent)
            for m in nbrs:
                if m not in group:
                    group.add(m)
                    frontier.append(m)
        return group

    def within_limits(self, q, tol: float = 1e-9) -> bool:
        q = self.check_config(q)
        return bool(np.all(q >= self.lower - tol) and np.all(q <= self.upper + tol))

    def clamp(self, q) -> np.ndarray:
        return np.clip(q, self.lower, self.upper)

    def sample_uniform(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lower, self.upper)

    def check_config(self, q) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        if q.shape != (self.dof,):
            raise DimensionMismatch(f"expected {self.dof} joint values for '{self.name}', got shape {q.shape}")
        return q

    # -- kinematics ----------------------------------------------------------

    def link_transforms_batch(self, qs: np.ndarray) -> np.ndarray:
        """World transforms of every link (``link_order``) for a batch of configurations.

        ``qs`` has shape (N, dof); the result has shape (N, n_links, 4, 4).
        """
        qs = np.asarray(qs, dtype=float)
        if qs.ndim != 2 or qs.shape[1] != self.dof:
            raise DimensionMismatch(f"expected (N, {self.dof}) joint array, got {qs.shape}")
        n = qs.shape[0]
        out = np.empty((n, len(self.link_order), 4, 4))
        out[:, 0] = self.base_offset.matrix
        for k, (pi, origin, jtype, axis, qi) in enumerate(self._chain, start=1):
            frame = out[:, pi] @ origin
            if jtype == "fixed":
                out[:, k] = frame
                continue
            q = qs[:, qi]
            motion = np.zeros((n, 4, 4))
            motion[:, 3, 3] = 1.0
            if jtype == "revolute":
                motion[:, :3, :3] = _axis_rotations(axis, q)
            else:
                motion[:, 0, 0] = motion[:, 1, 1] = motion[:, 2, 2] = 1.0
                motion[:, :3, 3] = q[:, None] * axis
            out[:, k] = frame @ motion
        return out

    def link_transforms(self, q) -> np.ndarray:
        q = self.check_config(q)
        return self.link_transforms_batch(q[None, :])[0]

    def forward_kinematics(self, q) -> dict[str, Pose]:
        """World pose of every link at configuration ``q``."""
        mats = self.link_transforms(q)
        return {name: Pose.from_matrix(mats[k]) for k, name in enumerate(self.link_order)}

    def link_pose(self, q, link_name: str) -> Pose:
        self.link(link_name)
        return Pose.from_matrix(self.link_transforms(q)[self.link_index[link_name]])

    def jacobian(self, q, tip_link: str, transforms: np.ndarray | None = None) -> np.ndarray:
        """6 x dof geometric Jacobian of the tip frame origin (linear rows first)."""
        self.link(tip_link)
        if transforms is None:
            transforms = self.link_transforms(q)
        tip = transforms[self.link_index[tip_link], :3, 3]
        jac = np.zeros((6, self.dof))
        for name in self.ancestors(tip_link)[:-1]:
            j = self.parent_joint[name]
            if not j.active:
                continue
            t = transforms[self.link_index[name]]
            axis = t[:3, :3] @ j.axis
            col = self.joint_index[j.name]
            if j.type == "revolute":
                jac[:3, col] = np.cross(axis, tip - t[:3, 3])
                jac[3:, col] = axis
            else:
                jac[:3, col] = axis
        return jac

    def __repr__(self):
        return f"KinematicModel({self.name!r}, links={len(self.links)}, dof={self.dof})"


def _axis_rotations(axis: np.ndarray, angles: np.ndarray) -> np.ndarray:
    """Batch of rotation matrices about a fixed unit axis (Rodrigues)."""
    x, y, z = axis
    c = np.cos(angles)
    s = np.sin(angles)
    C = 1.0 - c
    r = np.empty((len(angles), 3, 3))
    r[:, 0, 0] = c + x * x * C
    r[:, 0, 1] = x * y * C - z * s
    r[:, 0, 2] = x * z * C + y * s
    r[:, 1, 0] = y * x * C + z * s
    r[:, 1, 1] = c + y * y * C
    r[:, 1, 2] = y * z * C - x * s
    r[:, 2, 0] = z * x * C - y * s
    r[:, 2, 1] = z * y * C + x * s
    r[:, 2, 2] = c + z * z * C
    return r


# --------------------------------------------------------------------------
# URDF parsing


def _floats(text: str | None, n: int, default, what: str) -> list[float]:
    if text is None:
        return list(default)
    try:
        vals = [float(v) for v in text.split()]
    except ValueError:
        raise XmlError(f"malformed numbers in {what}: {text!r}") from None
    if len(vals) != n:
        raise XmlError(f"{what} needs {n} numbers, got {text!r}")
    return vals


def _origin(elem) -> Pose:
    o = elem.find("origin")
    if o is None:
        return Pose.identity()
    xyz = _floats(o.get("xyz"), 3, (0, 0, 0), "origin xyz")
    rpy = _floats(o.get("rpy"), 3, (0, 0, 0), "origin rpy")
    return Pose.from_xyz_rpy(xyz, rpy)


def _geometry(geom, base_dir: str | None, where: str) -> Shape:
    if geom is None or len(geom) == 0:
        raise XmlError(f"{where}: collision without geometry")
    g = geom[0]
    try:
        if g.tag == "box":
            return Box(tuple(_floats(g.get("size"), 3, None, "box size")))
        if g.tag == "sphere":
            return Sphere(float(g.get("radius")))
        if g.tag == "cylinder":
            return Cylinder(float(g.get("radius")), float(g.get("length")))
    except (TypeError, ValueError) as exc:
        raise XmlError(f"{where}: bad {g.tag} geometry: {exc}") from None
    if g.tag == "mesh":
        fname = g.get("filename")
        if not fname:
            raise XmlError(f"{where}: mesh without filename")
        if fname.startswith("file://"):
            fname = fname[len("file://"):]
        path = fname if os.path.isabs(fname) or base_dir is None else os.path.join(base_dir, fname)
        scale = _floats(g.get("scale"), 3, (1, 1, 1), "mesh scale")
        try:
            verts = load_vertices(path, scale)
        except OSError as exc:
            raise XmlError(f"{where}: cannot read mesh '{path}': {exc}") from None
        try:
            return ConvexMesh(verts, source=path)
        except ValueError as exc:
            raise XmlError(f"{where}: bad mesh '{path}': {exc}") from None
    raise UnsupportedElement(f"{where}: unsupported geometry <{g.tag}>")


def parse_urdf(text: str, base_dir: str | None = None, source: str | None = None) -> KinematicModel:
    """Parse URDF XML text into a :class:`KinematicModel`."""
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise XmlError(f"invalid XML: {exc}") from None
    if root.tag != "robot":
        raise XmlError(f"root element must be <robot>, got <{root.tag}>")

    links: list[Link] = []
    joints: list[Joint] = []
    for child in root:
        if child.tag == "link":
            name = child.get("name")
            if not name:
                raise XmlError("link without name")
            cols = []
            for sub in child:
                if sub.tag == "collision":
                    cols.append(CollisionGeometry(_geometry(sub.find("geometry"), base_dir, f"link '{name}'"), _origin(sub)))
                elif sub.tag in _IGNORED_QUIET:
                    continue
                else:
                    logger.warning("link '%s': ignoring <%s>", name, sub.tag)
            links.append(Link(name, tuple(cols)))
        elif child.tag == "joint":
            joints.append(_parse_joint(child))
        elif child.tag in _IGNORED_WARN:
            logger.warning("ignoring <%s> element", child.tag)
        else:
            logger.warning("ignoring unsupported element <%s>", child.tag)
    return KinematicModel(root.get("name", "robot"), links, joints, source=source)


def _parse_joint(elem) -> Joint:
    name = elem.get("name")
    jtype = elem.get("type")
    if not name or not jtype:
        raise XmlError("joint needs name and type")
    parent = elem.find("parent")
    child = elem.find("child")
    if parent is None or child is None or not parent.get("link") or not child.get("link"):
        raise XmlError(f"joint '{name}' needs parent and child links")
    if elem.find("mimic") is not None:
        logger.warning("joint '%s': <mimic> not supported, joint treated as independent", name)
    origin = _origin(elem)
    ax = elem.find("axis")
    axis = np.array(_floats(ax.get("xyz") if ax is not None else None, 3, (1, 0, 0), "axis"), dtype=float)
    lower = upper = 0.0
    if jtype == "continuous":
        jtype = "revolute"
        lower, upper = -math.pi, math.pi
    elif jtype in ("revolute", "prismatic"):
        lim = elem.find("limit")
        if lim is None or (lim.get("lower") is None and lim.get("upper") is None):
            raise MissingLimit(f"joint '{name}' ({jtype}) has no lower/upper limit")
        try:
            lower = float(lim.get("lower", 0.0))
            upper = float(lim.get("upper", 0.0))
        except ValueError:
            raise XmlError(f"joint '{name}': malformed limit") from None
        if lower > upper:
            raise XmlError(f"joint '{name}': lower limit {lower} > upper limit {upper}")
    elif jtype == "fixed":
        pass
    else:
        raise UnsupportedElement(f"joint '{name}': unsupported joint type '{jtype}'")
    if jtype != "fixed":
        n = np.linalg.norm(axis)
        if n < 1e-12:
            raise XmlError(f"joint '{name}': zero axis")
        axis = axis / n
    return Joint(name, jtype, parent.get("link"), child.get("link"), origin, axis, lower, upper)


def load_urdf(path: str) -> KinematicModel:
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise XmlError(f"cannot read URDF '{path}': {exc}") from None
    return parse_urdf(text, base_dir=os.path.dirname(os.path.abspath(path)), source=os.path.abspath(path))
