"""Scenes: named collision objects in a parent-frame forest plus articulated parts."""
from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Iterable, Mapping

import numpy as np
import yaml

from .errors import CycleError, ParseError, ReferentialIntegrityError, SchemaError, UnknownObject
from .geometry import Box, ConvexMesh, Cylinder, Pose, Shape, Sphere
from .kinematics import KinematicModel, load_urdf, load_vertices

WORLD = "world"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class SceneObject:
    name: str
    shape: Shape
    pose: Pose = field(default_factory=Pose.identity)
    parent: str = WORLD


@dataclass(frozen=True, eq=False)
class ArticulatedPart:
    """A URDF-described object (cabinet, drawer, ...) placed in the scene."""

    name: str
    model: KinematicModel
    joints: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        values = {n: 0.0 for n in self.model.joint_names}
        for k, v in dict(self.joints).items():
            if k not in values:
                raise SchemaError(f"articulations[{self.name}].joints.{k}", "unknown joint")
            values[k] = float(v)
        object.__setattr__(self, "joints", values)

    @property
    def pose(self) -> Pose:
        return self.model.base_offset

    def config(self) -> np.ndarray:
        return np.array([self.joints[n] for n in self.model.joint_names], dtype=float)

    def with_config(self, q) -> "ArticulatedPart":
        return ArticulatedPart(self.name, self.model, dict(zip(self.model.joint_names, map(float, q))))

    def collision_objects(self) -> list[tuple[str, Shape, Pose]]:
        if self.model.dof == 0:
            mats = self.model.link_transforms(np.zeros(0))
        else:
            mats = self.model.link_transforms(self.config())
        out = []
        for k, lname in enumerate(self.model.link_order):
            frame = Pose.from_matrix(mats[k])
            for c, geom in enumerate(self.model.link_map[lname].collisions):
                out.append((f"{self.name}/{lname}/{c}", geom.shape, frame.compose(geom.origin)))
        return out


class Scene:
    """Immutable scene; editing methods return new scenes."""

    def __init__(self, objects: Iterable[SceneObject] = (), articulations: Iterable[ArticulatedPart] = (),
                 octree=None, point_cloud=None, frame_id: str = WORLD):
        self.objects: tuple[SceneObject, ...] = tuple(objects)
        self.articulations: tuple[ArticulatedPart, ...] = tuple(articulations)
        self.octree = octree
        self.point_cloud = point_cloud
        self.frame_id = frame_id
        names = [o.name for o in self.objects]
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise SchemaError("objects.name", f"duplicate object names {dup}")
        if WORLD in names:
            raise SchemaError("objects.name", f"'{WORLD}' is reserved")
        self._by_name = {o.name: o for o in self.objects}
        for o in self.objects:
            if o.parent != WORLD and o.parent not in self._by_name:
                raise SchemaError(f"objects[{o.name}].parent", f"unknown parent '{o.parent}'")
        self._check_cycles()

    def _check_cycles(self):
        for o in self.objects:
            seen = {o.name}
            p = o.parent
            while p != WORLD:
                if p in seen:
                    raise CycleError(f"parent cycle through object '{o.name}'")
                seen.add(p)
                p = self._by_name[p].parent

    # -- queries ---------------------------------------------------------

    def __len__(self):
        return len(self.objects)

    def __contains__(self, name):
        return name in self._by_name

    @property
    def object_names(self) -> list[str]:
        return [o.name for o in self.objects]

    def object(self, name: str) -> SceneObject:
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownObject(f"unknown object '{name}'") from None

    def children(self, name: str) -> list[str]:
        return [o.name for o in self.objects if o.parent == name]

    @cached_property
    def _world_poses(self) -> dict[str, Pose]:
        cache: dict[str, Pose] = {}

        def resolve(n):
            if n not in cache:
                o = self._by_name[n]
                cache[n] = o.pose if o.parent == WORLD else resolve(o.parent).compose(o.pose)
            return cache[n]

        for o in self.objects:
            resolve(o.name)
        return cache

    def world_pose(self, name: str) -> Pose:
        """Pose of an object in the world frame (parent chain composed parent-first)."""
        self.object(name)
        return self._world_poses[name]

    def articulation(self, name: str | None = None) -> ArticulatedPart:
        if not self.articulations:
            raise UnknownObject("scene has no articulations")
        if name is None:
            return self.articulations[0]
        for a in self.articulations:
            if a.name == name:
                return a
        raise UnknownObject(f"unknown articulation '{name}'")

    def collision_objects(self) -> list[tuple[str, Shape, Pose]]:
        """Every rigid and articulated collision shape with its world pose."""
        out = [(o.name, o.shape, self.world_pose(o.name)) for o in self.objects]
        for a in self.articulations:
            out.extend(a.collision_objects())
        return out

    # -- edits -----------------------------------------------------------

    def _copy(self, **kw) -> "Scene":
        args = dict(objects=self.objects, articulations=self.articulations, octree=self.octree,
                    point_cloud=self.point_cloud, frame_id=self.frame_id)
        args.update(kw)
        return Scene(**args)

    def with_object_pose(self, name: str, pose: Pose) -> "Scene":
        self.object(name)
        return self._copy(objects=[replace(o, pose=pose) if o.name == name else o for o in self.objects])

    def with_object_poses(self, poses: Mapping[str, Pose]) -> "Scene":
        for n in poses:
            self.object(n)
        return self._copy(objects=[replace(o, pose=poses[o.name]) if o.name in poses else o for o in self.objects])

    def add_object(self, obj: SceneObject) -> "Scene":
        return self._copy(objects=self.objects + (obj,))

    def remove_object(self, name: str) -> "Scene":
        self.object(name)
        kids = self.children(name)
        if kids:
            raise ReferentialIntegrityError(f"cannot remove '{name}': objects {kids} are parented to it")
        return self._copy(objects=[o for o in self.objects if o.name != name])

    def with_articulation(self, part: ArticulatedPart) -> "Scene":
        parts = [part if a.name == part.name else a for a in self.articulations]
        if not any(a.name == part.name for a in self.articulations):
            parts.append(part)
        return self._copy(articulations=parts)

    def with_octree(self, octree) -> "Scene":
        return self._copy(octree=octree)

    def with_point_cloud(self, cloud) -> "Scene":
        return self._copy(point_cloud=cloud)

    def sensed_only(self) -> "Scene":
        """Copy keeping only the octree as collision geometry."""
        return Scene(octree=self.octree, point_cloud=self.point_cloud, frame_id=self.frame_id)

    def __repr__(self):
        extra = []
        if self.articulations:
            extra.append(f"articulations={len(self.articulations)}")
        if self.octree is not None:
            extra.append("octree")
        return f"Scene(objects={self.object_names}{', ' if extra else ''}{', '.join(extra)})"


# --------------------------------------------------------------------------
# file IO


def read_yaml(path: str) -> Any:
    """Load a YAML document, mapping syntax errors to :class:`ParseError`."""
    with open(path) as fh:
        text = fh.read()
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        reason = getattr(exc, "problem", None) or str(exc)
        raise ParseError(line, reason, path) from None


def write_yaml(data: Any, path: str) -> None:
    text = yaml.safe_dump(data, sort_keys=False, default_flow_style=None, width=1000)
    tmp = f"{path}.tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def pose_to_dict(p: Pose) -> dict:
    return {"xyz": [float(v) for v in p.translation], "quat_wxyz": [float(v) for v in p.rotation]}


def pose_from_dict(d: Any, where: str) -> Pose:
    if d is None:
        return Pose.identity()
    if not isinstance(d, Mapping):
        raise SchemaError(where, "expected a mapping with xyz and quat_wxyz")
    unknown = set(d) - {"xyz", "quat_wxyz", "rpy"}
    if unknown:
        raise SchemaError(f"{where}.{sorted(unknown)[0]}", "unknown key")
    try:
        xyz = [float(v) for v in d.get("xyz", [0, 0, 0])]
        if "quat_wxyz" in d:
            q = [float(v) for v in d["quat_wxyz"]]
            if "rpy" in d:
                raise SchemaError(where, "give either quat_wxyz or rpy, not both")
            return Pose(xyz, q)
        rpy = [float(v) for v in d.get("rpy", [0, 0, 0])]
        if len(rpy) != 3:
            raise ValueError("rpy needs 3 values")
        return Pose.from_xyz_rpy(xyz, rpy)
    except (TypeError, ValueError) as exc:
        raise SchemaError(where, str(exc)) from None


def shape_to_dict(shape: Shape, mesh_file: str | None = None) -> dict:
    if isinstance(shape, Box):
        return {"type": "box", "dims": list(shape.extents)}
    if isinstance(shape, Sphere):
        return {"type": "sphere", "radius": shape.radius}
    if isinstance(shape, Cylinder):
        return {"type": "cylinder", "radius": shape.radius, "length": shape.length}
    if isinstance(shape, ConvexMesh):
        return {"type": "mesh", "vertices_file": mesh_file}
    raise SchemaError("shape.type", f"cannot serialize {type(shape).__name__}")


def shape_from_dict(d: Any, where: str, base_dir: str) -> Shape:
    if not isinstance(d, Mapping) or "type" not in d:
        raise SchemaError(f"{where}.type", "missing shape type")
    kind = d["type"]
    try:
        if kind == "box":
            return Box(tuple(d["dims"]))
        if kind == "sphere":
            return Sphere(d["radius"])
        if kind == "cylinder":
            return Cylinder(d["radius"], d["length"])
        if kind == "mesh":
            fname = d["vertices_file"]
            path = fname if os.path.isabs(fname) else os.path.join(base_dir, fname)
            return ConvexMesh(load_vertices(path), source=os.path.abspath(path))
    except KeyError as exc:
        raise SchemaError(f"{where}.{exc.args[0]}", "missing") from None
    except (TypeError, ValueError, OSError) as exc:
        raise SchemaError(where, str(exc)) from None
    raise SchemaError(f"{where}.type", f"unknown shape type '{kind}'")


def scene_from_dict(data: Any, base_dir: str = ".", path: str | None = None) -> Scene:
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise SchemaError("<root>", "scene document must be a mapping", path)
    frame = data.get("frame_id", WORLD)
    if frame != WORLD:
        raise SchemaError("frame_id", f"only '{WORLD}' is supported", path)
    objs = []
    raw_objects = data.get("objects") or []
    if not isinstance(raw_objects, list):
        raise SchemaError("objects", "expected a list", path)
    for i, od in enumerate(raw_objects):
        where = f"objects[{i}]"
        if not isinstance(od, Mapping) or "name" not in od:
            raise SchemaError(f"{where}.name", "missing", path)
        objs.append(SceneObject(
            name=str(od["name"]),
            shape=shape_from_dict(od.get("shape"), f"{where}.shape", base_dir),
            pose=pose_from_dict(od.get("pose"), f"{where}.pose"),
            parent=str(od.get("parent", WORLD)),
        ))
    parts = []
    for i, ad in enumerate(data.get("articulations") or []):
        where = f"articulations[{i}]"
        if not isinstance(ad, Mapping) or "urdf_file" not in ad:
            raise SchemaError(f"{where}.urdf_file", "missing", path)
        upath = ad["urdf_file"]
        upath = upath if os.path.isabs(upath) else os.path.join(base_dir, upath)
        if not os.path.exists(upath):
            raise SchemaError(f"{where}.urdf_file", f"file not found: {upath}", path)
        model = load_urdf(upath).with_base_offset(pose_from_dict(ad.get("pose"), f"{where}.pose"))
        name = str(ad.get("name", model.name))
        parts.append(ArticulatedPart(name, model, dict(ad.get("joints") or {})))
    return Scene(objs, parts)


def load_scene(path: str) -> Scene:
    """Read a scene document (see README for the schema)."""
    data = read_yaml(path)
    try:
        return scene_from_dict(data, os.path.dirname(os.path.abspath(path)), path)
    except SchemaError as exc:
        if exc.path is None:
            exc.path = path
        raise


def scene_to_dict(scene: Scene, path: str) -> dict:
    base_dir = os.path.dirname(os.path.abspath(path))
    stem = os.path.splitext(os.path.basename(path))[0]
    objects = []
    for o in scene.objects:
        mesh_file = None
        if isinstance(o.shape, ConvexMesh):
            mesh_file = _mesh_reference(o, base_dir, stem)
        objects.append({
            "name": o.name,
            "parent": o.parent,
            "shape": shape_to_dict(o.shape, mesh_file),
            "pose": pose_to_dict(o.pose),
        })
    doc: dict = {"format_version": FORMAT_VERSION, "frame_id": scene.frame_id, "objects": objects}
    if scene.articulations:
        arts = []
        for a in scene.articulations:
            if not a.model.source:
                raise SchemaError(f"articulations[{a.name}].urdf_file", "model has no source file")
            arts.append({
                "name": a.name,
                "urdf_file": os.path.relpath(a.model.source, base_dir),
                "pose": pose_to_dict(a.pose),
                "joints": {k: float(v) for k, v in a.joints.items()},
            })
        doc["articulations"] = arts
    return doc


def _mesh_reference(o: SceneObject, base_dir: str, stem: str) -> str:
    shape: ConvexMesh = o.shape
    if shape.source and os.path.exists(shape.source) and np.array_equal(load_vertices(shape.source), shape.vertices):
        return os.path.relpath(shape.source, base_dir)
    fname = f"{stem}.{o.name}.xyz"
    with open(os.path.join(base_dir, fname), "w") as fh:
        for v in shape.vertices:
            fh.write(" ".join(repr(float(x)) for x in v) + "\n")
    return fname


def save_scene(scene: Scene, path: str) -> None:
    write_yaml(scene_to_dict(scene, path), path)
