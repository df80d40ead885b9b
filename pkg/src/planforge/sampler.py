"""Procedural scene variations.

Poses are perturbed in each object's own parent frame: position noise is added
to the parent-relative translation and orientation noise is a roll/pitch/yaw
delta, composed Rz(yaw) Ry(pitch) Rx(roll), applied on the right of the
nominal rotation.  Articulated parts get joint values drawn uniformly within
limits and rejected while they self-collide.

Randomness comes from numpy's Philox counter-based generator.  Every draw in
:func:`generate_variations` uses its own substream keyed by
``(seed, scene index, kind, item index)`` so scene ``i`` can be regenerated
without producing scenes ``0..i-1``.
"""
from __future__ import annotations

import os
from dataclasses import dataclass
from typing import Any, Callable, Mapping

import numpy as np

from .collision import CollisionChecker
from .errors import RejectionExhausted, SchemaError, SpecMismatch
from .geometry import Pose, rpy_to_quat
from .kinematics import KinematicModel, load_urdf
from .scene import ArticulatedPart, Scene, read_yaml

AXES_POS = ("x", "y", "z")
AXES_ROT = ("roll", "pitch", "yaw")
DEFAULT_MAX_ATTEMPTS = 100

# substream namespaces
_OBJECT = 0
_ARTICULATION = 1


@dataclass(frozen=True)
class Noise:
    """One axis of noise: ``kind`` is 'none', 'gaussian' (std) or 'uniform' (lower, upper)."""

    kind: str = "none"
    std: float = 0.0
    lower: float = 0.0
    upper: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "gaussian", "uniform"):
            raise SchemaError("type", f"unknown noise type '{self.kind}'")
        if self.kind == "gaussian" and not self.std >= 0:
            raise SchemaError("std", "must be >= 0")
        if self.kind == "uniform" and not self.lower <= self.upper:
            raise SchemaError("lower", "lower must be <= upper")

    def draw(self, rng: np.random.Generator, n: int | None = None):
        if self.kind == "gaussian":
            return rng.normal(0.0, self.std, size=n)
        if self.kind == "uniform":
            # rng.uniform is half-open; nudging the top keeps ``upper`` reachable
            return np.clip(rng.uniform(self.lower, np.nextafter(self.upper, np.inf), size=n), self.lower, self.upper)
        return np.zeros(n) if n is not None else 0.0

    def to_dict(self) -> Any:
        if self.kind == "gaussian":
            return {"type": "gaussian", "std": self.std}
        if self.kind == "uniform":
            return {"type": "uniform", "lower": self.lower, "upper": self.upper}
        return "none"

    @classmethod
    def from_dict(cls, d: Any, where: str) -> "Noise":
        if d is None or d == "none":
            return cls()
        if not isinstance(d, Mapping):
            raise SchemaError(where, "expected 'none' or a mapping with 'type'")
        kind = d.get("type", "none")
        try:
            if kind == "gaussian":
                return cls("gaussian", std=float(d["std"]))
            if kind == "uniform":
                return cls("uniform", lower=float(d["lower"]), upper=float(d["upper"]))
            return cls(str(kind))
        except KeyError as exc:
            raise SchemaError(f"{where}.{exc.args[0]}", "missing") from None
        except SchemaError as exc:
            raise SchemaError(f"{where}.{exc.field}", exc.reason) from None


@dataclass(frozen=True)
class ObjectNoise:
    object_name: str
    position: tuple = (Noise(), Noise(), Noise())
    orientation: tuple = (Noise(), Noise(), Noise())

    @property
    def is_zero(self) -> bool:
        return all(n.kind == "none" for n in self.position + self.orientation)


@dataclass(frozen=True)
class ArticulationSpec:
    model: KinematicModel
    sampled_joints: tuple = ()
    max_rejection_attempts: int = DEFAULT_MAX_ATTEMPTS
    part_name: str | None = None  # which articulated part of the scene this drives

    def __post_init__(self):
        for j in self.sampled_joints:
            if j not in self.model.joint_index:
                raise SpecMismatch(f"joint '{j}' not in model '{self.model.name}'")
            k = self.model.joint_index[j]
            if not (np.isfinite(self.model.lower[k]) and np.isfinite(self.model.upper[k])):
                raise SpecMismatch(f"joint '{j}' has no finite limits")
        if self.max_rejection_attempts < 1:
            raise SchemaError("max_attempts", "must be >= 1")


@dataclass(frozen=True)
class VariationSpec:
    objects: tuple = ()
    articulation: ArticulationSpec | None = None

    def validate(self, nominal: Scene) -> None:
        names = set(nominal.object_names) | {a.name for a in nominal.articulations}
        for o in self.objects:
            if o.object_name not in names:
                raise SpecMismatch(f"variation references unknown object '{o.object_name}'")
        if self.articulation is not None:
            _find_part(nominal, self.articulation)


def _find_part(scene: Scene, spec: ArticulationSpec) -> ArticulatedPart:
    for part in scene.articulations:
        if spec.part_name is not None:
            if part.name == spec.part_name:
                return part
        elif part.model.source and spec.model.source and \
                os.path.realpath(part.model.source) == os.path.realpath(spec.model.source):
            return part
        elif part.model.name == spec.model.name:
            return part
    raise SpecMismatch(f"no articulated part in the scene matches model '{spec.model.name}'")


def perturb_pose(pose: Pose, noise: ObjectNoise, rng: np.random.Generator) -> Pose:
    """Apply one draw of ``noise`` to a parent-relative ``pose``."""
    dp = np.array([n.draw(rng) for n in noise.position], dtype=float)
    rpy = [float(n.draw(rng)) for n in noise.orientation]
    if not any(rpy):
        return Pose(pose.translation + dp, pose.rotation)
    return Pose(pose.translation + dp, pose.rotation) @ Pose(np.zeros(3), rpy_to_quat(*rpy))


def _sample_with_streams(nominal: Scene, spec: VariationSpec, stream: Callable[[int, int], np.random.Generator]) -> Scene:
    spec.validate(nominal)
    updates = {}
    parts = {a.name: a for a in nominal.articulations}
    for k, on in enumerate(spec.objects):
        if on.is_zero:
            continue
        rng = stream(_OBJECT, k)
        if on.object_name in parts:
            part = parts[on.object_name]
            model = part.model.with_base_offset(perturb_pose(part.pose, on, rng))
            parts[part.name] = ArticulatedPart(part.name, model, part.joints)
        else:
            updates[on.object_name] = perturb_pose(nominal.object(on.object_name).pose, on, rng)
    out = nominal.with_object_poses(updates) if updates else nominal
    if spec.articulation is not None and spec.articulation.sampled_joints:
        part = parts[_find_part(nominal, spec.articulation).name]
        q = sample_articulation(spec.articulation, stream(_ARTICULATION, 0), base=part.config())
        parts[part.name] = part.with_config(q)
    for part in parts.values():
        if part is not nominal.articulation(part.name):
            out = out.with_articulation(part)
    return out


def sample_scene(nominal: Scene, spec: VariationSpec, rng: np.random.Generator) -> Scene:
    """One random variation of ``nominal``; draws come from ``rng`` in spec order."""
    return _sample_with_streams(nominal, spec, lambda kind, k: rng)


def sample_articulation(spec: ArticulationSpec, rng: np.random.Generator, base=None) -> np.ndarray:
    """Uniform-in-limits joint values for ``spec.sampled_joints``, rejected while self-colliding.

    Joints that are not sampled keep their value from ``base`` (zeros if omitted).
    """
    model = spec.model
    q0 = np.zeros(model.dof) if base is None else np.asarray(base, dtype=float).copy()
    if not spec.sampled_joints:
        return q0
    idx = np.array([model.joint_index[j] for j in spec.sampled_joints])
    checker = CollisionChecker(model.with_base_offset(Pose.identity()), Scene())
    for _ in range(spec.max_rejection_attempts):
        q = q0.copy()
        q[idx] = rng.uniform(model.lower[idx], model.upper[idx])
        if not checker.in_collision(q):
            return q
    raise RejectionExhausted(
        f"no self-collision-free configuration of '{model.name}' in {spec.max_rejection_attempts} attempts")


def substream(seed: int, *key: int) -> np.random.Generator:
    """Philox generator for the counter-based substream ``key`` of ``seed``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))


def variation(nominal: Scene, spec: VariationSpec, seed: int, index: int) -> Scene:
    """Scene ``index`` of the variation stream for ``seed``."""
    return _sample_with_streams(nominal, spec, lambda kind, k: substream(seed, index, kind, k))


def generate_variations(nominal: Scene, spec: VariationSpec, count: int, seed: int,
                        articulation_spec: ArticulationSpec | None = None) -> list[Scene]:
    if count < 1:
        raise ValueError("count must be >= 1")
    if articulation_spec is not None:
        spec = VariationSpec(spec.objects, articulation_spec)
    return [variation(nominal, spec, seed, i) for i in range(count)]


# -- file format ---------------------------------------------------------------

def variation_spec_from_dict(data: Any, base_dir: str = ".", scene: Scene | None = None) -> VariationSpec:
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise SchemaError("<root>", "variation document must be a mapping")
    entries = []
    for i, v in enumerate(data.get("variations") or []):
        where = f"variations[{i}]"
        if not isinstance(v, Mapping) or "object" not in v:
            raise SchemaError(f"{where}.object", "missing")
        pos = v.get("position") or {}
        rot = v.get("orientation") or {}
        if pos == "none":
            pos = {}
        if rot == "none":
            rot = {}
        entries.append(ObjectNoise(
            str(v["object"]),
            tuple(Noise.from_dict(pos.get(a), f"{where}.position.{a}") for a in AXES_POS),
            tuple(Noise.from_dict(rot.get(a), f"{where}.orientation.{a}") for a in AXES_ROT),
        ))
    art = None
    ad = data.get("articulation")
    if ad:
        if "urdf_file" not in ad:
            raise SchemaError("articulation.urdf_file", "missing")
        upath = ad["urdf_file"] if os.path.isabs(ad["urdf_file"]) else os.path.join(base_dir, ad["urdf_file"])
        if not os.path.exists(upath):
            raise SchemaError("articulation.urdf_file", f"file not found: {upath}")
        model = load_urdf(upath)
        joints = ad.get("joints")
        joints = tuple(model.joint_names if joints is None else joints)
        art = ArticulationSpec(model, joints, int(ad.get("max_attempts", DEFAULT_MAX_ATTEMPTS)), ad.get("name"))
    spec = VariationSpec(tuple(entries), art)
    if scene is not None:
        spec.validate(scene)
    return spec


def load_variation_spec(path: str, scene: Scene | None = None) -> VariationSpec:
    data = read_yaml(path)
    try:
        return variation_spec_from_dict(data, os.path.dirname(os.path.abspath(path)), scene)
    except SchemaError as exc:
        if exc.path is None:
            exc.path = path
        raise


def variation_spec_to_dict(spec: VariationSpec, base_dir: str = ".") -> dict:
    doc: dict = {"variations": [{
        "object": o.object_name,
        "position": {a: n.to_dict() for a, n in zip(AXES_POS, o.position)},
        "orientation": {a: n.to_dict() for a, n in zip(AXES_ROT, o.orientation)},
    } for o in spec.objects]}
    if spec.articulation is not None:
        a = spec.articulation
        doc["articulation"] = {
            "urdf_file": os.path.relpath(a.model.source, base_dir) if a.model.source else None,
            "joints": list(a.sampled_joints),
            "max_attempts": a.max_rejection_attempts,
        }
        if a.part_name:
            doc["articulation"]["name"] = a.part_name
    return doc
