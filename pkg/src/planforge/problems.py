"""Joint-space planning requests from object-relative manipulation queries.

Offsets chain as  T_tip ∘ S2 = W(S0) ∘ S1  where S0 is the object frame, S1 the
grasp offset in that frame and S2 the robot's tool offset on its tip link.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence, Union

import numpy as np

from .collision import Attachment, CollisionChecker
from .errors import DimensionMismatch, IkNoSolution, SchemaError, UnknownTip
from .geometry import Pose, rotation_angle, rotation_error_vector
from .kinematics import KinematicModel, load_urdf
from .scene import Scene, pose_from_dict, pose_to_dict, read_yaml, shape_from_dict, shape_to_dict, write_yaml
from .scene import FORMAT_VERSION


@dataclass(frozen=True)
class ManipulationQuery:
    name: str
    object_name: str
    tip: str
    grasp_offset: Pose = field(default_factory=Pose.identity)
    attach: bool = False
    orientation_free: bool = False


@dataclass(frozen=True)
class JointGoal:
    """An endpoint given directly as joint values."""

    name: str
    joints: tuple

    @property
    def q(self) -> np.ndarray:
        return np.array(self.joints, dtype=float)


Endpoint = Union[ManipulationQuery, JointGoal, Sequence[float], np.ndarray]


@dataclass(frozen=True, eq=False)
class RobotAdapter:
    model: KinematicModel
    tool_offsets: Mapping[str, Pose] = field(default_factory=dict)
    source: str | None = None

    @property
    def base_offset(self) -> Pose:
        return self.model.base_offset

    def tool_offset(self, tip: str) -> Pose:
        if tip not in self.model.link_map:
            raise UnknownTip(f"tip '{tip}' is not a link of '{self.model.name}'")
        return self.tool_offsets.get(tip, Pose.identity())


@dataclass(frozen=True)
class IkParams:
    restarts: int = 50
    iters: int = 200
    pos_tol: float = 1e-3
    rot_tol: float = 1e-2
    damping: float = 0.1


@dataclass(frozen=True, eq=False)
class MotionPlanningRequest:
    start: np.ndarray
    goal: np.ndarray
    attachments: tuple = ()  # (endpoint label, Attachment)
    meta: Mapping[str, Any] = field(default_factory=dict)

    @property
    def attached(self) -> tuple:
        return tuple(a for _, a in self.attachments)

    def __eq__(self, other):
        return isinstance(other, MotionPlanningRequest) and request_to_dict(self) == request_to_dict(other)


# -- targets -------------------------------------------------------------------

def resolve_target_pose(scene: Scene, query: ManipulationQuery, adapter: RobotAdapter) -> Pose:
    """World pose the tip link must reach: W(S0) ∘ S1 ∘ S2⁻¹."""
    s2 = adapter.tool_offset(query.tip)
    return scene.world_pose(query.object_name) @ query.grasp_offset @ s2.inverse()


def tip_errors(model: KinematicModel, q, tip: str, target: Pose) -> tuple[float, float]:
    """(position error, geodesic rotation error) of ``tip`` at ``q`` against ``target``."""
    pose = model.link_pose(q, tip)
    dpos = float(np.linalg.norm(pose.translation - target.translation))
    drot = rotation_angle((target.inverse() @ pose).rotation)
    return dpos, drot


def _solve_dls(model: KinematicModel, targets: Mapping[str, Pose], orientation_free: Mapping[str, bool],
               q0: np.ndarray, params: IkParams) -> np.ndarray | None:
    tips = list(targets)
    idx = [model.link_index[t] for t in tips]
    lam2 = params.damping ** 2
    q = q0.copy()
    for _ in range(params.iters + 1):
        mats = model.link_transforms(q)
        errs, rows, done = [], [], True
        for t, k in zip(tips, idx):
            tgt = targets[t]
            ep = tgt.translation - mats[k, :3, 3]
            er = rotation_error_vector(mats[k, :3, :3], tgt.rotation_matrix)
            free = orientation_free.get(t, False)
            if np.linalg.norm(ep) > params.pos_tol or (not free and np.linalg.norm(er) > params.rot_tol):
                done = False
            jac = model.jacobian(q, t, mats)
            if free:
                errs.append(ep)
                rows.append(jac[:3])
            else:
                errs.append(np.concatenate([ep, er]))
                rows.append(jac)
        if done:
            return q
        e = np.concatenate(errs)
        j = np.vstack(rows)
        dq = j.T @ np.linalg.solve(j @ j.T + lam2 * np.eye(j.shape[0]), e)
        q = model.clamp(q + dq)
    return None


def multi_tip_ik(adapter: RobotAdapter, scene: Scene, targets: Mapping[str, Pose], params: IkParams,
                 rng: np.random.Generator, orientation_free: Mapping[str, bool] | None = None,
                 attachments: Sequence[Attachment] = (), checker: CollisionChecker | None = None) -> np.ndarray:
    """First collision-free DLS solution reaching every tip target, over random restarts."""
    model = adapter.model
    for t, p in targets.items():
        adapter.tool_offset(t)
        if not (np.all(np.isfinite(p.translation)) and np.all(np.isfinite(p.rotation))):
            raise ValueError(f"target for '{t}' is not finite")
    free = dict(orientation_free or {})
    if checker is None:
        checker = CollisionChecker(model, scene, attachments)
    for _ in range(params.restarts):
        q = _solve_dls(model, targets, free, model.sample_uniform(rng), params)
        if q is not None and not checker.in_collision(q):
            return q
    raise IkNoSolution(f"no collision-free IK solution for tips {sorted(targets)} after {params.restarts} restarts")


def collision_aware_ik(adapter: RobotAdapter, scene: Scene, target: Pose, params: IkParams,
                       rng: np.random.Generator, tip: str | None = None, orientation_free: bool = False,
                       attachments: Sequence[Attachment] = ()) -> np.ndarray:
    tip = tip or adapter.model.tips[0]
    return multi_tip_ik(adapter, scene, {tip: target}, params, rng, {tip: orientation_free}, attachments)


# -- requests ------------------------------------------------------------------

def attachment_for(scene: Scene, query: ManipulationQuery, adapter: RobotAdapter) -> Attachment:
    """Weld ``query.object_name`` to the tip with the offset implied by the grasp."""
    obj = scene.object(query.object_name)
    world = scene.world_pose(query.object_name)
    s2 = adapter.tool_offset(query.tip)
    model = adapter.model
    touch = set(model.rigid_group(query.tip))
    # fingers and other links hanging below the tip may hold the object
    stack = [query.tip]
    while stack:
        n = stack.pop()
        for j in model.child_joints[n]:
            touch.add(j.child)
            stack.append(j.child)
    return Attachment(obj.name, obj.shape, query.tip, s2 @ query.grasp_offset.inverse(), world, frozenset(touch))


def _endpoint_label(e: Endpoint, default: str) -> str:
    return getattr(e, "name", default)


def generate_request(scene: Scene, start: Endpoint, goal: Endpoint, adapter: RobotAdapter,
                     params: IkParams = IkParams(), rng: np.random.Generator | None = None,
                     meta: Mapping[str, Any] | None = None) -> MotionPlanningRequest:
    """Resolve both endpoints to joint values (IK where needed) with attachments applied."""
    rng = rng if rng is not None else np.random.default_rng()
    model = adapter.model
    attachments = []
    for label, e in (("start", start), ("goal", goal)):
        if isinstance(e, ManipulationQuery) and e.attach:
            attachments.append((label, attachment_for(scene, e, adapter)))
    attached = [a for _, a in attachments]
    checker = CollisionChecker(model, scene, attached)
    targets: dict = {}
    free_ends: dict = {}
    resolved = {}
    for label, e in (("start", start), ("goal", goal)):
        if isinstance(e, ManipulationQuery):
            target = resolve_target_pose(scene, e, adapter)
            targets[label] = {e.tip: pose_to_dict(target)}
            if e.orientation_free:
                free_ends[label] = True
            try:
                resolved[label] = multi_tip_ik(adapter, scene, {e.tip: target}, params, rng,
                                               {e.tip: e.orientation_free}, attached, checker)
            except IkNoSolution as exc:
                raise IkNoSolution(str(exc), endpoint=label) from None
        else:
            q = e.q if isinstance(e, JointGoal) else np.asarray(e, dtype=float)
            try:
                q = model.check_config(q)
            except DimensionMismatch as exc:
                raise IkNoSolution(str(exc), endpoint=label) from None
            if not checker.is_valid(q):
                raise IkNoSolution("explicit configuration is out of limits or in collision", endpoint=label)
            resolved[label] = q.copy()
    info = {"start": _endpoint_label(start, "explicit"), "goal": _endpoint_label(goal, "explicit")}
    if targets:
        info["targets"] = targets
    if free_ends:
        info["orientation_free"] = free_ends
    info.update(meta or {})
    return MotionPlanningRequest(resolved["start"], resolved["goal"], tuple(attachments), info)


def verify_feasible(request: MotionPlanningRequest, scene: Scene, model: KinematicModel, planner=None,
                    timeout_s: float = 60.0, seed: int = 0) -> bool:
    """True iff ``planner`` (RRT-Connect, range 0.5 by default) returns a valid path in time."""
    from .planners import PlannerParams, plan, validate_path
    from .errors import PlannerTimeout
    params = planner if planner is not None else PlannerParams("rrt_connect", range=0.5, timeout=timeout_s, seed=seed)
    try:
        result = plan(model, scene, request, params)
    except PlannerTimeout:
        return False
    checker = CollisionChecker(model, scene, request.attached)
    return validate_path(checker, result.path, params.validation_resolution)


def recheck_request(request: MotionPlanningRequest, scene: Scene, model: KinematicModel,
                    params: IkParams = IkParams()) -> list[str]:
    """Independent validity audit; returns a list of violations (empty if none)."""
    problems = []
    checker = CollisionChecker(model, scene, request.attached)
    for label in ("start", "goal"):
        q = getattr(request, label)
        if not model.within_limits(q):
            problems.append(f"{label} out of limits")
        if checker.in_collision(q):
            problems.append(f"{label} in collision")
        for tip, pd in (request.meta.get("targets", {}).get(label) or {}).items():
            dp, dr = tip_errors(model, q, tip, pose_from_dict(pd, f"targets.{label}.{tip}"))
            free = request.meta.get("orientation_free", {}).get(label, False)
            if dp > params.pos_tol or (not free and dr > params.rot_tol):
                problems.append(f"{label} misses target at '{tip}' by {dp:.2e} m / {dr:.2e} rad")
    return problems


# -- files -----------------------------------------------------------------------

def load_adapter(path: str) -> RobotAdapter:
    data = read_yaml(path) or {}
    base = os.path.dirname(os.path.abspath(path))
    if "urdf_file" not in data:
        raise SchemaError("urdf_file", "missing", path)
    upath = data["urdf_file"] if os.path.isabs(data["urdf_file"]) else os.path.join(base, data["urdf_file"])
    if not os.path.exists(upath):
        raise SchemaError("urdf_file", f"file not found: {upath}", path)
    model = load_urdf(upath).with_base_offset(pose_from_dict(data.get("base_offset"), "base_offset"))
    tools = {}
    for tip, pd in (data.get("tool_offsets") or {}).items():
        if tip not in model.link_map:
            raise UnknownTip(f"tool offset for unknown tip '{tip}' in {path}")
        tools[str(tip)] = pose_from_dict(pd, f"tool_offsets.{tip}")
    return RobotAdapter(model, tools, os.path.abspath(path))


def load_queries(path: str) -> tuple[dict, list[tuple[str, str]]]:
    """Queries by name plus the declared (start, goal) pairs.

    Without an explicit ``pairs`` list the first two queries form the only pair.
    """
    data = read_yaml(path) or {}
    out: dict = {}
    for i, qd in enumerate(data.get("queries") or []):
        where = f"queries[{i}]"
        if not isinstance(qd, Mapping) or "name" not in qd:
            raise SchemaError(f"{where}.name", "missing", path)
        name = str(qd["name"])
        if "joints" in qd:
            out[name] = JointGoal(name, tuple(float(v) for v in qd["joints"]))
            continue
        for key in ("object", "tip"):
            if key not in qd:
                raise SchemaError(f"{where}.{key}", "missing", path)
        out[name] = ManipulationQuery(name, str(qd["object"]), str(qd["tip"]),
                                      pose_from_dict(qd.get("grasp_offset"), f"{where}.grasp_offset"),
                                      bool(qd.get("attach", False)), bool(qd.get("orientation_free", False)))
    if "pairs" in data:
        pairs = [(str(p[0]), str(p[1])) for p in data["pairs"]]
    else:
        names = list(out)
        if len(names) < 2:
            raise SchemaError("queries", "need at least two queries or an explicit 'pairs' list", path)
        pairs = [(names[0], names[1])]
    for s, g in pairs:
        for n in (s, g):
            if n not in out:
                raise SchemaError("pairs", f"unknown query '{n}'", path)
    return out, pairs


def validate_queries(queries: Mapping[str, Any], scene: Scene, adapter: RobotAdapter) -> None:
    for q in queries.values():
        if isinstance(q, ManipulationQuery):
            scene.object(q.object_name)
            adapter.tool_offset(q.tip)
        else:
            adapter.model.check_config(q.q)


def request_to_dict(req: MotionPlanningRequest) -> dict:
    att = []
    for label, a in req.attachments:
        att.append({
            "endpoint": label,
            "object": a.object_name,
            "link": a.link,
            "shape": shape_to_dict(a.shape),
            "link_to_object": pose_to_dict(a.link_to_object),
            "world_pose": pose_to_dict(a.world_pose) if a.world_pose is not None else None,
            "touch_links": sorted(a.touch_links),
        })
    return {
        "format_version": FORMAT_VERSION,
        "start": [float(v) for v in req.start],
        "goal": [float(v) for v in req.goal],
        "attached": att,
        "meta": _plain(dict(req.meta)),
    }


def _plain(x):
    if isinstance(x, Mapping):
        return {str(k): _plain(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_plain(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    return x


def request_from_dict(data: Any, path: str | None = None) -> MotionPlanningRequest:
    if not isinstance(data, Mapping):
        raise SchemaError("<root>", "request document must be a mapping", path)
    for key in ("start", "goal"):
        if key not in data:
            raise SchemaError(key, "missing", path)
    atts = []
    for i, ad in enumerate(data.get("attached") or []):
        wp = ad.get("world_pose")
        atts.append((str(ad.get("endpoint", "goal")), Attachment(
            str(ad["object"]), shape_from_dict(ad["shape"], f"attached[{i}].shape", "."), str(ad["link"]),
            pose_from_dict(ad.get("link_to_object"), f"attached[{i}].link_to_object"),
            pose_from_dict(wp, f"attached[{i}].world_pose") if wp is not None else None,
            frozenset(ad.get("touch_links") or ()),
        )))
    return MotionPlanningRequest(np.array(data["start"], dtype=float), np.array(data["goal"], dtype=float),
                                 tuple(atts), dict(data.get("meta") or {}))


def save_request(req: MotionPlanningRequest, path: str) -> None:
    write_yaml(request_to_dict(req), path)


def load_request_file(path: str) -> MotionPlanningRequest:
    return request_from_dict(read_yaml(path), path)
