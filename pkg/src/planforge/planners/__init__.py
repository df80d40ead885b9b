"""Sampling-based joint-space planners."""
from __future__ import annotations

from ..collision import CollisionChecker
from ..kinematics import KinematicModel
from ..scene import Scene
from .base import (PLANNER_NAMES, Path, PlannerParams, PlanResult, load_path, path_cost, save_path, shortcut,
                   validate_path, check_request)
from .biest import plan_biest
from .rrt_connect import plan_rrt_connect
from .rrt_star import plan_rrt_star

_REGISTRY = {
    "rrt_connect": plan_rrt_connect,
    "biest": plan_biest,
    "rrt_star": plan_rrt_star,
}


def plan(model: KinematicModel, scene: Scene, request, params: PlannerParams, cost_callback=None,
         checker: CollisionChecker | None = None) -> PlanResult:
    """Solve ``request`` (start/goal plus attachments) in ``scene`` with the planner named in ``params``."""
    if checker is None:
        checker = CollisionChecker(model, scene, getattr(request, "attached", ()))
    start, goal = check_request(checker, request.start, request.goal)
    fn = _REGISTRY[params.name]
    if params.name == "rrt_star":
        return fn(checker, start, goal, params, cost_callback)
    return fn(checker, start, goal, params)


__all__ = [
    "PLANNER_NAMES", "Path", "PlannerParams", "PlanResult", "plan", "plan_biest", "plan_rrt_connect",
    "plan_rrt_star", "path_cost", "validate_path", "shortcut", "save_path", "load_path",
]
