"""Bidirectional RRT with extend/connect."""
from __future__ import annotations

import numpy as np

from ..collision import CollisionChecker
from .base import (Deadline, NodeStore, Path, PlannerParams, PlanResult, chunked_states, first_invalid_segment,
                   steer, timeout_error)

ADVANCED, REACHED, TRAPPED = 0, 1, 2


def _extend(tree: NodeStore, target: np.ndarray, checker, params) -> tuple[int, int]:
    near = tree.nearest(target)
    qn = tree.q[near]
    qnew = steer(qn, target, params.range)
    if not checker.motion_valid(qn, qnew, params.validation_resolution):
        return TRAPPED, -1
    idx = tree.add(qnew, near)
    return (REACHED if np.array_equal(qnew, target) else ADVANCED), idx


def _connect(tree: NodeStore, target: np.ndarray, checker, params) -> tuple[int, int]:
    """Repeated extension toward ``target``, validated in one batch."""
    near = tree.nearest(target)
    qn = tree.q[near].copy()
    if np.array_equal(qn, target):
        return REACHED, near
    chain = np.vstack([qn[None, :], chunked_states(qn, target, params.range)])
    ok = first_invalid_segment(checker, chain, params.validation_resolution)
    if ok == 0:
        return TRAPPED, -1
    last = near
    for k in range(1, ok + 1):
        last = tree.add(chain[k], last)
    return (REACHED if ok == len(chain) - 1 else ADVANCED), last


def plan_rrt_connect(checker: CollisionChecker, start: np.ndarray, goal: np.ndarray,
                     params: PlannerParams) -> PlanResult:
    deadline = Deadline(params.timeout)
    rng = np.random.Generator(np.random.Philox(params.seed))
    model = checker.model
    if np.array_equal(start, goal):
        return PlanResult(Path(start[None, :]), deadline.elapsed())
    ta, tb = NodeStore(model.dof, start), NodeStore(model.dof, goal)
    a_is_start = True
    it = 0
    while not deadline.expired():
        it += 1
        qrand = rng.uniform(model.lower, model.upper)
        status, new = _extend(ta, qrand, checker, params)
        if status != TRAPPED:
            cstatus, other = _connect(tb, ta.q[new], checker, params)
            if cstatus == REACHED:
                w = _join(ta, new, tb, other) if a_is_start else _join(tb, other, ta, new)
                return PlanResult(Path(np.array(w)), deadline.elapsed(), iterations=it)
        ta, tb = tb, ta
        a_is_start = not a_is_start
    raise timeout_error(params, deadline)


def _join(start_tree: NodeStore, s_idx: int, goal_tree: NodeStore, g_idx: int) -> list:
    """Start root ... s_idx == g_idx ... goal root (the meeting state appears once)."""
    return start_tree.branch(s_idx)[::-1] + goal_tree.branch(g_idx)[1:]
