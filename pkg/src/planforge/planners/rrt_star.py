"""Anytime RRT* with goal biasing and shrinking-ball rewiring.

The rewiring radius is ``min(range, gamma * (log n / n) ** (1/d))`` with
``gamma = 2 (1 + 1/d)^(1/d) (vol / unit_ball_vol)^(1/d)`` where ``vol`` is the
volume of the joint-limit box and ``d`` the number of joints.  The planner runs
until the timeout and reports every strict improvement of the best cost.
"""
from __future__ import annotations

import math

import numpy as np

from ..collision import CollisionChecker
from .base import CostCallback, Deadline, NodeStore, Path, PlannerParams, PlanResult, path_cost, steer, timeout_error


def _gamma(lower: np.ndarray, upper: np.ndarray) -> float:
    d = len(lower)
    vol = float(np.prod(upper - lower))
    unit = math.pi ** (d / 2) / math.gamma(d / 2 + 1)
    return 2.0 * (1.0 + 1.0 / d) ** (1.0 / d) * (vol / unit) ** (1.0 / d)


class _CostTree(NodeStore):
    def __init__(self, dof, root):
        self.cost = np.zeros(1024)
        self.children: list[list[int]] = []
        super().__init__(dof, root)

    def add(self, q, parent, cost=0.0):
        idx = super().add(q, parent)
        if idx >= len(self.cost):
            self.cost = np.concatenate([self.cost, np.zeros_like(self.cost)])
        self.cost[idx] = cost
        self.children.append([])
        if parent >= 0:
            self.children[parent].append(idx)
        return idx

    def reparent(self, i: int, parent: int, cost: float):
        self.children[int(self.parent[i])].remove(i)
        self.parent[i] = parent
        self.children[parent].append(i)
        delta = cost - self.cost[i]
        stack = [i]
        while stack:
            k = stack.pop()
            self.cost[k] += delta
            stack.extend(self.children[k])


def plan_rrt_star(checker: CollisionChecker, start: np.ndarray, goal: np.ndarray, params: PlannerParams,
                  cost_callback: CostCallback | None = None) -> PlanResult:
    deadline = Deadline(params.timeout)
    rng = np.random.Generator(np.random.Philox(params.seed))
    model = checker.model
    res = params.validation_resolution
    if np.array_equal(start, goal):
        if cost_callback:
            cost_callback(deadline.elapsed(), 0.0)
        return PlanResult(Path(start[None, :]), deadline.elapsed(), [(deadline.elapsed(), 0.0)])
    d = model.dof
    gamma = _gamma(model.lower, model.upper)
    tree = _CostTree(d, start)
    goal_parents: list[int] = []  # nodes with a valid straight hop to the goal
    best = math.inf
    best_node = -1
    trace = []
    it = 0

    def goal_cost(k):
        return tree.cost[k] + float(np.linalg.norm(goal - tree.q[k]))

    while not deadline.expired():
        it += 1
        qrand = goal.copy() if rng.random() < params.goal_bias else rng.uniform(model.lower, model.upper)
        nearest = tree.nearest(qrand)
        qnew = steer(tree.q[nearest], qrand, params.range)
        if np.array_equal(qnew, tree.q[nearest]):
            continue
        if not checker.motion_valid(tree.q[nearest], qnew, res):
            continue
        n = tree.n
        r = min(params.range, gamma * (math.log(n + 1) / (n + 1)) ** (1.0 / d))
        dist = np.linalg.norm(tree.nodes - qnew, axis=1)
        near = np.nonzero(dist <= r)[0]
        parent = nearest
        cmin = tree.cost[nearest] + float(dist[nearest])
        order = near[np.argsort(tree.cost[near] + dist[near])]
        for k in order:
            c = tree.cost[k] + float(dist[k])
            if c >= cmin:
                break
            if checker.motion_valid(tree.q[k], qnew, res):
                parent, cmin = int(k), c
                break
        new = tree.add(qnew, parent, cmin)
        for k in near:
            if k == parent:
                continue
            c = cmin + float(dist[k])
            if c < tree.cost[k] - 1e-12 and checker.motion_valid(qnew, tree.q[k], res):
                tree.reparent(int(k), new, c)
        if np.linalg.norm(goal - qnew) <= params.range and checker.motion_valid(qnew, goal, res):
            goal_parents.append(new)
        if goal_parents:
            costs = [goal_cost(k) for k in goal_parents]
            k = int(np.argmin(costs))
            if costs[k] < best - 1e-12:
                best_node = goal_parents[k]
                t = deadline.elapsed()
                # report the cost of the waypoint path actually returned
                best = path_cost(_path_of(tree, best_node, goal))
                if not trace or best < trace[-1][1]:
                    trace.append((t, best))
                    if cost_callback:
                        cost_callback(t, best)
    if best_node < 0:
        raise timeout_error(params, deadline)
    return PlanResult(Path(_path_of(tree, best_node, goal)), deadline.elapsed(), trace, it)


def _path_of(tree: _CostTree, node: int, goal: np.ndarray) -> np.ndarray:
    w = tree.branch(node)[::-1]
    if not np.array_equal(w[-1], goal):
        w.append(goal.copy())
    return np.array(w)
