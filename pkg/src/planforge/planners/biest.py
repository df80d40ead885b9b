"""Bidirectional expansive-space trees.

Each tree grows from nodes picked with probability inversely proportional to
their neighborhood density (1 + number of tree nodes within ``range``), by
sampling a state uniformly in the ``range`` ball around the picked node.  After
each successful expansion the other tree tries a direct connection to the new
node from its nearest node within ``range``.
"""
from __future__ import annotations

import numpy as np

from ..collision import CollisionChecker
from .base import Deadline, NodeStore, Path, PlannerParams, PlanResult, timeout_error


class _DensityTree(NodeStore):
    def __init__(self, dof, root, radius):
        self.radius2 = radius * radius
        self.count = np.zeros(1024, dtype=np.int64)
        super().__init__(dof, root)

    def add(self, q, parent):
        n = self.n
        if n:
            close = ((self.nodes - q) ** 2).sum(axis=1) <= self.radius2
            self.count[:n][close] += 1
            own = int(close.sum())
        else:
            own = 0
        idx = super().add(q, parent)
        if idx >= len(self.count):
            self.count = np.concatenate([self.count, np.zeros_like(self.count)])
        self.count[idx] = own
        return idx

    def pick(self, rng) -> int:
        w = 1.0 / (1.0 + self.count[:self.n])
        return int(rng.choice(self.n, p=w / w.sum()))


def _ball_sample(rng, center, radius):
    d = rng.normal(size=center.shape)
    d /= np.linalg.norm(d) or 1.0
    r = radius * rng.random() ** (1.0 / len(center))
    return center + r * d


def plan_biest(checker: CollisionChecker, start: np.ndarray, goal: np.ndarray, params: PlannerParams) -> PlanResult:
    deadline = Deadline(params.timeout)
    rng = np.random.Generator(np.random.Philox(params.seed))
    model = checker.model
    res = params.validation_resolution
    if np.array_equal(start, goal):
        return PlanResult(Path(start[None, :]), deadline.elapsed())
    trees = [_DensityTree(model.dof, start, params.range), _DensityTree(model.dof, goal, params.range)]
    # a direct hop is tried once up front, like the first connection attempt of each tree
    if np.linalg.norm(goal - start) <= params.range and checker.motion_valid(start, goal, res):
        return PlanResult(Path(np.array([start, goal])), deadline.elapsed())
    side = 0
    it = 0
    while not deadline.expired():
        it += 1
        tree, other = trees[side], trees[1 - side]
        i = tree.pick(rng)
        q = np.clip(_ball_sample(rng, tree.q[i], params.range), model.lower, model.upper)
        if checker.motion_valid(tree.q[i], q, res):
            new = tree.add(q, i)
            j = other.nearest(q)
            if np.linalg.norm(other.q[j] - q) <= params.range and checker.motion_valid(q, other.q[j], res):
                a = tree.branch(new)[::-1]
                b = other.branch(j)
                w = a + b if side == 0 else b[::-1] + a[::-1]
                return PlanResult(Path(np.array(w)), deadline.elapsed(), iterations=it)
        side = 1 - side
    raise timeout_error(params, deadline)
