"""Shared planner plumbing: parameters, paths, validation and shortcutting."""
from __future__ import annotations

import math
import os
import tempfile
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..collision import CollisionChecker, interpolate
from ..errors import InvalidRequest, PlannerTimeout

PLANNER_NAMES = ("rrt_connect", "biest", "rrt_star")
DEFAULT_RESOLUTION = 0.05

CostCallback = Callable[[float, float], None]


@dataclass(frozen=True)
class PlannerParams:
    name: str = "rrt_connect"
    range: float = 0.5
    timeout: float = 60.0
    validation_resolution: float = DEFAULT_RESOLUTION
    goal_bias: float = 0.05
    seed: int = 0

    def __post_init__(self):
        if self.name not in PLANNER_NAMES:
            raise InvalidRequest(f"unknown planner '{self.name}'; valid names: {', '.join(PLANNER_NAMES)}")
        if not self.range > 0:
            raise InvalidRequest("range must be > 0")
        if not self.timeout > 0:
            raise InvalidRequest("timeout must be > 0")
        if not self.validation_resolution > 0:
            raise InvalidRequest("validation_resolution must be > 0")
        if not 0.0 <= self.goal_bias <= 1.0:
            raise InvalidRequest("goal_bias must be in [0, 1]")


def path_cost(waypoints) -> float:
    """Joint-space path length, the sum of Euclidean segment lengths."""
    w = np.asarray(waypoints, dtype=float)
    if len(w) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(w, axis=0), axis=1).sum())


@dataclass(frozen=True, eq=False)
class Path:
    waypoints: np.ndarray

    def __post_init__(self):
        w = np.array(self.waypoints, dtype=float)
        if w.ndim != 2 or len(w) == 0:
            raise ValueError("a path needs at least one waypoint")
        w.setflags(write=False)
        object.__setattr__(self, "waypoints", w)

    @property
    def cost(self) -> float:
        return path_cost(self.waypoints)

    @property
    def dof(self) -> int:
        return self.waypoints.shape[1]

    def __len__(self):
        return len(self.waypoints)

    def __eq__(self, other):
        return isinstance(other, Path) and np.array_equal(self.waypoints, other.waypoints)


@dataclass
class PlanResult:
    path: Path
    time: float
    trace: list = field(default_factory=list)  # (elapsed s, best cost), optimizing planners only
    iterations: int = 0


class Deadline:
    def __init__(self, timeout: float):
        self.t0 = time.monotonic()
        self.end = self.t0 + timeout

    def expired(self) -> bool:
        return time.monotonic() >= self.end

    def elapsed(self) -> float:
        return time.monotonic() - self.t0


def segment_states(waypoints, resolution: float) -> np.ndarray:
    """All interpolated states of a waypoint sequence, each segment sampled by :func:`interpolate`."""
    w = np.asarray(waypoints, dtype=float)
    if len(w) == 1:
        return w.copy()
    return np.concatenate([interpolate(w[i], w[i + 1], resolution) for i in range(len(w) - 1)])


def validate_path(checker: CollisionChecker, path: Path | np.ndarray, resolution: float) -> bool:
    """True iff every interpolated state is within limits and collision-free."""
    if not resolution > 0:
        raise ValueError("resolution must be > 0")
    w = path.waypoints if isinstance(path, Path) else np.asarray(path, dtype=float)
    return checker.all_valid(segment_states(w, resolution))


def shortcut(path: Path, checker: CollisionChecker, iterations: int, rng: np.random.Generator,
             resolution: float = DEFAULT_RESOLUTION) -> Path:
    """Random shortcutting; only replacements that keep the path valid and shorter are kept."""
    w = [np.array(p) for p in path.waypoints]
    for _ in range(iterations):
        if len(w) < 3:
            break
        i, j = sorted(rng.choice(len(w), size=2, replace=False))
        if j - i < 2:
            continue
        old = path_cost(w[i:j + 1])
        new = float(np.linalg.norm(w[j] - w[i]))
        if new < old - 1e-12 and checker.motion_valid(w[i], w[j], resolution):
            w = w[:i + 1] + w[j:]
    return Path(np.array(w))


def steer(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    d = b - a
    n = float(np.linalg.norm(d))
    if n <= step:
        return b.copy()
    return a + d * (step / n)


def chunked_states(a: np.ndarray, b: np.ndarray, step: float) -> np.ndarray:
    """Nodes from ``a`` (exclusive) to ``b`` (inclusive) spaced ``step`` apart."""
    d = b - a
    n = float(np.linalg.norm(d))
    k = max(1, int(math.ceil(n / step - 1e-12)))
    t = np.arange(1, k + 1, dtype=float) / k
    out = a[None, :] + t[:, None] * d[None, :]
    out[-1] = b
    return out


def first_invalid_segment(checker: CollisionChecker, chain: np.ndarray, resolution: float) -> int:
    """Index of the first invalid segment of ``chain`` (len(chain)-1 if all are valid).

    Every segment is interpolated exactly as :func:`validate_path` does, so a
    prefix reported valid here is valid there too.
    """
    counts = []
    states = []
    for i in range(len(chain) - 1):
        s = interpolate(chain[i], chain[i + 1], resolution)
        states.append(s)
        counts.append(len(s))
    allstates = np.concatenate(states)
    bad = ~checker.within_limits(allstates)
    if not bad.any():
        bad = checker.collision_flags(allstates)
    if not bad.any():
        return len(chain) - 1
    first = int(np.argmax(bad))
    return int(np.searchsorted(np.cumsum(counts), first, side="right"))


class NodeStore:
    """Growable array of tree nodes with parent links."""

    def __init__(self, dof: int, root: np.ndarray, capacity: int = 1024):
        self.q = np.empty((capacity, dof))
        self.parent = np.empty(capacity, dtype=np.int64)
        self.n = 0
        self.add(root, -1)

    def add(self, q: np.ndarray, parent: int) -> int:
        if self.n == len(self.q):
            self.q = np.concatenate([self.q, np.empty_like(self.q)])
            self.parent = np.concatenate([self.parent, np.empty_like(self.parent)])
        self.q[self.n] = q
        self.parent[self.n] = parent
        self.n += 1
        return self.n - 1

    @property
    def nodes(self) -> np.ndarray:
        return self.q[:self.n]

    def nearest(self, q: np.ndarray) -> int:
        return int(np.argmin(((self.nodes - q) ** 2).sum(axis=1)))

    def branch(self, i: int) -> list[np.ndarray]:
        """States from node ``i`` back to the root."""
        out = []
        while i >= 0:
            out.append(self.q[i].copy())
            i = int(self.parent[i])
        return out


def check_request(checker: CollisionChecker, start, goal) -> tuple[np.ndarray, np.ndarray]:
    model = checker.model
    start = model.check_config(start)
    goal = model.check_config(goal)
    for label, q in (("start", start), ("goal", goal)):
        if not checker.is_valid(q):
            raise InvalidRequest(f"{label} configuration is out of limits or in collision")
    return start, goal


def timeout_error(params: PlannerParams, deadline: Deadline) -> PlannerTimeout:
    exc = PlannerTimeout(f"{params.name} found no solution within {params.timeout} s")
    exc.elapsed = deadline.elapsed()
    return exc


# -- path files ----------------------------------------------------------------

def save_path(path: Path, filename: str) -> None:
    lines = [f"# dof {path.dof} cost {path.cost!r}"]
    lines += [" ".join(repr(float(v)) for v in w) for w in path.waypoints]
    d = os.path.dirname(os.path.abspath(filename))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, "w") as fh:
        fh.write("\n".join(lines) + "\n")
    os.replace(tmp, filename)


def load_path(filename: str) -> Path:
    rows = []
    dof = None
    with open(filename) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                parts = line[1:].split()
                if "dof" in parts:
                    dof = int(parts[parts.index("dof") + 1])
                continue
            rows.append([float(v) for v in line.split()])
    w = np.array(rows, dtype=float).reshape(len(rows), -1)
    if dof is not None and w.shape[1] != dof:
        raise ValueError(f"{filename}: header says {dof} joints, rows have {w.shape[1]}")
    return Path(w)
