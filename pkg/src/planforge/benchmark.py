"""Benchmark harness and the analyses run on its records.

Conventions:

* A run that times out is recorded with ``success=False`` and
  ``time_s = timeout_s``; time statistics use that clamped value and success
  rates count it as a failure.
* Confidence intervals are percentile bootstrap intervals (99 %, 10^4
  resamples, fixed seed) of the median or mean as stated per function.
* Normalized cost divides a run's best-cost trace by the best final cost any
  planner reached on the same problem.
"""
from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .collision import CollisionChecker
from .errors import (DatasetError, EmptyGroup, MissingCoverage, NoTraces, PlannerTimeout, PrefixTooLarge,
                     PlanforgeError)
from .planners import PlannerParams, plan, validate_path

CSV_COLUMNS = ("planner", "range", "dataset", "problem", "run", "seed", "success", "time_s", "cost", "timeout_s")
CI_LEVEL = 0.99
BOOTSTRAP_RESAMPLES = 10_000
BOOTSTRAP_SEED = 20240101


@dataclass(frozen=True)
class QuerySpec:
    params: PlannerParams
    dataset: Any  # a dataset directory or any object with model / load_scene / load_request
    problem: int
    repeats: int = 1
    representation: str = "geometric"

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass
class RunRecord:
    planner: str
    range: float
    dataset: str
    problem: int
    run: int
    seed: int
    success: bool
    time_s: float
    cost: float | None
    timeout_s: float
    trace: list = field(default_factory=list)

    @property
    def label(self) -> str:
        return planner_label(self.planner, self.range)


def planner_label(name: str, rng: float) -> str:
    return f"{name}@{rng:g}"


class InMemoryDataset:
    """Problems held in memory: ``problems`` is a list of (scene, request), indexed from 1."""

    def __init__(self, model, problems: Sequence, name: str = "memory"):
        self.model = model
        self.problems = list(problems)
        self.name = name

    def __len__(self):
        return len(self.problems)

    def load_scene(self, i: int, representation: str = "geometric"):
        return self.problems[i - 1][0]

    def load_request(self, i: int):
        return self.problems[i - 1][1]


def run_seed(experiment_seed: int, problem: int, run: int) -> int:
    """Per-cell planner seed, shared by all planners so they see the same stream."""
    ss = np.random.SeedSequence(int(experiment_seed), spawn_key=(int(problem), int(run)))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


_dataset_cache: dict = {}


def _open_dataset(ds):
    if isinstance(ds, (str, os.PathLike)):
        root = os.path.abspath(ds)
        try:
            stamp = os.stat(os.path.join(root, "manifest.yaml")).st_mtime_ns
        except OSError:
            stamp = None
        # a rewritten manifest (e.g. after sensing) invalidates the cached handle
        key = (root, stamp)
        if key not in _dataset_cache:
            from .dataset import Dataset
            try:
                _dataset_cache[key] = Dataset.open(root)
            except PlanforgeError:
                raise
            except OSError as exc:
                raise DatasetError(f"cannot open dataset {ds}: {exc}") from None
        return _dataset_cache[key]
    return ds


def _dataset_name(ds) -> str:
    if isinstance(ds, (str, os.PathLike)):
        return os.path.basename(os.path.abspath(ds))
    return getattr(ds, "name", "dataset")


def run_once(params: PlannerParams, model, scene, request, dataset: str, problem: int, run: int) -> RunRecord:
    checker = CollisionChecker(model, scene, getattr(request, "attached", ()))
    try:
        result = plan(model, scene, request, params, checker=checker)
    except PlannerTimeout:
        return RunRecord(params.name, params.range, dataset, problem, run, params.seed, False,
                         params.timeout, None, params.timeout)
    ok = validate_path(checker, result.path, params.validation_resolution)
    return RunRecord(params.name, params.range, dataset, problem, run, params.seed, ok,
                     result.time if ok else params.timeout, result.path.cost if ok else None,
                     params.timeout, [list(map(float, p)) for p in result.trace] if ok else [])


def _cells(specs: Sequence[QuerySpec], experiment_seed: int):
    for spec in specs:
        for r in range(spec.repeats):
            seed = run_seed(experiment_seed, spec.problem, r)
            yield spec, r, seed


def _run_cell(args):
    spec, r, seed = args
    ds = _open_dataset(spec.dataset)
    params = PlannerParams(spec.params.name, spec.params.range, spec.params.timeout,
                           spec.params.validation_resolution, spec.params.goal_bias, seed)
    scene = ds.load_scene(spec.problem, spec.representation)
    request = ds.load_request(spec.problem)
    return run_once(params, ds.model, scene, request, _dataset_name(spec.dataset), spec.problem, r)


def run_experiment(specs: Sequence[QuerySpec], parallelism: int = 1, experiment_seed: int = 0,
                   progress: Callable[[RunRecord], None] | None = None) -> list[RunRecord]:
    """Run every (spec, repeat) cell; results keep spec order then repeat order."""
    cells = list(_cells(specs, experiment_seed))
    for spec in specs:
        ds = _open_dataset(spec.dataset)
        if not 1 <= spec.problem <= len(ds):
            raise DatasetError(f"problem {spec.problem} outside dataset of {len(ds)} problems")
    if parallelism <= 1 or len(cells) <= 1:
        out = []
        for c in cells:
            rec = _run_cell(c)
            if progress:
                progress(rec)
            out.append(rec)
        return out
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        out = []
        for rec in pool.map(_run_cell, cells):
            if progress:
                progress(rec)
            out.append(rec)
        return out


def range_sweep(dataset, planners: Sequence[str], range_values: Sequence[float], timeout: float, repeats: int,
                problems: Sequence[int] | None = None, parallelism: int = 1, experiment_seed: int = 0,
                validation_resolution: float = 0.05, progress=None) -> list[RunRecord]:
    """Full planner x range x problem x repeat grid."""
    for r in range_values:
        if not r > 0:
            raise ValueError("range values must be > 0")
    ds = _open_dataset(dataset)
    problems = list(problems) if problems is not None else list(range(1, len(ds) + 1))
    specs = [QuerySpec(PlannerParams(p, float(r), timeout, validation_resolution), dataset, i, repeats)
             for p in planners for r in range_values for i in problems]
    return run_experiment(specs, parallelism, experiment_seed, progress)


def sweep_grid(lo: float, hi: float, step: float) -> list[float]:
    """Inclusive grid ``lo, lo+step, ..., hi`` built without accumulating rounding error."""
    if not step > 0 or hi < lo:
        raise ValueError("need step > 0 and hi >= lo")
    n = int(math.floor((hi - lo) / step + 1e-9))
    return [round(lo + k * step, 12) for k in range(n + 1)]


def sweep_table(records: Iterable[RunRecord]) -> list[tuple[str, float, float, int]]:
    """(planner, range, mean time, n) per (planner, range), sorted by planner then range."""
    groups: dict = {}
    for r in records:
        groups.setdefault((r.planner, r.range), []).append(r.time_s)
    return [(p, rg, float(np.mean(v)), len(v)) for (p, rg), v in sorted(groups.items())]


# -- statistics ------------------------------------------------------------------

@dataclass(frozen=True)
class Stats:
    n: int
    mean: float
    median: float
    success_rate: float
    ci_low: float
    ci_high: float


def bootstrap_ci(values, stat: Callable = np.median, level: float = CI_LEVEL,
                 resamples: int = BOOTSTRAP_RESAMPLES, seed: int = BOOTSTRAP_SEED) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    if len(v) == 0:
        raise EmptyGroup("cannot bootstrap an empty sample")
    if np.all(v == v[0]):
        return float(v[0]), float(v[0])
    rng = np.random.Generator(np.random.Philox(seed))
    draws = v[rng.integers(0, len(v), size=(resamples, len(v)))]
    s = stat(draws, axis=1)
    a = (1.0 - level) / 2.0
    # order statistics rather than interpolation so infinite entries stay well-defined
    lo, hi = np.quantile(s, [a, 1.0 - a], method="inverted_cdf")
    return float(lo), float(hi)


def summarize(times, successes=None) -> Stats:
    t = np.asarray(list(times), dtype=float)
    if len(t) == 0:
        raise EmptyGroup("empty group")
    s = np.ones(len(t), dtype=bool) if successes is None else np.asarray(list(successes), dtype=bool)
    lo, hi = bootstrap_ci(t)
    return Stats(len(t), float(t.mean()), float(np.median(t)), float(s.mean()), lo, hi)


def aggregate(records: Iterable[RunRecord], group_by: Sequence[str] = ("planner", "range")) -> dict:
    """Time statistics per group key (a tuple of the ``group_by`` field values)."""
    groups: dict = {}
    for r in records:
        key = tuple(getattr(r, g) for g in group_by)
        groups.setdefault(key, []).append(r)
    if not groups:
        raise EmptyGroup("no records to aggregate")
    return {k: summarize([r.time_s for r in v], [r.success for r in v]) for k, v in sorted(groups.items())}


# -- adversarial ordering ------------------------------------------------------------

def mean_times(records: Iterable[RunRecord], label: str) -> dict[int, float]:
    acc: dict = {}
    for r in records:
        if r.label == label:
            acc.setdefault(r.problem, []).append(r.time_s)
    return {p: float(np.mean(v)) for p, v in acc.items()}


def adversarial_order(records: Sequence[RunRecord], planner_a: str, planner_b: str, favor: str | None = None) -> list[int]:
    """Problem ordering under which ``favor`` (default ``planner_a``) looks best early on.

    Problems are sorted by ``mean_time(favor) - mean_time(other)`` ascending, so
    the problems where the favored planner wins by the most come first.  Ties
    keep problem-index order.  Planners are given by label (``name@range``).
    """
    favor = planner_a if favor is None else favor
    if favor not in (planner_a, planner_b):
        raise ValueError("favor must be one of the two planners")
    ta, tb = mean_times(records, planner_a), mean_times(records, planner_b)
    problems = sorted(set(ta) | set(tb))
    missing = [p for p in problems if p not in ta or p not in tb]
    if missing or not problems:
        raise MissingCoverage(f"planners lack records for problems {missing or 'all'}")
    sign = 1.0 if favor == planner_a else -1.0
    return sorted(problems, key=lambda p: (sign * (ta[p] - tb[p]), p))


@dataclass(frozen=True)
class PrefixRow:
    prefix: int
    planner: str
    mean_time: float
    ci_low: float
    ci_high: float


def prefix_curves(records: Sequence[RunRecord], ordering: Sequence[int],
                  prefixes: Sequence[int] = (5, 10, 50, 100)) -> list[PrefixRow]:
    """Mean time (over all runs) on the first ``k`` problems of ``ordering``, per planner label."""
    labels = sorted({r.label for r in records})
    by: dict = {}
    for r in records:
        by.setdefault((r.label, r.problem), []).append(r.time_s)
    rows = []
    for k in prefixes:
        if k > len(ordering) or k < 1:
            raise PrefixTooLarge(f"prefix {k} exceeds the {len(ordering)} ordered problems")
        head = ordering[:k]
        for lab in labels:
            vals = [t for p in head for t in by.get((lab, p), [])]
            if not vals:
                raise MissingCoverage(f"planner {lab} has no records on the first {k} problems")
            lo, hi = bootstrap_ci(vals, np.mean)
            rows.append(PrefixRow(k, lab, float(np.mean(vals)), lo, hi))
    return rows


def winners(rows: Sequence[PrefixRow]) -> dict[int, str]:
    """Fastest planner per prefix (ties go to the lexicographically first label)."""
    out: dict = {}
    for k in sorted({r.prefix for r in rows}):
        cands = sorted((r.mean_time, r.planner) for r in rows if r.prefix == k)
        out[k] = cands[0][1]
    return out


def winner_flip(rows: Sequence[PrefixRow], small: int | None = None, large: int | None = None) -> tuple[str, str, bool]:
    w = winners(rows)
    small = min(w) if small is None else small
    large = max(w) if large is None else large
    return w[small], w[large], w[small] != w[large]


# -- cost convergence -------------------------------------------------------------------

@dataclass(frozen=True)
class CurvePoint:
    time: float
    median: float
    ci_low: float
    ci_high: float


def _cost_at(trace, times: np.ndarray) -> np.ndarray:
    if not trace:
        return np.full(len(times), np.inf)
    t = np.array([p[0] for p in trace])
    c = np.array([p[1] for p in trace])
    idx = np.searchsorted(t, times, side="right") - 1
    return np.where(idx >= 0, c[np.maximum(idx, 0)], np.inf)


def normalized_cost_curves(records: Sequence[RunRecord], times: Sequence[float] | None = None) -> dict[str, list[CurvePoint]]:
    """Median normalized best cost over time per planner label.

    Unsolved runs count as infinite cost at a given time, so a median is finite
    only once at least half the runs have a solution.
    """
    traced = [r for r in records if r.trace]
    if not traced:
        raise NoTraces("no records carry cost-vs-time traces")
    best: dict = {}
    for r in traced:
        best[(r.dataset, r.problem)] = min(best.get((r.dataset, r.problem), np.inf), r.trace[-1][1])
    if times is None:
        times = sorted({float(p[0]) for r in traced for p in r.trace})
    grid = np.asarray(times, dtype=float)
    per_label: dict = {}
    for r in records:
        if r.trace or not r.success:
            denom = best.get((r.dataset, r.problem))
            if denom is None:
                continue
            norm = _cost_at(r.trace, grid) / denom if denom > 0 else np.where(_cost_at(r.trace, grid) == 0, 1.0, np.inf)
            per_label.setdefault(r.label, []).append(norm)
    out = {}
    for lab, rows in sorted(per_label.items()):
        m = np.vstack(rows)
        pts = []
        for j, t in enumerate(grid):
            col = m[:, j]
            lo, hi = bootstrap_ci(col)
            pts.append(CurvePoint(float(t), float(np.median(col)), lo, hi))
        out[lab] = pts
    return out


# -- export ---------------------------------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _atomic(path: str, write: Callable) -> None:
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            write(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def export(records: Sequence[RunRecord], fmt: str, path: str) -> None:
    """Write records as CSV (fixed column order, no traces) or JSONL (one record per line with trace)."""
    if fmt == "csv":
        def w(fh):
            wr = csv.writer(fh, lineterminator="\n")
            wr.writerow(CSV_COLUMNS)
            for r in records:
                wr.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    elif fmt == "jsonl":
        def w(fh):
            for r in records:
                fh.write(json.dumps(asdict(r)) + "\n")
    else:
        raise ValueError(f"unknown export format '{fmt}' (csv or jsonl)")
    _atomic(path, w)


def _parse_row(row: Mapping[str, str], where: str) -> RunRecord:
    try:
        return RunRecord(
            planner=row["planner"], range=float(row["range"]), dataset=row["dataset"],
            problem=int(row["problem"]), run=int(row["run"]), seed=int(row["seed"]),
            success=row["success"].strip().lower() == "true", time_s=float(row["time_s"]),
            cost=float(row["cost"]) if row["cost"] not in ("", None) else None,
            timeout_s=float(row["timeout_s"]),
        )
    except (KeyError, ValueError, AttributeError) as exc:
        raise DatasetError(f"{where}: malformed record ({exc})") from None


def load_records(path: str) -> list[RunRecord]:
    """Read records written by :func:`export` (format chosen by extension)."""
    if path.endswith(".jsonl"):
        out = []
        with open(path) as fh:
            for n, line in enumerate(fh, 1):
                if line.strip():
                    d = json.loads(line)
                    names = {f.name for f in fields(RunRecord)}
                    out.append(RunRecord(**{k: v for k, v in d.items() if k in names}))
        return out
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            return []
        if tuple(reader.fieldnames) != CSV_COLUMNS:
            raise DatasetError(f"{path}: expected columns {','.join(CSV_COLUMNS)}")
        return [_parse_row(row, f"{path}:{i + 2}") for i, row in enumerate(reader)]
