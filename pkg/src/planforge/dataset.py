"""On-disk datasets of planning problems.

Layout (problems are numbered from 1)::

    DIR/manifest.yaml
    DIR/scenes/scene_0001.yaml
    DIR/clouds/cloud_0001.ply        (pointcloud representation)
    DIR/octrees/oct_0001.txt         (octree representation)
    DIR/requests/request_0001.yaml

The manifest is written last, so a directory without one is an incomplete
generation.  Input files are referenced by paths relative to DIR.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

from . import __version__
from .errors import (BudgetExhausted, DatasetError, IkNoSolution, IndexOutOfRange,
                     RejectionExhausted, RepresentationMissing, SchemaError)
from .problems import (IkParams, RobotAdapter, generate_request, load_adapter, load_queries, load_request_file,
                       save_request, validate_queries, verify_feasible)
from .sampler import load_variation_spec, substream, variation
from .scene import FORMAT_VERSION, Scene, load_scene as load_scene_file, read_yaml, save_scene, write_yaml
from .sensing import (DEFAULT_RESOLUTION, load_cameras, load_octree, load_ply, save_octree, save_ply,
                      sense_scene)

REPRESENTATIONS = ("geometric", "pointcloud", "octree")
MANIFEST = "manifest.yaml"
BUDGET_FACTOR = 10
VERIFY_TIMEOUT = 60.0

# substream namespace for per-attempt IK and verification draws
_IK_STREAM = 2
_VERIFY_STREAM = 3


def scene_file(i: int) -> str:
    return os.path.join("scenes", f"scene_{i:04d}.yaml")


def cloud_file(i: int) -> str:
    return os.path.join("clouds", f"cloud_{i:04d}.ply")


def octree_file(i: int) -> str:
    return os.path.join("octrees", f"oct_{i:04d}.txt")


def request_file(i: int) -> str:
    return os.path.join("requests", f"request_{i:04d}.yaml")


@dataclass
class Manifest:
    name: str
    robot: str
    scene: str
    variations: str
    queries: str
    count: int
    seed: int
    representations: list = field(default_factory=lambda: ["geometric"])
    cameras: str | None = None
    resolution: float = DEFAULT_RESOLUTION
    verify_timeout: float | None = VERIFY_TIMEOUT
    tool_version: str = __version__
    format_version: int = FORMAT_VERSION
    stage_failures: dict = field(default_factory=dict)

    def validate(self, where: str | None = None):
        if self.count < 1:
            raise SchemaError("count", "must be >= 1", where)
        if not self.representations or any(r not in REPRESENTATIONS for r in self.representations):
            raise SchemaError("representations", f"must be a non-empty subset of {list(REPRESENTATIONS)}", where)

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, d: Mapping, where: str | None = None) -> "Manifest":
        try:
            m = cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})
        except TypeError as exc:
            raise SchemaError("<root>", str(exc), where) from None
        m.validate(where)
        return m


@dataclass
class GenerationInputs:
    robot: str
    scene: str
    variations: str
    queries: str
    count: int
    seed: int = 0
    representations: Sequence[str] = ("geometric",)
    cameras: str | None = None
    resolution: float = DEFAULT_RESOLUTION
    verify_timeout: float | None = VERIFY_TIMEOUT
    name: str | None = None
    ik: IkParams = field(default_factory=IkParams)

    @classmethod
    def from_config(cls, path: str, **overrides) -> "GenerationInputs":
        """Read a generation config; file paths in it are relative to the config file."""
        data = read_yaml(path) or {}
        base = os.path.dirname(os.path.abspath(path))
        kw = {}
        for key in ("robot", "scene", "variations", "queries", "cameras"):
            if data.get(key) is not None:
                v = data[key]
                kw[key] = v if os.path.isabs(v) else os.path.join(base, v)
        for key in ("count", "seed", "resolution", "verify_timeout", "name"):
            if key in data:
                kw[key] = data[key]
        if "representations" in data:
            kw["representations"] = tuple(data["representations"])
        kw.update({k: v for k, v in overrides.items() if v is not None})
        missing = [k for k in ("robot", "scene", "variations", "queries", "count") if k not in kw]
        if missing:
            raise SchemaError(missing[0], "missing", path)
        return cls(**kw)


class Dataset:
    """Read access to a generated dataset directory."""

    def __init__(self, root: str, manifest: Manifest):
        self.root = os.path.abspath(root)
        self.manifest = manifest
        self._adapter: RobotAdapter | None = None

    @classmethod
    def open(cls, root: str) -> "Dataset":
        path = os.path.join(root, MANIFEST)
        if not os.path.isdir(root):
            raise DatasetError(f"dataset directory not found: {root}")
        if not os.path.exists(path):
            raise DatasetError(f"{root} has no {MANIFEST} (missing or incomplete generation)")
        ds = cls(root, Manifest.from_dict(read_yaml(path) or {}, path))
        on_disk = len([f for f in os.listdir(os.path.join(ds.root, "requests")) if f.startswith("request_")])
        if on_disk != ds.manifest.count:
            raise DatasetError(f"manifest lists {ds.manifest.count} problems but {on_disk} request files exist")
        return ds

    @property
    def name(self) -> str:
        return self.manifest.name

    def __len__(self):
        return self.manifest.count

    def _input(self, rel: str) -> str:
        return os.path.normpath(os.path.join(self.root, rel))

    @property
    def adapter(self) -> RobotAdapter:
        if self._adapter is None:
            self._adapter = load_adapter(self._input(self.manifest.robot))
        return self._adapter

    @property
    def model(self):
        return self.adapter.model

    def _check(self, i: int):
        if not 1 <= i <= len(self):
            raise IndexOutOfRange(f"problem {i} outside 1..{len(self)}")

    def load_scene(self, i: int, representation: str = "geometric") -> Scene:
        self._check(i)
        if representation not in self.manifest.representations:
            raise RepresentationMissing(f"dataset has no '{representation}' representation")
        if representation == "geometric":
            return load_scene_file(os.path.join(self.root, scene_file(i)))
        if representation == "octree":
            return Scene().with_octree(load_octree(os.path.join(self.root, octree_file(i))))
        return Scene().with_point_cloud(load_ply(os.path.join(self.root, cloud_file(i))))

    def load_request(self, i: int):
        self._check(i)
        return load_request_file(os.path.join(self.root, request_file(i)))


def _rel(path: str, root: str) -> str:
    return os.path.relpath(os.path.abspath(path), root)


def _write_sensed(root: str, i: int, scene: Scene, cameras, resolution: float, reps: Sequence[str]):
    result = sense_scene(scene, cameras, resolution)
    if "pointcloud" in reps:
        save_ply(result.cloud, os.path.join(root, cloud_file(i)))
    if "octree" in reps:
        save_octree(result.octree, os.path.join(root, octree_file(i)))


def generate_dataset(inputs: GenerationInputs, out_dir: str,
                     progress: Callable[[str], None] | None = None) -> Dataset:
    """Sample, solve and verify ``inputs.count`` problems into ``out_dir``.

    Attempt ``a`` (0-based) always uses scene variation ``a`` and its own IK and
    verification substreams, so reruns with the same inputs are identical.
    Failed attempts are discarded; after ``10 * count`` attempts without enough
    verified problems :class:`BudgetExhausted` is raised.
    """
    log = progress or (lambda msg: None)
    if inputs.count < 1:
        raise SchemaError("count", "must be >= 1")
    reps = list(dict.fromkeys(inputs.representations))
    if not reps or any(r not in REPRESENTATIONS for r in reps):
        raise SchemaError("representations", f"must be a non-empty subset of {list(REPRESENTATIONS)}")
    for label, p in (("robot", inputs.robot), ("scene", inputs.scene), ("variations", inputs.variations),
                     ("queries", inputs.queries)):
        if not os.path.exists(p):
            raise SchemaError(label, f"file not found: {p}")
    cameras = None
    if {"pointcloud", "octree"} & set(reps):
        if not inputs.cameras or not os.path.exists(inputs.cameras):
            raise SchemaError("cameras", f"sensed representations need a camera file (got {inputs.cameras})")
        cameras = load_cameras(inputs.cameras)
    if not inputs.resolution > 0:
        raise SchemaError("resolution", "must be > 0")

    adapter = load_adapter(inputs.robot)
    nominal = load_scene_file(inputs.scene)
    spec = load_variation_spec(inputs.variations, nominal)
    queries, pairs = load_queries(inputs.queries)
    validate_queries(queries, nominal, adapter)

    root = os.path.abspath(out_dir)
    for sub in ("scenes", "requests") + (("clouds",) if "pointcloud" in reps else ()) + \
            (("octrees",) if "octree" in reps else ()):
        os.makedirs(os.path.join(root, sub), exist_ok=True)
    if os.path.exists(os.path.join(root, MANIFEST)):
        os.unlink(os.path.join(root, MANIFEST))
    for sub in ("scenes", "requests", "clouds", "octrees"):
        d = os.path.join(root, sub)
        if os.path.isdir(d):
            for f in os.listdir(d):
                os.unlink(os.path.join(d, f))

    counts = {"sampling": 0, "ik": 0, "verify": 0}
    budget = BUDGET_FACTOR * inputs.count
    done = 0
    attempt = 0
    while done < inputs.count:
        if attempt >= budget:
            raise BudgetExhausted(f"only {done}/{inputs.count} problems after {budget} attempts "
                                  f"(failures: {counts})", counts)
        i = done + 1
        s_name, g_name = pairs[(i - 1) % len(pairs)]
        try:
            scene = variation(nominal, spec, inputs.seed, attempt)
        except RejectionExhausted as exc:
            counts["sampling"] += 1
            log(f"attempt {attempt}: sampling failed ({exc})")
            attempt += 1
            continue
        try:
            request = generate_request(scene, queries[s_name], queries[g_name], adapter, inputs.ik,
                                       substream(inputs.seed, attempt, _IK_STREAM, 0),
                                       meta={"problem": i, "scene_index": attempt})
        except IkNoSolution as exc:
            counts["ik"] += 1
            log(f"attempt {attempt}: {exc}")
            attempt += 1
            continue
        if inputs.verify_timeout:
            vseed = int(substream(inputs.seed, attempt, _VERIFY_STREAM, 0).integers(2 ** 32))
            if not verify_feasible(request, scene, adapter.model, timeout_s=inputs.verify_timeout, seed=vseed):
                counts["verify"] += 1
                log(f"attempt {attempt}: verification failed")
                attempt += 1
                continue
        save_scene(scene, os.path.join(root, scene_file(i)))
        save_request(request, os.path.join(root, request_file(i)))
        if cameras is not None:
            _write_sensed(root, i, scene, cameras, inputs.resolution, reps)
        log(f"problem {i}/{inputs.count} from attempt {attempt}")
        done += 1
        attempt += 1

    manifest = Manifest(
        name=inputs.name or os.path.basename(root),
        robot=_rel(inputs.robot, root), scene=_rel(inputs.scene, root),
        variations=_rel(inputs.variations, root), queries=_rel(inputs.queries, root),
        count=inputs.count, seed=int(inputs.seed), representations=reps,
        cameras=_rel(inputs.cameras, root) if inputs.cameras else None,
        resolution=float(inputs.resolution), verify_timeout=inputs.verify_timeout,
        stage_failures=counts,
    )
    write_yaml(manifest.to_dict(), os.path.join(root, MANIFEST))
    return Dataset(root, manifest)


def sense_dataset(root: str, cameras_file: str, resolution: float = DEFAULT_RESOLUTION,
                  representations: Sequence[str] = ("pointcloud", "octree")) -> Dataset:
    """Add (or overwrite) sensed representations for every problem of an existing dataset."""
    if not resolution > 0:
        raise SchemaError("resolution", "must be > 0")
    ds = Dataset.open(root)
    if not os.path.exists(cameras_file):
        raise SchemaError("cameras", f"file not found: {cameras_file}")
    cameras = load_cameras(cameras_file)
    for sub, rep in (("clouds", "pointcloud"), ("octrees", "octree")):
        if rep in representations:
            os.makedirs(os.path.join(ds.root, sub), exist_ok=True)
    for i in range(1, len(ds) + 1):
        _write_sensed(ds.root, i, ds.load_scene(i), cameras, resolution, representations)
    m = ds.manifest
    m.representations = [r for r in REPRESENTATIONS if r in set(m.representations) | set(representations)]
    m.cameras = _rel(cameras_file, ds.root)
    m.resolution = float(resolution)
    write_yaml(m.to_dict(), os.path.join(ds.root, MANIFEST))
    return Dataset(ds.root, m)
