"""Procedural motion-planning datasets and sampling-based planner benchmarks."""

__version__ = "0.1.0"

from .geometry import AABB, Box, ConvexMesh, Cylinder, Pose, Sphere, collide  # noqa: E402
from .kinematics import KinematicModel, load_urdf, parse_urdf  # noqa: E402
from .scene import ArticulatedPart, Scene, SceneObject, load_scene, save_scene  # noqa: E402

__all__ = [
    "AABB", "Box", "ConvexMesh", "Cylinder", "Pose", "Sphere", "collide",
    "KinematicModel", "load_urdf", "parse_urdf",
    "ArticulatedPart", "Scene", "SceneObject", "load_scene", "save_scene",
]
