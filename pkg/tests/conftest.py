import os

import pytest

from planforge.kinematics import load_urdf
from planforge.problems import load_adapter
from planforge.scene import load_scene

DATA = os.path.join(os.path.dirname(__file__), os.pardir, "src", "planforge", "data")
DATA = os.path.abspath(DATA)
ROBOTS = os.path.join(DATA, "robots")
SCENES = os.path.join(DATA, "scenes")
CONFIGS = os.path.join(DATA, "configs")


def robot(name):
    return load_urdf(os.path.join(ROBOTS, f"{name}.urdf"))


def scene(name):
    return load_scene(os.path.join(SCENES, f"{name}.yaml"))


def config(name):
    return os.path.join(CONFIGS, name)


@pytest.fixture(scope="session")
def arm6_adapter():
    return load_adapter(config("arm6_adapter.yaml"))


@pytest.fixture(scope="session")
def shelf():
    return scene("shelf")


# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
