import os
import subprocess
import sys

import pytest

from planforge.benchmark import CSV_COLUMNS, load_records
from planforge.cli import build_parser, main

from conftest import config

FLAGS = {
    "generate": ["--config", "--robot", "--scene", "--variations", "--queries", "--count", "--out", "--name",
                 "--representations", "--cameras", "--resolution", "--verify-timeout", "--no-verify"],
    "sense": ["--dataset", "--cameras", "--resolution"],
    "benchmark": ["--dataset", "--planners", "--repeats", "--timeout", "--out", "--sweep-range", "--problems",
                  "--representation", "--resolution", "--serial"],
    "analyze": ["--results", "--mode", "--out", "--prefixes", "--favor"],
}


@pytest.mark.parametrize("cmd", sorted(FLAGS))
def test_help_documents_every_flag(cmd, capsys):
    with pytest.raises(SystemExit) as e:
        build_parser().parse_args([cmd, "--help"])
    assert e.value.code == 0
    text = capsys.readouterr().out
    for flag in FLAGS[cmd] + ["--seed", "--jobs", "--verbose"]:
        assert flag in text


def test_console_script_runs():
    out = subprocess.run([sys.executable, "-m", "planforge.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "generate" in out.stdout


@pytest.fixture(scope="module")
def pocket(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    ds = str(root / "ds")
    assert main(["generate", "--config", config("pocket2d_generate.yaml"), "--count", "3", "--out", ds]) == 0
    return root, ds


def test_generate_benchmark_analyze(pocket):
    root, ds = pocket
    csv_path = str(root / "r.csv")
    assert main(["benchmark", "--dataset", ds, "--planners", "rrt_connect:0.05,rrt_connect:0.5",
                 "--repeats", "2", "--timeout", "5", "--out", csv_path]) == 0
    with open(csv_path) as fh:
        assert fh.readline().strip() == ",".join(CSV_COLUMNS)
    assert len(load_records(csv_path)) == 12
    assert os.path.exists(str(root / "r.jsonl"))
    for mode in ("summary", "adversarial", "prefix", "sweep"):
        out = str(root / f"{mode}.txt")
        assert main(["analyze", "--results", csv_path, "--mode", mode, "--out", out, "--prefixes", "1,3"]) == 0
        assert os.path.getsize(out) > 0
    text = open(root / "adversarial.txt").read()
    assert text.count("winner_flip") == 2
    assert main(["analyze", "--results", csv_path, "--mode", "prefix", "--favor", "rrt_connect@0.5",
                 "--out", str(root / "pf.txt")]) == 0


def test_normcost_from_rrt_star(pocket):
    root, ds = pocket
    csv_path = str(root / "star.csv")
    assert main(["benchmark", "--dataset", ds, "--planners", "rrt_star", "--timeout", "0.5",
                 "--problems", "1", "--out", csv_path]) == 0
    assert main(["analyze", "--results", csv_path, "--mode", "normcost", "--out", str(root / "nc.txt")]) == 0
    assert "rrt_star@0.5" in open(root / "nc.txt").read()


def test_sense_command(pocket, tmp_path):
    _, ds = pocket
    cams = tmp_path / "cams.yaml"
    cams.write_text("cameras:\n  - look_at: {eye: [-1.5, 0, 1.0], target: [0.5, 0, 0]}\n"
                    "    width: 40\n    height: 30\n    fx: 30\n    fy: 30\n    cx: 19.5\n    cy: 14.5\n")
    assert main(["sense", "--dataset", ds, "--cameras", str(cams)]) == 0
    assert main(["benchmark", "--dataset", ds, "--planners", "rrt_connect", "--timeout", "2", "--problems", "1",
                 "--representation", "octree", "--out", str(tmp_path / "o.csv")]) == 0


def test_exit_codes(pocket, tmp_path, capsys):
    _, ds = pocket
    assert main(["benchmark", "--dataset", ds, "--planners", "prm", "--out", str(tmp_path / "x.csv")]) == 1
    assert "valid names" in capsys.readouterr().err
    assert main(["benchmark", "--dataset", str(tmp_path / "none"), "--planners", "biest",
                 "--out", str(tmp_path / "x.csv")]) == 1
    assert main(["benchmark", "--dataset", ds, "--planners", "biest", "--problems", "9",
                 "--out", str(tmp_path / "x.csv")]) == 1
    assert main(["analyze", "--results", str(tmp_path / "missing.csv"), "--mode", "summary",
                 "--out", str(tmp_path / "s.txt")]) == 3
    assert main(["generate", "--out", str(tmp_path / "g")]) == 1
    with pytest.raises(SystemExit) as e:
        main(["benchmark", "--dataset", ds])
    assert e.value.code == 1
    with pytest.raises(SystemExit) as e:
        main(["generate", "--config", config("pocket2d_generate.yaml"), "--count", "3", "--out", str(tmp_path / "g"),
              "--jobs", "x"])
    assert e.value.code == 1


def test_budget_exit_code(tmp_path):
    q = tmp_path / "q.yaml"
    q.write_text("queries:\n  - {name: a, joints: [0.0, 0.67]}\n  - {name: b, joints: [0.8, 0.6]}\n")
    scenes = os.path.join(os.path.dirname(config("x")), os.pardir, "scenes")
    rc = main(["generate", "--robot", config("point2d_adapter.yaml"), "--scene", os.path.join(scenes, "narrow2d.yaml"),
               "--variations", config("empty_variations.yaml"), "--queries", str(q), "--count", "1",
               "--out", str(tmp_path / "out")])
    assert rc == 2


def test_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("PLANFORGE_SEED", "11")
    assert main(["generate", "--config", config("pocket2d_generate.yaml"), "--count", "1",
                 "--out", str(tmp_path / "a")]) == 0
    assert "seed: 11" in open(tmp_path / "a" / "manifest.yaml").read()
    monkeypatch.setenv("PLANFORGE_SEED", "eleven")
    assert main(["generate", "--config", config("pocket2d_generate.yaml"), "--count", "1",
                 "--out", str(tmp_path / "b")]) == 1
