import subprocess
import sys
from pathlib import Path

import yaml

import builders
from vdba import runner
from vdba.cli import main

ROOT = Path(__file__).resolve().parents[1]
MINIMAL = str(ROOT / "scenarios" / "minimal.yaml")


def write(tmp_path, doc, name="s.yaml"):
    p = tmp_path / name
    p.write_text(yaml.safe_dump(doc))
    return str(p)


def test_validate_ok(capsys):
    assert main(["validate", MINIMAL]) == 0
    assert "1 slices" in capsys.readouterr().out


def test_validate_bad(tmp_path, capsys):
    doc = yaml.safe_load(open(MINIMAL))
    doc["slices"][0]["share_words"] = -3
    assert main(["validate", write(tmp_path, doc)]) == 1
    assert "slices[0].share_words" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "nope.yaml")]) == 1


def test_run_with_overrides(tmp_path, capsys):
    assert main(["run", MINIMAL, "--frames", "20", "--seed", "4", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "frames=20" in out and "var=0.0000us^2" in out
    assert len((tmp_path / "intervals.csv").read_text().splitlines()) == 20


def test_run_wall_clock_concurrent(tmp_path):
    assert main(["run", MINIMAL, "--frames", "10", "--timing", "wall_clock", "--concurrent", "--out", str(tmp_path)]) == 0


def test_replay_and_unknown_alloc(tmp_path):
    assert main(["run", MINIMAL, "--frames", "10", "--out", str(tmp_path / "a")]) == 0
    trace = tmp_path / "a" / "dbru_trace.csv"
    assert main(["replay", str(trace), MINIMAL, "--out", str(tmp_path / "b")]) == 0
    bad = tmp_path / "bad.csv"
    bad.write_text("frame_index,onu_id,alloc_id,occupancy_bytes\n0,0,77,10\n")
    assert main(["replay", str(bad), MINIMAL, "--out", str(tmp_path / "c")]) == 1


def test_invariant_exit_code(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise runner.RuntimeInvariantViolation(0, "test")

    monkeypatch.setattr("vdba.cli.run", boom)
    assert main(["run", MINIMAL, "--out", str(tmp_path)]) == 2


def test_module_entry_point(tmp_path):
    doc = builders.mixed(frames=5)
    p = write(tmp_path, doc)
    r = subprocess.run([sys.executable, "-m", "vdba", "run", p, "--out", str(tmp_path / "o")],
                       capture_output=True, text=True)
    assert r.returncode == 0, r.stderr
    assert "slice sr" in r.stdout
