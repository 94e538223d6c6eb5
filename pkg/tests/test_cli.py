import json
import subprocess
import sys

import pytest

from dpoincare.cli import main, parse_range
from dpoincare.mesh import cube_freudenthal, format_mesh


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_parse_range():
    assert parse_range("1..4") == [1, 2, 3, 4]
    assert parse_range("0,2") == [0, 2]
    assert parse_range("3") == [3]


def test_mesh_gen_and_info(tmp_path, capsys):
    path = tmp_path / "c.mesh"
    code, _, _ = run(capsys, "mesh", "gen", "--shape", "cube", "--n", "1", "--out", str(path))
    assert code == 0
    assert path.read_text() == format_mesh(cube_freudenthal(1))
    code, out, _ = run(capsys, "mesh", "info", str(path))
    assert code == 0
    assert "T 6\n" in out and "euler 1\n" in out
    code, out, _ = run(capsys, "mesh", "info", "cube1", "--format", "json")
    report = json.loads(out)["report"]
    assert report["T"] == 6 and report["boundary_faces"] == 12


def test_mesh_errors(tmp_path, capsys):
    bad = tmp_path / "flat.mesh"
    bad.write_text("4 1\n0 0 0\n1 0 0\n0 1 0\n1 1 0\n0 1 2 3\n")
    code, _, err = run(capsys, "mesh", "info", str(bad))
    assert code == 3 and "degenerate element" in err
    assert run(capsys, "mesh", "info", str(tmp_path / "missing.mesh"))[0] == 3
    assert run(capsys, "mesh", "gen", "--shape", "cube", "--n", "0")[0] == 2
    assert run(capsys, "mesh", "gen")[0] == 2


def test_constants_envelope(capsys):
    code, out, _ = run(capsys, "constants", "--mesh", "cube1", "--l", "2", "--p", "0", "--seed", "3")
    assert code == 0
    doc = json.loads(out)
    assert set(doc) == {"tool_version", "command", "input_hash", "seed", "report"}
    assert doc["seed"] == 3 and len(doc["input_hash"]) == 64
    rep = doc["report"]
    assert rep["constant"] > 0 and rep["infsup"] > 0
    _, again, _ = run(capsys, "--seed", "3", "constants", "--mesh", "cube1", "--l", "2")
    assert json.loads(again) == doc


def test_constants_usage_errors(capsys):
    assert run(capsys, "constants", "--mesh", "cube1", "--l", "5")[0] == 2
    assert run(capsys, "constants", "--mesh", "cube2", "--l", "1", "--p", "1", "--cap", "50")[0] == 2
    assert run(capsys, "constants", "--mesh", "cube1", "--l", "1", "--p", "9")[0] == 2
    assert run(capsys, "constants")[0] == 2


def test_constants_empty_space(capsys):
    code, out, _ = run(capsys, "constants", "--mesh", "ref", "--l", "1", "--bc", "homogeneous")
    assert code == 0
    assert json.loads(out)["report"]["status"] == "empty space"


def test_equivalence_text(capsys):
    code, out, _ = run(capsys, "equivalence", "--mesh", "cube1", "--l", "1,2", "--p", "0")
    assert code == 0
    lines = out.strip().splitlines()
    assert len(lines) == 4
    assert all(line.startswith("PASS") for line in lines)


def test_project_commands(capsys):
    code, out, _ = run(capsys, "project", "--mesh", "cube1", "--samples", "2")
    assert code == 0
    assert json.loads(out)["report"]["pass"] is True
    code, out, _ = run(capsys, "project", "--mesh", "cube1", "--kind", "minimizing", "--l", "1",
                       "--samples", "2")
    assert code == 0
    samples = json.loads(out)["report"]["samples"]
    assert all(s["stability_ratio"] <= s["bound"] for s in samples)
    assert run(capsys, "project", "--mesh", "cube1", "--kind", "minimizing", "--l", "0")[0] == 2


def test_piola_command(capsys):
    code, out, _ = run(capsys, "piola", "--mesh", "stretched1x4")
    assert code == 0
    assert json.loads(out)["report"]["pass"] is True
    code, out, _ = run(capsys, "piola", "--mesh", "cube1", "--scale", "0.5")
    assert code == 0
    assert run(capsys, "piola", "--mesh", "cube1", "--reference", "cube2")[0] == 2


def test_study_csv_is_deterministic(capsys, tmp_path):
    argv = ["study", "--n", "1..2", "--l", "0,2", "--p", "0"]
    code, first, _ = run(capsys, *argv)
    assert code == 0
    _, second, _ = run(capsys, *argv)
    assert first == second
    lines = first.splitlines()
    assert lines[0].startswith("# tool_version=")
    assert lines[1].split(",")[:4] == ["shape", "n", "|T|", "rho"]
    assert len(lines) == 2 + 4
    out = tmp_path / "s.csv"
    assert main([*argv, "--workers", "2", "--out", str(out)]) == 0
    assert out.read_text() == first


def test_study_rejects_bad_values(capsys):
    assert run(capsys, "study", "--bc", "dirichlet")[0] == 2
    assert run(capsys, "study", "--shape", "ball")[0] == 2
    assert run(capsys, "study", "--n", "4", "--l", "1", "--p", "1")[0] == 2


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "dpoincare", "--version"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()


@pytest.mark.parametrize("argv", [["--help"], ["study", "--help"]])
def test_help_exits_cleanly(capsys, argv):
    assert main(argv) == 0
