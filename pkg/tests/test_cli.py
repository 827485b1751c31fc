import json
import subprocess
import sys

import numpy as np
import pytest

from nirenberg.cli import main
from nirenberg.fileio import load_field, read_grid_csv, save_field
from nirenberg.sphere import from_function


def run(*argv, out):
    return main([*argv, "--out", str(out), "-q"])


def _write(tmp_path, name, f, degree=2):
    path = tmp_path / name
    save_field(path, from_function(f, degree))
    return str(path)


def test_classify_exit_codes(tmp_path):
    assert run("classify", "--preset", "tilt-0.1z", out=tmp_path) == 0
    report = json.loads((tmp_path / "classify.json").read_text())
    assert report["status"] == "interior" and report["degree"] == 0
    assert run("classify", "--preset", "eig-l2-xy", out=tmp_path) == 2
    neg = _write(tmp_path, "neg.json", lambda x, y, z: -2 + z)
    assert run("classify", neg, out=tmp_path) == 3


def test_bad_input_and_flags(tmp_path, capsys):
    (tmp_path / "bad.json").write_text("{")
    assert run("classify", str(tmp_path / "bad.json"), out=tmp_path) == 64
    assert run("classify", "--preset", "nope", out=tmp_path) == 64
    assert run("classify", "--bogus", out=tmp_path) == 64
    assert main([]) == 64
    assert run("classify", out=tmp_path) == 64
    assert run("continue", out=tmp_path) == 64
    assert main(["validate", "--lmax", "0"]) == 64
    capsys.readouterr()


def test_solve_known_start_and_outputs(tmp_path):
    assert run("solve", "--preset", "eig-l2-xy", "--start", "known", "--lmax", "24", out=tmp_path) == 0
    report = json.loads((tmp_path / "solve.json").read_text())
    (sol,) = report["solutions"]
    assert sol["converged"] and sol["morse_index"] == 2 and sol["field_file"] == "u.json"
    assert report["certificate"]["verdict"] == "inconclusive"
    rows = read_grid_csv(tmp_path / "u_grid.csv")
    assert rows.shape[1] == 3
    # the saved factor feeds straight back into kw and solve
    assert run("kw", "--preset", "eig-l2-xy", "--u", str(tmp_path / "u.json"), out=tmp_path) == 0
    kw = json.loads((tmp_path / "kw.json").read_text())
    assert kw["kw_norm"] < 1e-8
    again = tmp_path / "again"
    again.mkdir()
    assert run("solve", "--preset", "eig-l2-xy", "--start", str(tmp_path / "u.json"), "--lmax", "24", out=again) == 0
    assert np.allclose(load_field(again / "u.json").coeffs, load_field(tmp_path / "u.json").coeffs, atol=1e-12)


def test_solve_obstruction_symmetry_and_failure(tmp_path):
    assert run("solve", "--preset", "linear-z", "--lmax", "12", out=tmp_path) == 5
    assert json.loads((tmp_path / "solve.json").read_text())["certificate"]["verdict"] == "obstructed"
    odd = _write(tmp_path, "odd.json", lambda x, y, z: 1 + 0.2 * x * y + 0.1 * y)
    assert run("solve", odd, "--symmetry", "even", "--lmax", "8", out=tmp_path) == 65
    assert run("solve", odd, "--symmetry", "dihedral", "--lmax", "8", out=tmp_path) == 64
    neg = _write(tmp_path, "neg.json", lambda x, y, z: -1 + 0 * z)
    assert run("solve", neg, "--lmax", "8", out=tmp_path) == 5
    # the resolution guard rejects this root at L = 16
    hard = _write(tmp_path, "hard.json", lambda x, y, z: 1 + 0.3 * z * z + 0.2 * z)
    assert run("solve", hard, "--lmax", "16", out=tmp_path) == 4
    even = _write(tmp_path, "even.json", lambda x, y, z: 1 + 0.2 * x * y)
    assert run("solve", even, "--start", "known", "--lmax", "8", out=tmp_path) == 64


def test_even_flow_solve(tmp_path):
    K = _write(tmp_path, "even.json", lambda x, y, z: 1 + 0.2 * x * y + 0.25 * z * z)
    assert run("solve", K, "--symmetry", "even", "--method", "flow", "--lmax", "12", out=tmp_path) == 0
    u = load_field(tmp_path / "u.json")
    odd = np.array([l % 2 == 1 for l in range(13) for _ in range(2 * l + 1)])
    assert np.max(np.abs(u.coeffs[odd])) < 1e-14


def test_repeated_runs_are_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        d.mkdir()
        assert run("solve", "--preset", "eig-l2-xy", "--multistart", "2", "--lmax", "12", "--seed", "3", out=d) in (0, 4)
    for name in sorted(p.name for p in a.iterdir()):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    report = json.loads((a / "solve.json").read_text())
    assert "signed_count" in report
    # the eigenfunction curvature sits on a boundary, so enumeration there is advisory
    assert report["region"] == "boundary" and report["advisory"] is True


def test_continue_preset_outputs(tmp_path):
    assert run("continue", "--preset", "fold", out=tmp_path) == 0
    summary = json.loads((tmp_path / "branch.json").read_text())
    assert summary["status"] == "returned" and len(summary["folds"]) == 1
    assert set(summary["snapshots"]) == {"fold_000.json", "final.json"}
    assert (tmp_path / "branch.csv").read_text().startswith("t,arclength")
    assert "branch.csv" in (tmp_path / "branch.gp").read_text()
    assert run("continue", "--preset", "spiral", out=tmp_path) == 64
    (tmp_path / "cfg.json").write_text("{}")
    assert run("continue", str(tmp_path / "cfg.json"), out=tmp_path) == 64


def test_validate_and_export(tmp_path, monkeypatch):
    monkeypatch.setenv("NIRENBERG_LMAX", "24")
    assert main(["validate", "-q", "--output", str(tmp_path / "v.json")]) == 0
    checks = json.loads((tmp_path / "v.json").read_text())
    assert checks and all(c["passed"] for c in checks["checks"])
    # the forward-map oracle needs degree 24 to reach 1e-10
    monkeypatch.setenv("NIRENBERG_LMAX", "16")
    assert main(["validate", "-q", "--output", str(tmp_path / "v16.json")]) == 1
    failed = [c["check"] for c in json.loads((tmp_path / "v16.json").read_text())["checks"] if not c["passed"]]
    assert failed == ["eigenfunction forward map"]
    assert run("export-grid", "--preset", "eig-l2-xy", out=tmp_path) == 0
    rows = read_grid_csv(tmp_path / "grid.csv")
    assert rows.shape[1] == 3 and np.all(rows[:, 0] > 0) and np.all(rows[:, 0] < np.pi)
    assert run("export-grid", "--preset", "bubble-t2", "--curvature", "--output", str(tmp_path / "k.csv"), out=tmp_path) == 0
    assert np.allclose(read_grid_csv(tmp_path / "k.csv")[:, 2], 1.0, atol=1e-6)


def test_module_entry_point(tmp_path):
    r = subprocess.run([sys.executable, "-m", "nirenberg", "classify", "--preset", "tilt-0.1z", "--out", str(tmp_path)],
                       capture_output=True, text=True)
    assert r.returncode == 0 and "interior" in r.stdout
