import json

import numpy as np
import pytest

from invlqr.cli import main

PROBLEM = {
    "A": [[1, 0, 1], [-2, -3, -1], [0, 0, 2]],
    "B": [[1, 0], [0, 1], [0, 1]],
    "Q": [[4, -1, 2], [-1, 2, -2], [2, -2, 3]],
    "F": [[3, -1, 0], [-1, 2, -1], [0, -1, 1]],
    "T": 1.0,
    "x0": [1.0, -1.0, 0.5],
}


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Problem file plus a forward-generated trajectory, shared by the tests."""
    root = tmp_path_factory.mktemp("cli")
    problem = root / "problem.json"
    problem.write_text(json.dumps(PROBLEM))
    gains = root / "gains.csv"
    rc = main(["forward", "--problem", str(problem), "--out", str(gains)])
    assert rc == 0
    return root, problem, gains


def test_forward_writes_grid_csv(workspace):
    root, problem, gains = workspace
    lines = gains.read_text().strip().splitlines()
    assert lines[0] == "t,k_11,k_12,k_13,k_21,k_22,k_23"
    assert len(lines) == 1002  # header + N+1 samples
    first = [float(v) for v in lines[1].split(",")]
    assert first[0] == 0.0


def test_forward_missing_q_exits_2(tmp_path, capsys):
    doc = {k: v for k, v in PROBLEM.items() if k != "Q"}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc))
    rc = main(["forward", "--problem", str(path),
               "--out", str(tmp_path / "x.csv")])
    assert rc == 2
    assert "requires Q" in capsys.readouterr().err


def test_forward_bad_horizon_exits_2(tmp_path):
    doc = dict(PROBLEM, T=-1.0)
    path = tmp_path / "p.json"
    path.write_text(json.dumps(doc))
    rc = main(["forward", "--problem", str(path),
               "--out", str(tmp_path / "x.csv")])
    assert rc == 2


def test_check_feasible_roundtrip(workspace, tmp_path):
    root, problem, gains = workspace
    out = tmp_path / "check.json"
    rc = main(["check", "--problem", str(problem),
               "--trajectory", str(gains), "--out", str(out)])
    assert rc == 0
    rep = json.loads(out.read_text())
    assert rep["existence"]["feasible"] is True
    assert rep["existence"]["constancy"]["deviation"] < 1e-4
    assert rep["tool"] == "invlqr"
    assert rep["inputs"]["trajectory"]["sha256"]


def test_check_truncated_csv_exits_2(workspace, tmp_path, capsys):
    root, problem, gains = workspace
    bad = tmp_path / "trunc.csv"
    bad.write_text(gains.read_text()[:200])
    rc = main(["check", "--problem", str(problem), "--trajectory", str(bad)])
    assert rc == 2


def test_check_nonuniform_grid_exits_2(workspace, tmp_path):
    root, problem, gains = workspace
    lines = gains.read_text().strip().splitlines()
    parts = lines[3].split(",")
    parts[0] = str(float(parts[0]) + 3e-4)  # knock one timestamp off the grid
    lines[3] = ",".join(parts)
    bad = tmp_path / "jitter.csv"
    bad.write_text("\n".join(lines) + "\n")
    rc = main(["check", "--problem", str(problem), "--trajectory", str(bad)])
    assert rc == 2


def test_solve_reports_family_and_selection(workspace, tmp_path):
    root, problem, gains = workspace
    out = tmp_path / "solve.json"
    rc = main(["solve", "--problem", str(problem),
               "--trajectory", str(gains), "--out", str(out)])
    assert rc == 0
    rep = json.loads(out.read_text())
    assert rep["solution_space"]["dimension"] == 1
    assert rep["solution_space"]["interval"] is not None
    assert rep["selected"]["rule"] == "mincond"
    Q = np.array(rep["selected"]["Q"])
    assert np.linalg.eigvalsh(Q)[0] > -1e-7
    assert rep["uniqueness"]["unique"] is False


def test_reports_are_deterministic(workspace, tmp_path):
    root, problem, gains = workspace
    a = tmp_path / "a.json"
    b = tmp_path / "b.json"
    for out in (a, b):
        rc = main(["check", "--problem", str(problem),
                   "--trajectory", str(gains), "--out", str(out)])
        assert rc == 0
    assert a.read_bytes() == b.read_bytes()


def test_report_roundtrips_and_validates(workspace, tmp_path):
    import jsonschema
    from invlqr.cli import _schema
    root, problem, gains = workspace
    out = tmp_path / "r.json"
    main(["check", "--problem", str(problem), "--trajectory", str(gains),
          "--out", str(out)])
    rep = json.loads(out.read_text())
    jsonschema.validate(rep, _schema())
    # lossless roundtrip through the parser
    assert json.loads(json.dumps(rep)) == rep


def test_approx_on_noisy_gains(workspace, tmp_path):
    root, problem, gains = workspace
    out = tmp_path / "approx.json"
    rc = main(["approx", "--problem", str(problem), "--trajectory",
               str(gains), "--out", str(out), "--method", "both",
               "--snr-db", "20", "--seed", "0"])
    assert rc == 0
    rep = json.loads(out.read_text())
    sec = rep["approx"]
    assert sec["agreement_gap"] < 1e-3
    assert sec["kkt_qp"]["suspect"] is False
    assert sec["max_state_error"] is not None  # x0 present in the problem
    Q = np.array(sec["kkt_qp"]["Q"])
    assert np.linalg.eigvalsh(Q)[0] > -1e-7


def test_demo_interval_family(tmp_path, capsys):
    out = tmp_path / "demo.json"
    rc = main(["demo", "example2", "--out", str(out)])
    assert rc == 0
    rep = json.loads(out.read_text())
    assert rep["demo"]["within_reference"] is True
    lo, hi = rep["demo"]["measured"]["interval"]
    assert lo == pytest.approx(0.0, abs=0.05)
    assert hi == pytest.approx(8.0, abs=0.05)
    assert "[0, 8]" in capsys.readouterr().out


def test_demo_unknown_name_exits_2(capsys):
    rc = main(["demo", "nosuch"])
    assert rc == 2
    assert "unknown demo" in capsys.readouterr().err
