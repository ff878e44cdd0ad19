import csv
import json

import pytest

import steamgp
import steamgp_bench
import steamgp_query
import steamgp_simulate
import steamgp_solve
import steamgp_train
from conftest import noiseless_world, small_world
from lib.bench import knot_rms
from lib.estimator import SolveReport
from lib.simworld import load_dataset


def _error(capsys) -> dict:
    lines = [line for line in capsys.readouterr().err.splitlines() if line.startswith("{")]
    return json.loads(lines[-1])


def _read_trajectory(path):
    lines = path.read_text().splitlines()
    return lines[0], list(csv.DictReader(lines[1:]))


def test_simulate_solve_query(tmp_path, capsys):
    config = tmp_path / "world.json"
    config.write_text(json.dumps(small_world().to_dict()))
    data = tmp_path / "data"
    assert steamgp_simulate.main(["--config", str(config), "--out", str(data), "--duration", "12"]) == 0
    assert load_dataset(data).config.duration == 12.0

    out = tmp_path / "traj.csv"
    code = steamgp_solve.main([
        "--prior", "ntv", "--qc", "0.01,0.01,0.005", "--dataset", str(data),
        "--out", str(out), "--query-rate", "4",
    ])
    assert code == 0
    header, rows = _read_trajectory(out)
    assert header == "# format=steamgp-trajectory version=1 prior=ntv velocity=body"
    assert list(rows[0])[4:7] == ["v", "u", "omega"]
    assert sum(r["row"] == "knot" for r in rows) == 13
    assert sum(r["row"] == "query" for r in rows) == 49
    times = [float(r["t"]) for r in rows]
    assert times == sorted(times)
    assert all(float(r["sigma3_x"]) >= 0 for r in rows)

    capsys.readouterr()
    report_dir = tmp_path / "traj_report"
    assert steamgp_query.main(["--report", str(report_dir), "--times", "0.5,6.25,11.9"]) == 0
    printed = list(csv.DictReader(capsys.readouterr().out.splitlines()))
    assert [float(r["t"]) for r in printed] == [0.5, 6.25, 11.9]
    expected, _ = SolveReport.load(report_dir).query([6.25])
    assert float(printed[1]["x"]) == pytest.approx(expected[0, 0], rel=1e-12, abs=1e-12)

    assert steamgp.main(["query", "--report", str(report_dir), "--times", "-1.0"]) == 1
    assert _error(capsys)["error"] == "BeforeStart"


def test_zero_noise_world_through_the_cli(tmp_path, noiseless_dir):
    out = tmp_path / "traj.csv"
    assert steamgp.main([
        "solve", "--prior", "lti", "--qc", "0.1,0.1,0.05", "--dataset", str(noiseless_dir), "--out", str(out),
    ]) == 0
    report = SolveReport.load(tmp_path / "traj_report")
    translation, rotation = knot_rms(report, load_dataset(noiseless_dir).truth)
    assert translation < 1e-6
    assert rotation < 1e-6


def test_missing_dataset_fails_with_json(tmp_path, capsys):
    code = steamgp_solve.main(["--prior", "lti", "--dataset", str(tmp_path / "nowhere"), "--out", str(tmp_path / "t.csv")])
    assert code == 1
    error = _error(capsys)
    assert error["error"] == "FileNotFoundError"
    assert error["path"].endswith("world.json")
    assert not (tmp_path / "t.csv").exists()


def test_iteration_limit_still_writes_outputs(tmp_path, dataset_dir, capsys):
    out = tmp_path / "traj.csv"
    code = steamgp_solve.main([
        "--prior", "ntv", "--qc", "0.01,0.01,0.005", "--dataset", str(dataset_dir),
        "--out", str(out), "--max-iters", "1",
    ])
    assert code == 2
    assert _error(capsys) == {"error": "NotConverged", "message": "not converged after 1 iterations", "iterations": 1}
    assert out.exists()
    assert not SolveReport.load(tmp_path / "traj_report").converged


def test_bad_flags_fail(tmp_path, dataset_dir, capsys):
    code = steamgp_solve.main([
        "--prior", "lti", "--qc", "0.1,-0.1,0.1", "--dataset", str(dataset_dir), "--out", str(tmp_path / "t.csv"),
    ])
    assert code == 1
    assert _error(capsys)["error"] == "ConfigError"


def test_train_from_truth(tmp_path, dataset_dir):
    out = tmp_path / "qc.json"
    code = steamgp_train.main([
        "--prior", "ntv", "--truth", str(dataset_dir / "truth.csv"), "--out", str(out),
        "--rate", "2", "--obs-var", "1e-4", "--noise-seed", "1", "--max-iters", "30",
    ])
    assert code in (0, 2)
    saved = json.loads(out.read_text())
    assert len(saved["entries"]) == 3
    assert all(q > 0 for q in saved["entries"])

    traj = tmp_path / "traj.csv"
    assert steamgp.main([
        "solve", "--prior", "ntv", "--qc-file", str(out), "--dataset", str(dataset_dir), "--out", str(traj),
    ]) in (0, 2)


def test_tiny_bench(tmp_path):
    out = tmp_path / "bench.csv"
    assert steamgp_bench.main(["--n", "10,20", "--solvers", "lti,dense", "--queries", "3", "--workers", "1", "--out", str(out)]) == 0
    with open(out, newline="") as f:
        rows = list(csv.DictReader(f))
    assert [(r["N"], r["solver"]) for r in rows] == [
        ("10", "sparse-lti"), ("10", "dense-baseline"), ("20", "sparse-lti"), ("20", "dense-baseline"),
    ]
    slopes = json.loads((tmp_path / "bench.csv.slopes.json").read_text())
    assert set(slopes["slopes"]) == {"sparse-lti", "dense-baseline"}


def test_dispatcher(capsys):
    assert steamgp.main(["fly"]) == 1
    assert _error(capsys)["error"] == "ConfigError"
    assert steamgp.main(["--help"]) == 0
    assert steamgp.main([]) == 1
    assert _error(capsys)["error"] == "ConfigError"


def test_simulate_rejects_unknown_keys(tmp_path, capsys):
    config = tmp_path / "world.json"
    data = noiseless_world().to_dict()
    data["wheel_base"] = 0.3
    config.write_text(json.dumps(data))
    assert steamgp_simulate.main(["--config", str(config), "--out", str(tmp_path / "data")]) == 1
    assert "wheel_base" in _error(capsys)["message"]


def test_unknown_and_missing_flags_exit_one_with_json(tmp_path, capsys):
    assert steamgp_solve.main(["--bogus"]) == 1
    error = _error(capsys)
    assert error["error"] == "ConfigError"
    assert "--prior" in error["message"]

    assert steamgp_query.main(["--report", str(tmp_path), "--times", "1.0", "--frobnicate"]) == 1
    assert "--frobnicate" in _error(capsys)["message"]

    assert steamgp_simulate.main(["--config", "w.json", "--out", "d", "--seed", "abc"]) == 1
    assert _error(capsys)["error"] == "ConfigError"

    assert steamgp.main(["train", "--prior", "brownian"]) == 1
    assert _error(capsys)["error"] == "ConfigError"

    assert steamgp_solve.main(["--help"]) == 0
