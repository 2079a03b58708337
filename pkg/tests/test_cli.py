import json

import pytest

from capflow.cli import main
from capflow.markov import cycle_walk, process_to_json


@pytest.fixture
def cycle_file(tmp_path):
    path = tmp_path / "cycle8.json"
    path.write_text(process_to_json(cycle_walk(8, 0.5)))
    return str(path)


def run(capsys, argv):
    code = main(argv)
    out = capsys.readouterr().out
    return code, json.loads(out) if out.strip() else None


def test_verify_suite_passes(capsys):
    code, report = run(capsys, ["verify", "potential", "--trials", "5", "--seed", "7"])
    assert code == 0
    assert report["reportVersion"] == 1
    assert all(c["pass"] for c in report["checks"].values())
    assert all("tolerance" in c for c in report["checks"].values())


def test_verify_unknown_suite_usage_error():
    with pytest.raises(SystemExit) as exc:
        main(["verify", "nonsense"])
    assert exc.value.code == 2


def test_cap_routes_agree(capsys, cycle_file):
    code, report = run(
        capsys, ["cap", "--process", cycle_file, "--A", "0", "--B", "4", "--routes", "dirichlet,escape,adjoint"]
    )
    assert code == 0
    caps = report["results"]["capacity"]
    assert caps["dirichlet"] == pytest.approx(caps["escape"], rel=1e-10)
    assert caps["dirichlet"] == pytest.approx(caps["adjoint"], rel=1e-10)


def test_cap_overlap_is_usage_error(capsys, cycle_file):
    code = main(["cap", "--process", cycle_file, "--A", "0,4", "--B", "4"])
    capsys.readouterr()
    assert code == 2


def test_cap_missing_file_is_usage_error(capsys):
    code = main(["cap", "--process", "/nonexistent.json", "--A", "0", "--B", "1"])
    capsys.readouterr()
    assert code == 2


def test_ising_barrier(capsys):
    code, report = run(capsys, ["ising", "--K", "5", "--L", "6", "--mode", "barrier"])
    assert code == 0
    assert report["results"]["Gamma"] == 12


def test_ising_exact_csv(capsys, tmp_path):
    csv = tmp_path / "exact.csv"
    code, report = run(
        capsys,
        ["ising", "--K", "3", "--L", "4", "--mode", "exact", "--beta-grid", "3,4", "--csv", str(csv)],
    )
    assert code == 0
    assert report["checks"]["log_slope_matches_barrier"]["pass"]
    lines = csv.read_text().strip().splitlines()
    assert lines[0] == "beta,capacity"
    assert len(lines) == 3


def test_zrp_rates(capsys):
    code, report = run(
        capsys,
        ["zrp", "--sites", "3", "--alpha", "2", "--p", "0.7", "--mode", "rates", "--n-grid", "10,12"],
    )
    assert code == 0
    assert all(c["pass"] for c in report["checks"].values())


def test_zrp_capacity_deterministic(capsys, tmp_path):
    argv = [
        "zrp", "--sites", "3", "--alpha", "2", "--p", "0.7",
        "--mode", "capacity", "--n-grid", "8,10", "--pairs", "0:1",
    ]
    code1, report1 = run(capsys, argv)
    code2, report2 = run(capsys, argv)
    assert code1 == code2 == 0
    report1.pop("timings")
    report2.pop("timings")
    assert report1 == report2


def test_simulate_matches_exact(capsys, tmp_path):
    path = tmp_path / "cycle6.json"
    path.write_text(process_to_json(cycle_walk(6, 0.7)))
    code, report = run(
        capsys,
        ["simulate", "--process", str(path), "--start", "0", "--hit", "3", "--reps", "4000", "--seed", "11"],
    )
    assert code == 0
    assert report["checks"]["hitting_time_within_3se"]["pass"]


def test_config_file_defaults(capsys, tmp_path):
    cfg = tmp_path / "cfg.toml"
    cfg.write_text("[verify]\ntrials = 3\nseed = 5\n")
    code, report = run(capsys, ["--config", str(cfg), "verify", "core"])
    assert code == 0
    assert report["parameters"]["trials"] == 3
    assert report["seed"] == 5
    # flags win over the file
    code, report = run(capsys, ["--config", str(cfg), "verify", "core", "--trials", "2"])
    assert report["parameters"]["trials"] == 2


def test_json_side_output(capsys, tmp_path):
    out = tmp_path / "report.json"
    code, report = run(capsys, ["--json", str(out), "verify", "core", "--trials", "2", "--seed", "1"])
    assert code == 0
    assert json.loads(out.read_text()) == report
