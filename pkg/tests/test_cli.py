import csv
import hashlib
import json
import subprocess
import sys

import pytest

from ccmission.cli import (EXIT_INFEASIBLE, EXIT_INVALID, EXIT_OK, EXIT_TRUNCATED, main)
from ccmission.envmodel import save_scenario
from ccmission.oracle import micro_scenario

from conftest import SCENARIOS

MICRO = str(SCENARIOS / "medium" / "micro")
MICRO_LAT = ["--energy-res", "50"]


def _sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


@pytest.fixture(scope="module")
def micro_policy(tmp_path_factory):
    out = tmp_path_factory.mktemp("pol") / "micro.bin"
    assert main(["recovery", "--scenario", MICRO, *MICRO_LAT, "--out", str(out)]) == EXIT_OK
    return out


def test_gen_is_deterministic(tmp_path, capsys):
    for name in ("a", "b"):
        assert main(["gen", "--preset", "medium", "--seed", "0", "--out", str(tmp_path / name)]) == 0
    for f in ("manifest.json", "terrain.f32", "illumination.f32", "micro/manifest.json"):
        assert _sha(tmp_path / "a" / f) == _sha(tmp_path / "b" / f)
    # Shipped files are exactly what gen writes.
    for f in ("manifest.json", "terrain.f32", "illumination.f32"):
        assert _sha(tmp_path / "a" / f) == _sha(SCENARIOS / "medium" / f)
    assert "PSR cells" in capsys.readouterr().out


def test_gen_zero_havens_refused(tmp_path):
    spec = tmp_path / "spec.json"
    spec.write_text(json.dumps({"havens": []}))
    assert main(["gen", "--preset", "default", "--spec", str(spec), "--out", str(tmp_path / "x")]) \
        == EXIT_INVALID


def test_recovery_file_byte_identical(tmp_path, micro_policy):
    again = tmp_path / "again.bin"
    assert main(["recovery", "--scenario", MICRO, *MICRO_LAT, "--out", str(again)]) == EXIT_OK
    assert again.read_bytes() == micro_policy.read_bytes()


def test_recovery_rejects_coarse_time(tmp_path, capsys):
    code = main(["recovery", "--scenario", MICRO, "--time-res", "3600", "--energy-res", "50",
                 "--out", str(tmp_path / "p.bin")])
    assert code == EXIT_INVALID
    assert "time resolution" in capsys.readouterr().err


def test_plan_outputs(tmp_path, micro_policy):
    out = tmp_path / "plan"
    code = main(["plan", "--scenario", MICRO, *MICRO_LAT, "--recovery-in", str(micro_policy),
                 "--beta", "0.02", "--out", str(out)])
    assert code in (EXIT_OK, EXIT_TRUNCATED)
    plan = json.loads((out / "plan.json").read_text())
    with open(out / "risk_profile.csv") as fh:
        risks = [float(row["exec_risk"]) for row in csv.DictReader(fh)]
    with open(out / "energy_profile.csv") as fh:
        reqs = [float(row["min_energy_req"]) for row in csv.DictReader(fh)]
    assert len(risks) == len(reqs) == len(plan["nodes"])
    assert max(risks) <= 0.02
    assert plan["checks"]["risk_gap"] <= 1e-9


def test_plan_unattainable_bound(tmp_path, micro_policy):
    code = main(["plan", "--scenario", MICRO, *MICRO_LAT, "--recovery-in", str(micro_policy),
                 "--beta", "1e-9", "--out", str(tmp_path / "p")])
    assert code in (EXIT_TRUNCATED, EXIT_INFEASIBLE)


def test_plan_alpha_zero_risk_column(tmp_path):
    s = micro_scenario(0, alpha=0.0, start=(2, 1), start_energy=400.0)
    save_scenario(s, tmp_path / "s")
    args = ["--scenario", str(tmp_path / "s"), "--time-res", "1200", "--energy-res", "50"]
    assert main(["plan", *args, "--beta", "0.01", "--out", str(tmp_path / "p")]) == EXIT_OK
    with open(tmp_path / "p" / "risk_profile.csv") as fh:
        assert all(float(row["exec_risk"]) == 0.0 for row in csv.DictReader(fh))


def test_invalid_inputs(tmp_path, micro_policy):
    base = ["--scenario", MICRO, *MICRO_LAT, "--out", str(tmp_path / "p")]
    assert main(["plan", *base, "--beta", "1.5"]) == EXIT_INVALID
    assert main(["plan", *base, "--recovery-in", str(tmp_path / "missing.bin")]) == EXIT_INVALID
    assert main(["plan", "--scenario", str(tmp_path / "nowhere"), "--out", str(tmp_path)]) \
        == EXIT_INVALID
    # Policy built for another scenario.
    s = micro_scenario(1)
    save_scenario(s, tmp_path / "other")
    assert main(["plan", "--scenario", str(tmp_path / "other"), "--recovery-in", str(micro_policy),
                 "--out", str(tmp_path / "q")]) == EXIT_INVALID


def test_montecarlo_reports_identical(tmp_path, micro_policy):
    reports = []
    for name in ("a.json", "b.json"):
        assert main(["montecarlo", "--scenario", MICRO, *MICRO_LAT, "--recovery-in",
                     str(micro_policy), "--trials", "100", "--seed", "4", "--threads", "1",
                     "--out", str(tmp_path / name)]) == EXIT_OK
        reports.append((tmp_path / name).read_bytes())
    assert reports[0] == reports[1]
    rep = json.loads(reports[0])
    assert rep["n"] == 100 and rep["ci"]["half_width"] >= 0.0


def test_simulate_and_evaluate(tmp_path, micro_policy):
    assert main(["simulate", "--scenario", MICRO, *MICRO_LAT, "--recovery-in", str(micro_policy),
                 "--seed", "2", "--out", str(tmp_path / "t.json")]) == EXIT_OK
    trace = json.loads((tmp_path / "t.json").read_text())
    assert trace["status"] in ("SafeSuccess", "OperationalExit", "Stranded", "Infeasible")
    assert len(trace["trace"]) == trace["steps"]
    assert main(["evaluate", "--scenario", MICRO, *MICRO_LAT, "--recovery-in", str(micro_policy),
                 "--beta", "0.05", "--out", str(tmp_path / "e.json")]) == EXIT_OK
    ev = json.loads((tmp_path / "e.json").read_text())
    assert ev["micro"]["replay_risk"] <= 0.05


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "ccmission", "--help"], capture_output=True,
                         text=True, check=False)
    assert res.returncode == 0
    for cmd in ("gen", "recovery", "plan", "simulate", "montecarlo", "evaluate"):
        assert cmd in res.stdout
