import csv
import subprocess
import sys

import pytest

from dynalloc import analytic as A
from dynalloc.cli import main, read_config
from dynalloc.core import SystemParams

SIM = ["--seed", "5", "--warmup", "500", "--horizon", "1e4", "--replications", "5"]


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def fields(line):
    return {k: float(v) for k, v in (t.split("=") for t in line.split() if "=" in t)}


def test_eval_holdon(capsys):
    code, out, _ = run(capsys, "eval", "--policy", "holdon", "--k", "1", "--T", "4", "--lambda", "0.5", "--mu", "1",
                       "--delta", "2", "--omega", "1")
    assert code == 0 and out.strip() == "R=3 C=0.875 objective=2.375"


def test_eval_per_request(capsys):
    code, out, _ = run(capsys, "eval", "--policy", "per-request", "--lambda", "0.5", "--mu", "1", "--delta", "2")
    f = fields(out)
    assert code == 0 and f["R"] == 3 and f["C"] == 1.5


def test_eval_unstable(capsys):
    code, _, err = run(capsys, "eval", "--policy", "mmk", "--servers", "1", "--lambda", "1.0", "--mu", "1")
    assert code == 3 and "unstable" in err


@pytest.mark.parametrize("argv", [
    ["eval", "--policy", "holdon", "--lambda", "0.5", "--servers", "2"],  # flag not used by the policy
    ["eval", "--policy", "nosuch", "--lambda", "0.5"],
    ["eval", "--policy", "holdon"],
    ["eval", "--policy", "holdon", "--lambda", "-1"],
    ["bogus"],
])
def test_invalid_input(capsys, argv):
    assert run(capsys, *argv)[0] == 2


def test_optimal_writes_table_and_replays(capsys, tmp_path):
    path = tmp_path / "opt.policy"
    code, out, _ = run(capsys, "optimal", "--lambda", "0.5", "--delta", "2", "--cap-total", "1", "-o", str(path))
    assert code == 0
    want = A.single_optimal_objective(SystemParams(0.5, 1, 2, 1)).value
    assert fields(out)["objective"] == pytest.approx(want, rel=1e-6)
    assert path.read_text().startswith("#")
    code, out, _ = run(capsys, "eval", "--policy", "table", "--file", str(path))
    assert code == 0 and fields(out)["objective"] == pytest.approx(want, rel=1e-6)
    code, out, _ = run(capsys, "simulate", "--policy", "table", "--file", str(path), "--check", *SIM)
    assert code == 0 and "PASS" in out


def test_optimal_cap_a_never_better(capsys):
    _, a, _ = run(capsys, "optimal", "--lambda", "1.7", "--delta", "4", "--cap-total", "2")
    _, b, _ = run(capsys, "optimal", "--lambda", "1.7", "--delta", "4", "--cap-total", "2", "--cap-a", "1")
    assert fields(b)["objective"] >= fields(a)["objective"] * (1 - 1e-12)


def test_optimal_nonconvergence(capsys):
    code, _, err = run(capsys, "optimal", "--lambda", "0.5", "--delta", "2", "--max-iters", "1")
    assert code == 4 and "no convergence" in err


def test_simulate_check_and_determinism(capsys, tmp_path):
    argv = ["simulate", "--policy", "holdon", "--k", "1", "--T", "4", "--lambda", "0.5", "--delta", "2", "--check",
            *SIM]
    code, out1, _ = run(capsys, *argv)
    assert code == 0 and "PASS" in out1 and "rng=Philox seed=5" in out1
    code, out2, _ = run(capsys, *argv)
    assert out1 == out2
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run(capsys, *argv, "--csv", str(a))
    run(capsys, *argv, "--csv", str(b))
    assert a.read_bytes() == b.read_bytes()
    assert a.read_text().splitlines()[0] == "replication,R,C,objective"


def test_simulate_check_failure(capsys):
    # at rho=0.95 a 30-unit run from an empty system sits far below the steady-state delay
    code, out, _ = run(capsys, "simulate", "--policy", "mmk", "--lambda", "0.95", "--seed", "1", "--warmup", "0",
                       "--horizon", "30", "--replications", "20", "--check")
    assert code == 5 and "FAIL" in out


def test_sweep_csv(capsys, tmp_path):
    out = tmp_path / "s.csv"
    code, _, _ = run(capsys, "sweep", "--policies", "holdon:k=1:T=0,mmk", "--lambda-from", "0.05", "--lambda-to",
                     "0.95", "--lambda-step", "0.45", "--delta", "2", "-o", str(out))
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert [r["lambda"] for r in rows] == ["0.05", "0.5", "0.95"]
    assert all(float(r["ratio[mmk:servers=1]"]) >= 1 - 1e-8 for r in rows)


def test_sweep_flags_unstable_rows(capsys):
    code, out, _ = run(capsys, "sweep", "--policies", "mmk", "--lambda-from", "0.5", "--lambda-to", "1.5",
                       "--lambda-step", "1", "--cap-total", "2")
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0 and rows[1]["ratio[mmk:servers=1]"] == "nan" and rows[1]["unstable"] == "mmk:servers=1"


def test_routing_csv(capsys):
    code, out, _ = run(capsys, "routing", "--lam1", "0.8", "--lam2", "0.04", "--cap", "30", "--dr-from", "1",
                       "--dr-to", "2", "--dr-step", "1")
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0 and len(rows) == 2
    for r in rows:
        assert float(r["obj_state_dependent"]) <= float(r["obj_oblivious"]) * (1 + 1e-8)


def test_figure_from_config(capsys, tmp_path):
    conf = tmp_path / "fig.cfg"
    conf.write_text("# single-server panel\nname = fig5c\ngrid-from = 0.25\ngrid_to = 0.5\ngrid-step = 0.25\n")
    code, out, _ = run(capsys, "figure", "--config", str(conf))
    rows = list(csv.DictReader(out.splitlines()))
    assert code == 0 and [r["lambda"] for r in rows] == ["0.25", "0.5"]
    code, out2, _ = run(capsys, "figure", "--config", str(conf), "--grid-to", "0.75")
    assert len(list(csv.DictReader(out2.splitlines()))) == 3


def test_config_errors(capsys, tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("lambda = 0.5\nfrobnicate = 1\n")
    assert run(capsys, "eval", "--policy", "mmk", "--config", str(bad))[0] == 2
    bad.write_text("no equals sign\n")
    assert run(capsys, "eval", "--policy", "mmk", "--config", str(bad))[0] == 2
    good = tmp_path / "good.cfg"
    good.write_text("Lambda = 0.5  # trailing comment\npolicy = holdon\nk = 1\nT = 4\ndelta = 2\n")
    assert read_config(good)["lambda"] == "0.5"
    code, out, _ = run(capsys, "eval", "--config", str(good))
    assert code == 0 and out.strip() == "R=3 C=0.875 objective=2.375"


def test_console_entry_point():
    res = subprocess.run([sys.executable, "-m", "dynalloc.cli", "eval", "--policy", "mmk", "--lambda", "0.5"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("R=2 ")
