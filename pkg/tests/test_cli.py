import csv
import json
import subprocess
import sys

import pytest

from circledyn import cli

PRESETS = cli.preset_names()


def write_job(tmp_path, job, name="job"):
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(job))
    return str(p)


def read_result(out, name):
    return json.loads((out / f"{name}.json").read_text())


def strip_timestamp(text):
    d = json.loads(text)
    d.pop("timestamp", None)
    return json.dumps(d, sort_keys=True)


# ---------------------------------------------------------------- presets

def test_every_command_has_presets():
    commands = {cli.load_preset(n)["command"] for n in PRESETS}
    assert commands == set(cli.COMMANDS)
    # every operation is exercised by at least one preset
    ops = {(cli.load_preset(n)["command"], cli.load_preset(n)["op"]) for n in PRESETS}
    assert ops == {(c, o) for c in cli.OPS for o in cli.OPS[c]}


@pytest.mark.parametrize("name", PRESETS)
def test_preset_runs_and_is_deterministic(name):
    job = cli.load_preset(name)
    code1, r1, t1 = cli.run_job(job)
    code2, r2, t2 = cli.run_job(job)
    assert code1 == 0, r1.get("error")
    assert r1["status"] == "ok"
    for key in ("inputs", "parameters", "results", "residuals", "seed"):
        assert key in r1
    r1.pop("timestamp")
    r2.pop("timestamp")
    assert cli.dumps(r1) == cli.dumps(r2)
    assert t1 == t2


# ---------------------------------------------------------------- module examples end-to-end

def test_rotnum_quarter_end_to_end(tmp_path):
    code = cli.main(["rotnum", "--preset", "rotnum_rotation_quarter", "--out", str(tmp_path)])
    assert code == 0
    r = read_result(tmp_path, "rotnum_rotation_quarter")
    assert r["results"]["value"] == 0.25
    assert r["results"]["error_bound"] == 2e-6


def test_thompson_relators_end_to_end(tmp_path):
    assert cli.main(["thompson", "--preset", "thompson_relators", "--out", str(tmp_path)]) == 0
    assert read_result(tmp_path, "thompson_relators")["results"]["identity"] is True


def test_walk_lyapunov_end_to_end(tmp_path):
    assert cli.main(["walk", "--preset", "walk_lyapunov_schottky", "--out", str(tmp_path)]) == 0
    r = read_result(tmp_path, "walk_lyapunov_schottky")["results"]
    assert r["ci"][1] < 0


def test_csv_tables_written(tmp_path):
    assert cli.main(["walk", "--preset", "walk_stationary_rotation", "--out", str(tmp_path)]) == 0
    with open(tmp_path / "walk_stationary_rotation.stationary.csv") as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["bin", "x", "mass"]
    assert sum(float(r[2]) for r in rows[1:]) == pytest.approx(1.0, abs=1e-9)


def test_cli_output_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert cli.main(["moebius", "--preset", "moebius_liouville", "--out",
                         str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "moebius_liouville.json").read_text()
    b = (tmp_path / "b" / "moebius_liouville.json").read_text()
    assert strip_timestamp(a) == strip_timestamp(b)


def test_seed_flag_changes_random_jobs(tmp_path):
    job = {"command": "moebius", "op": "liouville", "params": {"quadruples": 20}}
    path = write_job(tmp_path, job)
    outs = []
    for seed in (1, 1, 2):
        out = tmp_path / f"s{len(outs)}"
        assert cli.main(["moebius", "--job", path, "--seed", str(seed), "--out", str(out)]) == 0
        r = read_result(out, "job")
        assert r["seed"] == seed
        outs.append(json.dumps([r["results"], r["residuals"]], sort_keys=True))
    assert outs[0] == outs[1] != outs[2]


def test_env_output_directory(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path / "env"))
    assert cli.main(["markov", "--preset", "markov_golden"]) == 0
    assert (tmp_path / "env" / "markov_golden.json").is_file()


def test_presets_listing(capsys):
    assert cli.main(["presets"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == len(PRESETS)


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "circledyn.cli", "markov", "--preset",
                           "markov_golden", "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["status"] == "ok"


# ---------------------------------------------------------------- schema and exit codes

@pytest.mark.parametrize("job", [
    {"command": "rotnum", "op": "estimate", "inputs": {"map": {"type": "rotation", "theta": 0.1}},
     "colour": "red"},
    {"command": "rotnum", "op": "estimate", "inputs": {"map": {"type": "rotation", "theta": 0.1}},
     "params": {"iterations": 10}},
    {"command": "rotnum", "op": "estimate"},
    {"command": "rotnum", "op": "nonexistent"},
    {"command": "rotnum", "op": "convergents", "inputs": {"extra": 1}},
])
def test_schema_violations_exit_2(tmp_path, job):
    path = write_job(tmp_path, job)
    assert cli.main(["rotnum", "--job", path, "--out", str(tmp_path)]) == 2


def test_command_mismatch_exit_2(tmp_path):
    path = write_job(tmp_path, {"command": "rotnum", "op": "convergents"})
    assert cli.main(["thompson", "--job", path, "--out", str(tmp_path)]) == 2


def test_unknown_preset_and_bad_json(tmp_path):
    assert cli.main(["rotnum", "--preset", "no_such_preset", "--out", str(tmp_path)]) == 2
    p = tmp_path / "broken.json"
    p.write_text("{not json")
    assert cli.main(["rotnum", "--job", str(p), "--out", str(tmp_path)]) == 2


def test_bad_seed_and_threads(tmp_path):
    path = write_job(tmp_path, {"command": "rotnum", "op": "convergents"})
    assert cli.main(["rotnum", "--job", path, "--seed", "-1", "--out", str(tmp_path)]) == 2
    assert cli.main(["rotnum", "--job", path, "--threads", "0", "--out", str(tmp_path)]) == 2


def test_precondition_error_exit_2(tmp_path):
    job = {"command": "rotnum", "op": "convergents", "params": {"theta": 0.5}}
    path = write_job(tmp_path, job, "rational")
    assert cli.main(["rotnum", "--job", path, "--out", str(tmp_path)]) == 2
    r = read_result(tmp_path, "rational")
    assert r["status"] == "error" and r["error"]["type"] == "DomainError"


def test_convergence_error_exit_3(tmp_path):
    job = {"command": "walk", "op": "stationary", "inputs": {"system": "schottky"},
           "params": {"tol": 1e-14, "max_iter": 3}}
    path = write_job(tmp_path, job, "noconv")
    assert cli.main(["walk", "--job", path, "--out", str(tmp_path)]) == 3
    r = read_result(tmp_path, "noconv")
    assert r["error"]["type"] == "ConvergenceError"
    assert r["error"]["report"]["iterations"] == 3
