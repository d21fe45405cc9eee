import csv
import json
import os
from pathlib import Path

import pytest
from click.testing import CliRunner

from puzzlelab import runner
from puzzlelab.cli import main

GOLDEN = Path(__file__).parent / "golden"

SMALL = {
    "approx-prob": {"n": 4, "depth": 4, "instances": 10, "samples_per_bit": 2000},
    "owp-roundtrip": {"n": 3, "depth": 3, "trials": 2000, "oracle": {"noise": {"epsilon": 0.05, "mode": "mass-shift"}}},
    "keyrec": {"n": 3, "depth": 4, "oracle": {"rel_error": 0.01, "fail_prob": 0.0}},
    "pseudodet": {"n": 4, "depth": 4, "instances": 5, "samples_per_bit": 1000, "repeats": 5, "trials": 2000},
    "dualmode": {"families": [{"num_qubits": 2}, {"num_qubits": 3}], "ensemble_size": 2, "trials": 50, "p": 10},
    "synth": {"n": 2, "depth": 4, "instances": 3, "trials": 2000, "epsilons": [0.0, 0.01]},
    "flatness": {"n": 2, "instances": 50},
    "geom": {"instances": 4, "trials": 2000},
}


def write_config(path, cfg):
    path.write_text(json.dumps(cfg), encoding="utf-8")
    return str(path)


def invoke(*args, env=None):
    return CliRunner().invoke(main, list(args), env=env)


@pytest.mark.parametrize("experiment", sorted(SMALL))
def test_golden_rows(experiment, tmp_path):
    cfg = dict(SMALL[experiment], experiment=experiment, seed=7)
    conf = write_config(tmp_path / "cfg.json", cfg)
    outs = []
    for k in range(2):
        res = invoke("run", "--config", conf, "--out", str(tmp_path / f"out{k}"))
        assert res.exit_code == 0, res.output
        outs.append({p.name: p.read_bytes() for p in sorted((tmp_path / f"out{k}").iterdir())})
    assert outs[0] == outs[1]
    golden = GOLDEN / experiment
    if os.environ.get("PUZZLELAB_UPDATE_GOLDEN"):
        golden.mkdir(parents=True, exist_ok=True)
        for name, blob in outs[0].items():
            (golden / name).write_bytes(blob)
    for name, blob in outs[0].items():
        assert (golden / name).read_bytes() == blob, f"{experiment}/{name} drifted from the golden copy"


def test_threads_do_not_change_output(tmp_path):
    cfg = dict(SMALL["approx-prob"], experiment="approx-prob", seed=3)
    conf = write_config(tmp_path / "cfg.json", cfg)
    invoke("run", "--config", conf, "--out", str(tmp_path / "a"), env={runner.THREADS_ENV: "1"})
    invoke("run", "--config", conf, "--out", str(tmp_path / "b"), env={runner.THREADS_ENV: "4"})
    assert (tmp_path / "a" / "rows.csv").read_bytes() == (tmp_path / "b" / "rows.csv").read_bytes()


def test_rows_carry_config_hash(tmp_path):
    cfg = dict(SMALL["geom"], experiment="geom", seed=1)
    conf = write_config(tmp_path / "cfg.json", cfg)
    invoke("run", "--config", conf, "--out", str(tmp_path / "o"))
    text = (tmp_path / "o" / "rows.csv").read_text()
    assert "\r" not in text
    rows = list(csv.DictReader(text.splitlines()))
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert tuple(rows[0].keys()) == runner.ROW_COLUMNS
    assert {r["config_hash"] for r in rows} == {summary["config_hash"]}
    assert summary["config_hash"] == runner.config_hash(runner.normalize_config(cfg))
    assert summary["schema_version"] == runner.SCHEMA_VERSION


def test_hash_ignores_output_and_defaults():
    a = runner.normalize_config({"experiment": "geom", "seed": 1})
    b = runner.normalize_config({"experiment": "geom", "seed": 1, "trials": 1000000, "output": "x"})
    assert runner.config_hash(a) == runner.config_hash(b)
    c = runner.normalize_config({"experiment": "geom", "seed": 2})
    assert runner.config_hash(a) != runner.config_hash(c)


def test_streams_are_independent_and_stable():
    a = runner.stream(5, "synth", 1).integers(2**62, size=4)
    b = runner.stream(5, "synth", 1).integers(2**62, size=4)
    c = runner.stream(5, "synth", 2).integers(2**62, size=4)
    d = runner.stream(5, "geom", 1).integers(2**62, size=4)
    assert (a == b).all()
    assert not (a == c).all() and not (a == d).all()


def test_geom_example(tmp_path):
    conf = write_config(tmp_path / "cfg.json", {"experiment": "geom", "seed": 7, "trials": 10**6})
    res = invoke("run", "--config", conf, "--out", str(tmp_path / "o"))
    assert res.exit_code == 0
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["metrics"]["violations"] == 0
    assert summary["metrics"]["tuples"] == 10**6


def test_flatness_example(tmp_path):
    conf = write_config(tmp_path / "cfg.json", {"experiment": "flatness", "seed": 7, "n": 2})
    invoke("run", "--config", conf, "--out", str(tmp_path / "o"))
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["metrics"]["empirical_second_moment"] == pytest.approx(0.1, rel=0.03)
    assert summary["verdict"] == "pass"


def test_synth_writes_diagnostics(tmp_path):
    cfg = dict(SMALL["synth"], experiment="synth", seed=2)
    conf = write_config(tmp_path / "cfg.json", cfg)
    invoke("run", "--config", conf, "--out", str(tmp_path / "o"))
    lines = (tmp_path / "o" / "diagnostics.jsonl").read_text().splitlines()
    assert len(lines) == 6
    rec = json.loads(lines[0])
    for key in ("fidelity", "pivot", "amplitude_error_histogram", "phase_error_histogram", "inverter_sd"):
        assert key in rec


# -- exit codes ----------------------------------------------------------------------


@pytest.mark.parametrize(
    "cfg",
    [
        {"experiment": "geom"},
        {"experiment": "nope", "seed": 1},
        {"experiment": "geom", "seed": 1, "bogus": 3},
        {"experiment": "synth", "seed": 1, "instances": 0},
        {"experiment": "owp-roundtrip", "seed": 1, "oracle": {"noise": {"epsilon": 1.5, "mode": "mass-shift"}}},
        [1, 2],
    ],
)
def test_schema_violation_exit(cfg, tmp_path):
    conf = write_config(tmp_path / "cfg.json", cfg)
    res = invoke("run", "--config", conf, "--out", str(tmp_path / "o"))
    assert res.exit_code == 3
    assert not (tmp_path / "o").exists()


def test_invalid_json_exit(tmp_path):
    (tmp_path / "cfg.json").write_text("{not json")
    assert invoke("run", "--config", str(tmp_path / "cfg.json"), "--out", str(tmp_path / "o")).exit_code == 3


def test_infeasible_noise_exit(tmp_path):
    cfg = {"experiment": "owp-roundtrip", "seed": 1, "n": 3, "trials": 10,
           "oracle": {"noise": {"epsilon": 0.99, "mode": "prefix-corrupt"}}}
    res = invoke("run", "--config", write_config(tmp_path / "cfg.json", cfg), "--out", str(tmp_path / "o"))
    assert res.exit_code == 4


@pytest.mark.parametrize("cfg", [
    {"experiment": "approx-prob", "seed": 1, "n": 25},
    {"experiment": "keyrec", "seed": 1, "n": 13},
    {"experiment": "dualmode", "seed": 1, "families": [{"num_qubits": 30}]},
])
def test_qubit_cap_exit(cfg, tmp_path):
    res = invoke("run", "--config", write_config(tmp_path / "cfg.json", cfg), "--out", str(tmp_path / "o"))
    assert res.exit_code == 5


def test_strict_verdict_exit(tmp_path):
    cfg = dict(SMALL["approx-prob"], experiment="approx-prob", seed=1, thresholds={"rel_tol": 1e-12})
    conf = write_config(tmp_path / "cfg.json", cfg)
    assert invoke("run", "--config", conf, "--out", str(tmp_path / "a")).exit_code == 0
    assert invoke("run", "--config", conf, "--out", str(tmp_path / "b"), "--strict").exit_code == 1
    assert json.loads((tmp_path / "b" / "summary.json").read_text())["verdict"] == "fail"
