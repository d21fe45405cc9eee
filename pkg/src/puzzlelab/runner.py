"""Config-driven experiment runs with deterministic CSV and JSON output."""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import os
import zlib
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import jsonschema
import numpy as np

from . import designs, dists, oracles, qsim, reductions, statesynth
from .errors import QubitCapExceeded
from .oracles import NoiseSpec
from .qsim import Distribution

SCHEMA_VERSION = "1"
ROW_COLUMNS = ("schema_version", "config_hash", "experiment", "instance", "metric", "value", "verdict")
THREADS_ENV = "PUZZLELAB_THREADS"
EXPERIMENTS = ("approx-prob", "owp-roundtrip", "keyrec", "pseudodet", "dualmode", "synth", "flatness", "geom")

DEFAULTS: dict[str, dict] = {
    "approx-prob": {
        "n": 8, "depth": 8, "instances": 200, "samples_per_bit": 20000,
        "thresholds": {"rel_tol": 0.25, "mass_factor": 8, "pass_fraction": 0.9},
    },
    "owp-roundtrip": {
        "n": 5, "depth": 5, "instances": 1, "trials": 100000,
        "oracle": {"noise": {"epsilon": 0.0, "mode": "none"}},
        "thresholds": {"empirical_sd": 0.01, "sd_tol": 1e-6},
    },
    "keyrec": {
        "n": 6, "depth": 6, "instances": 1,
        "oracle": {"rel_error": 0.0, "fail_prob": 0.0},
        "thresholds": {"key_sd": 0.05, "gap_factor": 6},
    },
    "pseudodet": {
        "n": 8, "depth": 8, "instances": 200, "samples_per_bit": 10000, "repeats": 50, "trials": 100000,
        "thresholds": {"probe_tol": 0.02, "pass_fraction": 0.95, "output_sd": 0.1},
    },
    "dualmode": {
        "families": [{"num_qubits": 3}, {"num_qubits": 4}, {"num_qubits": 5}],
        "ensemble_size": 4, "trials": 10000, "p": 10,
        "thresholds": {"exact_tol": 1e-12, "slack": 1e-9},
    },
    "synth": {
        "n": 4, "depth": 10, "instances": 20, "trials": 100000, "exact": False,
        "epsilons": [0.0], "noise_mode": "mass-shift",
        "thresholds": {"mean_fidelity": 0.95},
    },
    "flatness": {
        "n": 2, "instances": 2000, "threshold_multiple": 64, "heavy_cut": 0.05, "state": "random",
        "thresholds": {"second_moment_rel": 0.03, "heavy_fraction": 0.05},
    },
    "geom": {
        "instances": 100, "trials": 1000000,
        "thresholds": {"violations": 0},
    },
}


class ConfigError(ValueError):
    """The config does not validate against the shipped schema."""


def load_schema() -> dict:
    text = resources.files("puzzlelab").joinpath("schema/experiment_config.schema.json").read_text()
    return json.loads(text)


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def normalize_config(raw: dict) -> dict:
    """Validate ``raw`` and fill experiment defaults."""
    try:
        jsonschema.validate(raw, load_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"{path}: {exc.message}") from None
    cfg = _merge(DEFAULTS[raw["experiment"]], raw)
    cfg.pop("output", None)
    cfg["schema_version"] = SCHEMA_VERSION
    return cfg


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def stream(seed: int, experiment: str, instance: int, trial: int = 0) -> np.random.Generator:
    """Independent generator keyed by (seed, experiment, instance, trial)."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(zlib.crc32(experiment.encode()), instance, trial))
    return np.random.default_rng(ss)


def thread_count() -> int:
    try:
        return max(1, int(os.environ.get(THREADS_ENV, "1")))
    except ValueError:
        return 1


@dataclass
class Row:
    instance: int
    metric: str
    value: float
    verdict: str = "info"


@dataclass
class RunResult:
    config: dict
    config_hash: str
    rows: list[Row]
    summary: dict
    passed: bool
    extra_files: dict[str, str] = field(default_factory=dict)

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(ROW_COLUMNS)
        for r in self.rows:
            w.writerow([SCHEMA_VERSION, self.config_hash, self.config["experiment"], r.instance, r.metric, _fmt(r.value), r.verdict])
        return buf.getvalue()

    def summary_json(self) -> str:
        doc = {
            "schema_version": SCHEMA_VERSION,
            "config_hash": self.config_hash,
            "experiment": self.config["experiment"],
            "config": self.config,
            "metrics": self.summary,
            "verdict": "pass" if self.passed else "fail",
        }
        return json.dumps(doc, sort_keys=True, indent=2, default=_json_default) + "\n"

    def write(self, out_dir: str | Path) -> Path:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "rows.csv").write_text(self.rows_csv(), encoding="utf-8", newline="\n")
        (out / "summary.json").write_text(self.summary_json(), encoding="utf-8", newline="\n")
        for name, text in self.extra_files.items():
            (out / name).write_text(text, encoding="utf-8", newline="\n")
        return out


def _fmt(value: float) -> str:
    return repr(float(value))


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj)!r}")


def _verdict(ok: bool) -> str:
    return "pass" if ok else "fail"


def _map(fn: Callable[[int], object], count: int) -> list:
    workers = thread_count()
    if workers == 1:
        return [fn(k) for k in range(count)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(count)))


def _require_cap(qubits: int) -> None:
    if qubits > qsim.MAX_QUBITS:
        raise QubitCapExceeded(f"experiment needs {qubits} qubits; cap is {qsim.MAX_QUBITS}")


def _circuit_distribution(cfg: dict, num_qubits: int) -> Distribution:
    rng = stream(cfg["seed"], cfg["experiment"], 0, 0)
    fam = dists.CircuitFamily("random-universal", num_qubits, cfg["depth"], int(rng.integers(2**63)))
    return dists.family_distribution(fam)


# ---------------------------------------------------------------------------
# Experiments
# ---------------------------------------------------------------------------


def _approx_prob(cfg: dict):
    n, th = cfg["n"], cfg["thresholds"]
    _require_cap(n)
    d = _circuit_distribution(cfg, n)
    oracle = oracles.perfect_postselected_sampler(d)
    params = reductions.ReductionParams(cfg["samples_per_bit"], n, th["rel_tol"])
    floor = 1.0 / (th["mass_factor"] * (1 << n))

    def one(k: int):
        rng = stream(cfg["seed"], cfg["experiment"], k + 1)
        x = d.sample(rng)
        est = reductions.approx_probability(x, oracle, params, rng)
        truth = d.prob(x)
        rel = abs(est.value - truth) / truth
        verdict = _verdict(rel <= th["rel_tol"]) if truth >= floor else "excluded"
        return Row(k, "rel_error", rel, verdict)

    rows = _map(one, cfg["instances"])
    eligible = [r for r in rows if r.verdict != "excluded"]
    frac = sum(r.verdict == "pass" for r in eligible) / max(1, len(eligible))
    summary = {"eligible": len(eligible), "pass_fraction": frac}
    return rows, summary, frac >= th["pass_fraction"], {}


def _owp_roundtrip(cfg: dict):
    n, th = cfg["n"], cfg["thresholds"]
    _require_cap(n)
    noise = cfg["oracle"]["noise"]
    spec = NoiseSpec(noise["epsilon"], noise["mode"])
    rows: list[Row] = []
    ok = True
    summary: dict = {}
    for k in range(cfg["instances"]):
        rng = stream(cfg["seed"], cfg["experiment"], k + 1)
        fam = dists.CircuitFamily("random-universal", n, cfg["depth"], int(rng.integers(2**63)))
        d = dists.family_distribution(fam)
        inverter = oracles.noisy_sampler(d, spec, rng)
        exact_joint = reductions.owp_joint(d)
        served_joint = reductions.owp_joint(d, inverter.table)
        counts: Counter = Counter()
        verified = 0
        for t in range(cfg["trials"]):
            rec = reductions.owp_from_distribution(d, rng)
            verified += reductions.owp_verify(d, rec)
            i, prefix = rec.puzzle
            key = inverter.query(prefix, rng)[0]
            counts[(i, prefix, key)] += 1
        empirical = {key: c / cfg["trials"] for key, c in counts.items()}
        emp_sd = qsim.statistical_distance_maps(empirical, served_joint)
        sd_ok = abs(inverter.realized_sd - spec.epsilon) <= th["sd_tol"]
        emp_ok = emp_sd <= th["empirical_sd"]
        ver_rate = verified / cfg["trials"]
        rows += [
            Row(k, "realized_sd", inverter.realized_sd, _verdict(sd_ok)),
            Row(k, "owp_joint_sd", qsim.statistical_distance_maps(exact_joint, served_joint)),
            Row(k, "empirical_sd", emp_sd, _verdict(emp_ok)),
            Row(k, "verify_rate", ver_rate, _verdict(ver_rate == 1.0)),
        ]
        ok &= sd_ok and emp_ok and ver_rate == 1.0
    summary["instances"] = cfg["instances"]
    summary["max_empirical_sd"] = max(r.value for r in rows if r.metric == "empirical_sd")
    return rows, summary, ok, {}


def _keyrec(cfg: dict):
    n, th = cfg["n"], cfg["thresholds"]
    _require_cap(2 * n)
    rel, fail = cfg["oracle"]["rel_error"], cfg["oracle"]["fail_prob"]
    rows: list[Row] = []
    ok = True
    for k in range(cfg["instances"]):
        rng = stream(cfg["seed"], cfg["experiment"], k + 1)
        fam = dists.CircuitFamily("random-universal", 2 * n, cfg["depth"], int(rng.integers(2**63)))
        joint = dists.family_distribution(fam)
        table = reductions.dn_table(joint, n)
        oracle = oracles.ProbOracle(table, 2 * n, rel, fail, seed=int(rng.integers(2**63)))
        sd, trees = reductions.key_recovery_sd(joint, n, oracle)
        gaps = [g for t in trees for g in t.gaps]
        clipped = sum(t.clipped for t in trees)
        gap_bound = th["gap_factor"] * rel + 1e-12
        exceed = sum(g > gap_bound for g in gaps) / max(1, len(gaps))
        gap_ok = exceed <= 2 * fail if fail > 0 else exceed == 0
        sd_ok = sd <= th["key_sd"] if rel == 0 and fail == 0 else True
        rows += [
            Row(k, "key_sd", sd, _verdict(sd_ok) if rel == 0 and fail == 0 else "info"),
            Row(k, "max_bit_gap", max(gaps, default=0.0), _verdict(gap_ok)),
            Row(k, "gap_exceed_fraction", exceed),
            Row(k, "clipping_events", clipped),
        ]
        ok &= sd_ok and gap_ok
    summary = {"max_key_sd": max(r.value for r in rows if r.metric == "key_sd")}
    return rows, summary, ok, {}


def _pseudodet(cfg: dict):
    n, th = cfg["n"], cfg["thresholds"]
    _require_cap(n)
    d = _circuit_distribution(cfg, n)
    sampler = oracles.perfect_postselected_sampler(d)
    params = reductions.ReductionParams(cfg["samples_per_bit"], n)

    def one(k: int):
        rng = stream(cfg["seed"], cfg["experiment"], k + 1)
        r = reductions.draw_randomness(n, rng)
        probe = reductions.determinism_error_probe(r, sampler, params, cfg["repeats"], rng)
        verdict = _verdict(probe.error <= th["probe_tol"])
        return [Row(k, "probe", probe.error, verdict), Row(k, "threshold_adjacent", float(probe.threshold_adjacent))]

    rows = [row for pair in _map(one, cfg["instances"]) for row in pair]
    probes = [r for r in rows if r.metric == "probe"]
    frac = sum(r.verdict == "pass" for r in probes) / len(probes)
    rng = stream(cfg["seed"], cfg["experiment"], cfg["instances"] + 1)
    R = reductions.draw_randomness(n, rng, size=cfg["trials"])
    outputs = reductions.pseudodet_batch(R, sampler, params, rng)
    counts = Counter(o for o in outputs if o is not None)
    aborted = sum(o is None for o in outputs)
    emp = np.zeros(1 << n)
    for key, c in counts.items():
        emp[qsim.bits_to_int(key)] = c / cfg["trials"]
    out_sd = 0.5 * float(np.abs(emp - d.probs).sum()) + aborted / cfg["trials"] / 2
    sd_ok = out_sd <= th["output_sd"]
    rows.append(Row(cfg["instances"], "output_sd", out_sd, _verdict(sd_ok)))
    summary = {
        "probe_pass_fraction": frac,
        "empirical_epsilon": 1.0 - frac,
        "output_sd": out_sd,
        "aborted": aborted,
    }
    return rows, summary, frac >= th["pass_fraction"] and sd_ok, {}


def _dualmode(cfg: dict):
    th = cfg["thresholds"]
    fams = []
    base = stream(cfg["seed"], cfg["experiment"], 0)
    for spec in cfg["families"]:
        _require_cap(spec["num_qubits"])
        seed = spec.get("seed", int(base.integers(2**63)))
        fams.append(dists.CircuitFamily("random-universal", spec["num_qubits"], spec.get("depth", spec["num_qubits"]), seed))
    ensemble = reductions.DualModeEnsemble(fams, cfg["ensemble_size"])
    table = reductions.dual_mode_table(ensemble)
    width = max(f.num_qubits for f in fams)
    p = cfg["p"]
    exact = oracles.ProbOracle(table, width)
    noisy = oracles.ProbOracle(table, width, rel_error=1.0 / p, seed=int(base.integers(2**63)))
    bound = 3.0 / p + th["slack"]

    def one(k: int):
        rng = stream(cfg["seed"], cfg["experiment"], k + 1)
        while True:
            b, c_id, x = reductions.dual_mode_dist(ensemble, rng)
            if b == 1:
                break
        truth = ensemble.distribution(c_id).prob(x)
        e_exact = abs(reductions.ratio_estimator(c_id, x, exact).value - truth)
        e_noisy = abs(reductions.ratio_estimator(c_id, x, noisy).value - truth) / truth
        return [
            Row(k, "exact_abs_error", e_exact, _verdict(e_exact <= th["exact_tol"])),
            Row(k, "noisy_rel_error", e_noisy, _verdict(e_noisy <= bound)),
        ]

    rows = [row for pair in _map(one, cfg["trials"]) for row in pair]
    ok = all(r.verdict == "pass" for r in rows)
    summary = {
        "max_exact_abs_error": max(r.value for r in rows if r.metric == "exact_abs_error"),
        "max_noisy_rel_error": max(r.value for r in rows if r.metric == "noisy_rel_error"),
        "noisy_bound": bound,
    }
    return rows, summary, ok, {}


def _synth(cfg: dict):
    n, th = cfg["n"], cfg["thresholds"]
    _require_cap(n + 1)
    params = statesynth.SynthesisParams(None if cfg["exact"] else cfg["trials"])
    rows: list[Row] = []
    diags: list[str] = []
    means = []
    for e_idx, eps in enumerate(cfg["epsilons"]):
        spec = NoiseSpec(eps, cfg["noise_mode"] if eps > 0 else "none")

        def one(k: int):
            # the same instance stream for every epsilon keeps comparisons paired
            rng = stream(cfg["seed"], cfg["experiment"], k + 1)
            gen = statesynth.random_generator(n, 1, cfg["depth"], int(rng.integers(2**63)))
            inst = statesynth.state_puzzle_from_sampler(gen, rng)
            res = statesynth.full_synthesis(inst.s, statesynth.PuzzleInverter(gen, spec), params, rng)
            return res

        results = _map(one, cfg["instances"])
        fids = [r.fidelity for r in results]
        means.append((eps, float(np.mean(fids)), float(np.std(fids, ddof=1) / np.sqrt(len(fids))) if len(fids) > 1 else 0.0))
        for k, res in enumerate(results):
            rows.append(Row(k, f"fidelity[eps={eps!r}]", res.fidelity))
            rec = {"epsilon": eps, "instance": k, "fidelity": res.fidelity, "clifford_seed": res.clifford.seed}
            rec.update(res.diagnostics.as_record())
            diags.append(json.dumps(rec, sort_keys=True))
    mean0 = means[0][1]
    monotone = all(means[i + 1][1] <= means[i][1] + means[i][2] for i in range(len(means) - 1))
    summary = {
        "mean_fidelity": {repr(e): m for e, m, _ in means},
        "stderr": {repr(e): s for e, _, s in means},
        "monotone_within_stderr": monotone,
    }
    ok = mean0 >= th["mean_fidelity"] and monotone
    return rows, summary, ok, {"diagnostics.jsonl": "\n".join(diags) + "\n"}


def _flatness(cfg: dict):
    n, th = cfg["n"], cfg["thresholds"]
    _require_cap(n)
    rng = stream(cfg["seed"], cfg["experiment"], 0)
    if cfg["state"] == "zero":
        psi = qsim.PureState.zeros(n)
    else:
        vec = rng.standard_normal(1 << n) + 1j * rng.standard_normal(1 << n)
        psi = qsim.PureState.from_vector(vec, normalize=True)
    threshold = cfg["threshold_multiple"] / (1 << n)
    rep = designs.flatness_stats(psi, cfg["instances"], threshold, rng, cfg["heavy_cut"])
    expected = designs.haar_second_moment(n)
    rel = abs(rep.empirical_second_moment - expected) / expected
    heavy_frac = 1.0 - rep.fraction_flat
    rows = []
    for k, (hm, sm) in enumerate(zip(rep.heavy_mass, rep.second_moments)):
        rows.append(Row(k, "heavy_mass", hm, _verdict(hm <= cfg["heavy_cut"])))
        rows.append(Row(k, "second_moment", sm))
    summary = rep.summary()
    summary.update({
        "expected_second_moment": expected,
        "second_moment_rel_error": rel,
        "heavy_fraction": heavy_frac,
    })
    ok = rel <= th["second_moment_rel"] and heavy_frac <= th["heavy_fraction"]
    return rows, summary, ok, {}


def _geom(cfg: dict):
    th = cfg["thresholds"]
    batches = cfg["instances"]
    per, extra = divmod(cfg["trials"], batches)

    def one(k: int):
        rng = stream(cfg["seed"], cfg["experiment"], k + 1)
        count = per + (1 if k < extra else 0)
        x, y, xs, ys, g, gp = statesynth.random_geometric_tuples(count, rng)
        lhs, bound, ok, valid = statesynth.geometric_bound_batch(x, y, xs, ys, g, gp)
        viol = int((~ok).sum())
        chord = float(np.max(np.abs(lhs - statesynth.ray_chord(x, y, xs, ys)), initial=0.0))
        return [
            Row(k, "tuples", float(valid.sum())),
            Row(k, "violations", viol, _verdict(viol <= th["violations"])),
            Row(k, "max_ratio", float(np.max(lhs / bound, initial=0.0))),
            Row(k, "chord_mismatch", chord, _verdict(chord <= 1e-9)),
        ]

    rows = [row for group in _map(one, batches) for row in group]
    violations = int(sum(r.value for r in rows if r.metric == "violations"))
    tuples = int(sum(r.value for r in rows if r.metric == "tuples"))
    ok = violations <= th["violations"] and all(r.verdict != "fail" for r in rows)
    return rows, {"tuples": tuples, "violations": violations}, ok, {}


_RUNNERS = {
    "approx-prob": _approx_prob,
    "owp-roundtrip": _owp_roundtrip,
    "keyrec": _keyrec,
    "pseudodet": _pseudodet,
    "dualmode": _dualmode,
    "synth": _synth,
    "flatness": _flatness,
    "geom": _geom,
}


def run_experiment(raw: dict) -> RunResult:
    cfg = normalize_config(raw)
    rows, summary, ok, extra = _RUNNERS[cfg["experiment"]](cfg)
    return RunResult(cfg, config_hash(cfg), rows, summary, bool(ok), extra)
