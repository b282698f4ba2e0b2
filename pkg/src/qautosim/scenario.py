"""Scenario files, per-module runners and output writers.

A scenario is a JSON document validated against ``scenario_schema.json``.
Missing keys are filled from the schema defaults, and the filled config is
echoed into the run header together with its SHA-256 hash.
"""
from __future__ import annotations

import copy
import csv
import datetime as _dt
import hashlib
import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
from jsonschema import Draft202012Validator, validators

from . import __version__
from .bb84 import SUMMARY_COLUMNS, ChannelModel, OneTimePad, run_session
from .control import (Command, LoopConfig, as_tf, coefficient_listing, decode_setpoint,
                      quantum_gated_run, seal_commands)
from .errors import ParseError, SchemaError, SizeMismatch
from .formation import AgentNetwork, PIDGains, point_mass, simulate_formation
from .perturbation import EigenSystem, PerturbationProblem, validate_against_ode
from .qubit import HBAR
from .rng import StreamFactory
from .spdc import (CoincidenceConfig, DetectorModel, TriggerEvent, analytic_chsh, chsh, chsh_settings,
                   coincidence_counts, correlation, correlation_sigma, count_coincidences, detect, entangled_key,
                   entanglement_trigger, generate_pairs, measure_pairs, named_state, run_setting, trigger_active)

log = logging.getLogger("qautosim")

KINDS = ("bb84", "entangle", "formation", "loop", "perturb", "combined")


def load_schema() -> dict:
    return json.loads(resources.files("qautosim").joinpath("scenario_schema.json").read_text())


def _with_defaults(cls):
    validate_props = cls.VALIDATORS["properties"]

    def set_defaults(validator, properties, instance, schema):
        if isinstance(instance, dict):
            for name, sub in properties.items():
                if "default" in sub:
                    instance.setdefault(name, copy.deepcopy(sub["default"]))
        yield from validate_props(validator, properties, instance, schema)

    return validators.extend(cls, {"properties": set_defaults})


_FillingValidator = _with_defaults(Draft202012Validator)


def validate_config(raw: dict) -> dict:
    """Return a defaults-filled copy of ``raw`` or raise SchemaError naming the offending key path."""
    if not isinstance(raw, dict):
        raise SchemaError("scenario must be a JSON object")
    cfg = copy.deepcopy(raw)
    errors = sorted(_FillingValidator(load_schema()).iter_errors(cfg), key=lambda e: list(e.absolute_path))
    if errors:
        err = errors[0]
        raise SchemaError(err.message, err.absolute_path)
    return cfg


def load_scenario(path) -> dict:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise ParseError(f"{path}: not UTF-8 text ({exc})") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return validate_config(raw)


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True, separators=(",", ":")).encode()).hexdigest()


@dataclass
class Table:
    columns: list
    rows: list = field(default_factory=list)


@dataclass
class RunLog:
    header: dict
    streams: dict = field(default_factory=dict)
    records: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    wall_clock: str = ""

    def table(self, name: str, columns) -> Table:
        self.streams[name] = Table(list(columns))
        return self.streams[name]


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return int(x)
    return "" if x is None else x


def json_safe(x):
    if isinstance(x, dict):
        return {k: json_safe(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [json_safe(v) for v in x]
    if isinstance(x, np.generic):
        return x.item()
    if isinstance(x, float) and not np.isfinite(x):
        return repr(x)
    return x


def emit_plots(run: RunLog, out_dir) -> list[Path]:
    """Write one CSV per stream; a stream without rows still gets its header."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, tab in run.streams.items():
        p = out / f"{name}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(tab.columns)
            for row in tab.rows:
                w.writerow([_cell(x) for x in row])
        paths.append(p)
    return paths


def write_run(run: RunLog, out_dir) -> None:
    """run.jsonl (wall clock alone on the first line), record files and CSV streams."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "run.jsonl").open("w") as fh:
        fh.write(json.dumps({"wall_clock": run.wall_clock}) + "\n")
        fh.write(json.dumps({"header": json_safe(run.header)}, sort_keys=True) + "\n")
        fh.write(json.dumps({"summary": json_safe(run.summary)}, sort_keys=True) + "\n")
    for name, recs in run.records.items():
        with (out / f"{name}.jsonl").open("w") as fh:
            for r in recs:
                fh.write(json.dumps(json_safe(r), sort_keys=True) + "\n")
    emit_plots(run, out)


def append_error(out_dir, kind: str, message: str) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with (out / "run.jsonl").open("a") as fh:
        fh.write(json.dumps({"error": {"kind": kind, "message": message}}, sort_keys=True) + "\n")


# ---------------------------------------------------------------- runners

def _bb84_session(sec: dict, streams: StreamFactory):
    channel = ChannelModel(sec["transmittance"], sec["depolarization_prob"], sec["detector_efficiency"],
                           sec["eve_fraction"])
    return run_session(sec["n"], channel, streams.stream("bb84", 0), streams.stream("bb84", 1),
                       streams.stream("bb84", 2), streams.stream("bb84", 3),
                       sec["sample_fraction"], sec["threshold"])


def _run_bb84(cfg, streams, run: RunLog, prefix=""):
    sec = cfg["bb84"]
    session = _bb84_session(sec, streams)
    summ = session.summary()
    run.table(prefix + "summary", SUMMARY_COLUMNS).rows.append([summ[c] for c in SUMMARY_COLUMNS])
    if sec["write_transcript"]:
        run.records["transcript"] = list(session.transcript())
    run.summary.update({("bb84_" + k if prefix else k): v for k, v in summ.items()})
    return session


def _detectors(sec):
    det = DetectorModel(sec["efficiency"], sec["dark_rate"], sec["jitter_sigma"], sec["dead_time"])
    return det, det


def _run_entangle(cfg, streams, run: RunLog):
    sec = cfg["entangle"]
    state = named_state(sec["state"])
    det_a, det_b = _detectors(sec)
    cc = CoincidenceConfig(sec["window"], sec["clock_skew"])
    tab = run.table("counts", ["alpha", "beta", "N_TT", "N_TR", "N_RT", "N_RR", "E", "sigma_E"])
    E, sig, first_times = [], [], None
    for i, (alpha, beta) in enumerate(chsh_settings(sec["angles"])):
        res = run_setting(state, alpha, beta, sec["pairs"], sec["rate"], det_a, det_b, cc,
                          streams.stream("entangle", i))
        e, s = correlation(res.counts), correlation_sigma(res.counts)
        E.append(e)
        sig.append(s)
        tab.rows.append([alpha, beta, *(int(c) for c in res.counts), e, s])
        if first_times is None:
            first_times = res.coincidence_times
    edges = entanglement_trigger(first_times, sec["trigger_min_rate"], sec["trigger_window"])
    trig = run.table("triggers", ["time", "active"])
    trig.rows.extend([e.time, e.active] for e in edges)
    S = chsh(*E)
    s_sigma = float(np.sqrt(np.sum(np.square(sig))))
    key_len, key_err = 0, None
    if sec["key_pairs"]:
        a_key, b_key = entangled_key(state, sec["key_pairs"], sec["rate"], det_a, det_b, cc,
                                     streams.stream("entangle_key"))
        key_len = len(a_key)
        key_err = float(np.mean(a_key.as_array() != b_key.as_array())) if key_len else None
    run.table("summary", ["E_ab", "E_ab2", "E_a2b", "E_a2b2", "S", "S_sigma", "S_analytic", "trigger_count",
                          "key_len", "key_error_rate"]
              ).rows.append([*E, S, s_sigma, analytic_chsh(state, sec["angles"]), sum(e.active for e in edges),
                             key_len, key_err])
    run.summary.update({"E": E, "S": S, "S_sigma": s_sigma, "trigger_count": sum(e.active for e in edges),
                        "key_len": key_len, "key_error_rate": key_err})


def _network(sec) -> AgentNetwork:
    offsets = np.asarray(sec["offsets"], dtype=float)
    n = len(offsets)
    if sec["adjacency"] is None:
        adj = np.ones((n + 1, n + 1), dtype=int) - np.eye(n + 1, dtype=int)
        adj[0, :] = 0
    else:
        adj = np.asarray(sec["adjacency"], dtype=int)
    lim = np.inf if sec["integrator_limit"] is None else sec["integrator_limit"]
    return AgentNetwork(adj, offsets, PIDGains.uniform(sec["k_p"], sec["k_i"], sec["k_d"]), lim,
                        sec["saturation"], sec["literal_offsets"])


def _agents(sec, streams):
    offsets = np.asarray(sec["offsets"], dtype=float)
    if sec["initial_positions"] is None:
        rng = streams.stream("formation", 0)
        start = offsets + rng.uniform(-sec["initial_spread"], sec["initial_spread"], offsets.shape)
    else:
        start = np.asarray(sec["initial_positions"], dtype=float)
    leader = point_mass(sec["mass"], velocity=sec["leader_velocity"], drag=sec["drag"])
    followers = [point_mass(sec["mass"], position=p, drag=sec["drag"]) for p in start]
    return leader, followers


def _run_formation(cfg, streams, run: RunLog, engage_time=0.0, name="formation"):
    sec = cfg["formation"]
    net = _network(sec)
    leader, followers = _agents(sec, streams)
    flog = simulate_formation(net, leader, followers, sec["duration"], sec["dt"], sec["tolerance"],
                              engage_time, sec["log_every"])
    run.table(name, flog.columns).rows.extend(flog.rows)
    run.summary.update({"initial_error": flog.initial_error, "final_error": flog.final_error,
                        "converged": flog.converged, "engage_time": engage_time})
    return flog


def _run_loop(cfg, streams, run: RunLog):
    sec = cfg["loop"]
    loop = LoopConfig(as_tf(sec["controller"]), as_tf(sec["actuator"]), as_tf(sec["plant"]),
                      as_tf(sec["sensor"]), sec["gate"], sec["require_stable"])
    schedule = sorted((float(t), float(v)) for t, v in sec["schedule"])
    stream = None
    if sec["gate"] == "key_protected":
        session = _bb84_session(cfg["bb84"], streams)
        run.summary["verdict"] = session.verdict
        cmds = seal_commands(schedule, OneTimePad(session.alice_key.bits))
        cmds = [_corrupt(c) if i in set(sec["corrupt_commands"]) else c for i, c in enumerate(cmds)]
        if session.verdict == "compromised":
            cmds = [Command(c.time, c.setpoint, None) for c in cmds]
        schedule = cmds
        stream = OneTimePad(session.bob_key.bits)
    elif sec["gate"] == "entanglement_triggered":
        stream = []
        for on, off in sorted(sec["trigger_intervals"]):
            stream += [TriggerEvent(float(on), True), TriggerEvent(float(off), False)]
    glog = quantum_gated_run(loop, stream, schedule, sec["duration"], sec["dt"])
    run.table("timeseries", glog.COLUMNS).rows.extend(glog.rows())
    run.table("coefficients", ["poly", "power", "coeff"]).rows.extend(
        [r["poly"], r["power"], r["coeff"]] for r in coefficient_listing(loop.transfer_function()))
    run.table("decisions", ["command_time", "setpoint", "decision", "release_time"]).rows.extend(
        [d.command_time, d.setpoint, d.decision, d.release_time] for d in glog.decisions)
    counts = {k: sum(d.decision == k for d in glog.decisions) for k in ("released", "held", "deferred")}
    run.summary.update({"final_output": float(glog.output[-1]), **counts})


def _corrupt(cmd: Command) -> Command:
    frame = bytearray(cmd.frame)
    frame[0] ^= 0xFF
    return Command(cmd.time, cmd.setpoint, bytes(frame))


def _hamiltonians(sec):
    E = np.asarray(sec["energies"], dtype=float)
    n = len(E)
    if sec["h_prime_real"] is None:
        Hp = np.ones((n, n), dtype=complex) - np.eye(n)
    else:
        Hp = np.asarray(sec["h_prime_real"], dtype=float).astype(complex)
    if sec["h_prime_imag"] is not None:
        Hp = Hp + 1j * np.asarray(sec["h_prime_imag"], dtype=float)
    return np.diag(E).astype(complex), Hp


def _run_perturb(cfg, streams, run: RunLog):
    sec = cfg["perturb"]
    H0, Hp = _hamiltonians(sec)
    if Hp.shape != H0.shape:
        raise SizeMismatch(f"H' is {Hp.shape}, H0 is {H0.shape}")
    prob = PerturbationProblem(EigenSystem.from_hamiltonian(H0), Hp, 0.0, sec["initial_index"])
    grid = np.linspace(0.0, sec["t_max_hbar"] * HBAR, sec["n_t"])
    rep = validate_against_ode(prob, grid, sec["lambdas"])
    run.table("lambda_sweep", ["lambda", "max_error", "norm_defect"]).rows.extend(
        [r["lambda"], r["max_error"], r["norm_defect"]] for r in rep.rows())
    run.summary.update({"exponent": rep.exponent, "error": rep.error})


def _next_active(edges, t: float):
    if trigger_active(edges, t):
        return t
    for e in edges:
        if e.time > t and e.active:
            return e.time
    return None


def _run_combined(cfg, streams, run: RunLog):
    """Key exchange, entanglement trigger, command authentication, then formation flight."""
    session = _run_bb84(cfg, streams, run, prefix="bb84_")

    sec, comb = cfg["entangle"], cfg["combined"]
    t0, t1 = sorted(comb["pump_on"])
    rng = streams.stream("entangle", 0)
    pairs = generate_pairs(comb["pair_rate"], t1 - t0, rng, named_state(sec["state"]))
    pairs.times = pairs.times + t0
    alpha, _, beta, _ = sec["angles"]
    det_a, det_b = _detectors(sec)
    ev_a, ev_b = detect(measure_pairs(pairs, alpha, beta, rng), det_a, det_b, rng, t1)
    res = count_coincidences(ev_a, ev_b, CoincidenceConfig(sec["window"], sec["clock_skew"]))
    edges = entanglement_trigger(res.times(ev_a), sec["trigger_min_rate"], sec["trigger_window"])
    run.table("triggers", ["time", "active"]).rows.extend([e.time, e.active] for e in edges)
    run.summary["coincidences"] = int(res.count)
    run.summary["coincidence_counts"] = [int(c) for c in coincidence_counts(ev_a, ev_b, res)]

    schedule = [(float(t), 1.0) for t in sorted(comb["command_times"])]
    cmd_tab = run.table("commands", ["command_time", "decision", "release_time", "reason"])
    release_times = []
    if session.verdict == "compromised":
        for t, _ in schedule:
            cmd_tab.rows.append([t, "held", None, "key compromised"])
    else:
        sealed = seal_commands(schedule, OneTimePad(session.alice_key.bits))
        bob = OneTimePad(session.bob_key.bits)
        for cmd in sealed:
            _, plain = bob.apply(cmd.frame)
            if decode_setpoint(plain) is None:
                cmd_tab.rows.append([cmd.time, "held", None, "authentication failed"])
                continue
            rt = _next_active(edges, cmd.time)
            if rt is None:
                cmd_tab.rows.append([cmd.time, "held", None, "no entanglement trigger"])
            else:
                cmd_tab.rows.append([cmd.time, "released" if rt == cmd.time else "deferred", rt, ""])
                release_times.append(rt)
    engage = min(release_times) if release_times else None
    run.summary["released"] = len(release_times)
    _run_formation(cfg, streams, run, engage_time=engage)


RUNNERS = {
    "bb84": _run_bb84,
    "entangle": _run_entangle,
    "formation": _run_formation,
    "loop": _run_loop,
    "perturb": _run_perturb,
    "combined": _run_combined,
}


def run(cfg: dict) -> RunLog:
    """Execute a validated scenario and return its log."""
    cfg = validate_config(cfg)
    header = {"config": cfg, "config_hash": config_hash(cfg), "seed": cfg["seed"], "version": __version__,
              "kind": cfg["kind"]}
    out = RunLog(header, wall_clock=_dt.datetime.now(_dt.timezone.utc).isoformat())
    log.info("running %s scenario (seed %d, config %s)", cfg["kind"], cfg["seed"], header["config_hash"][:12])
    RUNNERS[cfg["kind"]](cfg, StreamFactory(cfg["seed"]), out)
    return out
