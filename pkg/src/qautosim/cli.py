"""Command-line entry point: ``sim <subcommand> --scenario FILE --seed U64 --out DIR [--trials N]``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import scenario
from .errors import ConfigError, SimulationError
from .rng import MASK64, StreamFactory

EXIT_OK, EXIT_SCHEMA, EXIT_SIM, EXIT_IO = 0, 2, 3, 4
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("qautosim")


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v <= MASK64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def _angles(text: str) -> list[float]:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("expected four angles a,a',b,b'")
    return parts


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sim", description="Seeded quantum/robotics scenario simulator")
    sub = p.add_subparsers(dest="command", required=True)
    for kind in scenario.KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--scenario", "--config", dest="scenario", type=Path, help="JSON scenario file")
        sp.add_argument("--seed", type=_u64, help="overrides the seed in the scenario file")
        sp.add_argument("--out", type=Path, required=True, help="output directory")
        sp.add_argument("--trials", type=int, default=1, help="independent runs with derived seeds")
        if kind == "bb84":
            sp.add_argument("--n", type=int)
            sp.add_argument("--eve-fraction", type=float)
        if kind == "entangle":
            sp.add_argument("--pairs", type=int)
            sp.add_argument("--state", choices=["psi_plus", "phi_plus"])
            sp.add_argument("--angles", type=_angles)
            sp.add_argument("--efficiency", type=float)
            sp.add_argument("--window", type=float)
    return p


OVERRIDES = {
    "bb84": {"n": "n", "eve_fraction": "eve_fraction"},
    "entangle": {"pairs": "pairs", "state": "state", "angles": "angles", "efficiency": "efficiency",
                 "window": "window"},
}


def config_from_args(args) -> dict:
    raw = {"kind": args.command}
    if args.scenario is not None:
        raw = json.loads(json.dumps(scenario.load_scenario(args.scenario)))
        if raw["kind"] != args.command:
            raise ConfigError(f"scenario kind {raw['kind']!r} does not match subcommand {args.command!r}")
    if args.seed is not None:
        raw["seed"] = args.seed
    for key, attr in OVERRIDES.get(args.command, {}).items():
        val = getattr(args, attr, None)
        if val is not None:
            raw.setdefault(args.command, {})[key] = val
    return scenario.validate_config(raw)


STDOUT_TABLE = {"perturb": "lambda_sweep"}


def _echo_table(path: Path, summary: dict | None = None) -> None:
    """Print a CSV table, or the run summary as JSON when the kind has no table."""
    if path.exists():
        sys.stdout.write(path.read_text())
    elif summary is not None:
        sys.stdout.write(json.dumps(scenario.json_safe(summary), sort_keys=True) + "\n")


def _run_one(cfg: dict, out_dir: str) -> dict:
    run = scenario.run(cfg)
    scenario.write_run(run, out_dir)
    return run.summary


def _run_trials(cfg: dict, out: Path, n: int) -> None:
    factory = StreamFactory(cfg["seed"])
    cfgs = [dict(cfg, seed=factory.derive_seed("trial", k)) for k in range(n)]
    dirs = [str(out / f"trial_{k:04d}") for k in range(n)]
    with ProcessPoolExecutor(max_workers=min(n, os.cpu_count() or 1)) as pool:
        summaries = list(pool.map(_run_one, cfgs, dirs))
    cols = sorted({k for s in summaries for k, v in s.items() if not isinstance(v, (list, dict))})
    out.mkdir(parents=True, exist_ok=True)
    with (out / "trials.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "seed", *cols])
        for k, (c, s) in enumerate(zip(cfgs, summaries)):
            w.writerow([k, c["seed"], *(repr(s[col]) if isinstance(s.get(col), float) else s.get(col, "")
                                        for col in cols)])


def main(argv=None) -> int:
    level = os.environ.get("SIM_LOG_LEVEL", "error").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.ERROR), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        if args.trials < 1:
            raise ConfigError("--trials must be at least 1")
        if args.trials == 1:
            summary = _run_one(cfg, str(args.out))
            _echo_table(args.out / f"{STDOUT_TABLE.get(args.command, 'summary')}.csv", summary)
        else:
            _run_trials(cfg, args.out, args.trials)
            _echo_table(args.out / "trials.csv")
        return EXIT_OK
    except ConfigError as exc:
        return _fail(args.out, "config", exc, EXIT_SCHEMA)
    except (SimulationError, ValueError, ArithmeticError) as exc:
        return _fail(args.out, "simulation", exc, EXIT_SIM)
    except OSError as exc:
        return _fail(args.out, "io", exc, EXIT_IO)


def _fail(out: Path, kind: str, exc: Exception, code: int) -> int:
    log.error("%s error (%s): %s", kind, type(exc).__name__, exc)
    try:
        scenario.append_error(out, kind, f"{type(exc).__name__}: {exc}")
    except OSError as io_exc:
        log.error("could not record error in %s: %s", out, io_exc)
    return code


if __name__ == "__main__":
    sys.exit(main())
