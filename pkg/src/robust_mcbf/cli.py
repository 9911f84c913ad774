"""Command-line front end.

Commands::

    robust-mcbf run --config FILE [--out DIR] [--seed N] [--threads N]
    robust-mcbf solve --scenario FILE [--out FILE] [--seed N] [--samples N]
    robust-mcbf verify --solution FILE --scenario FILE [--samples N] [--seed N] [--out FILE]
    robust-mcbf dump-conic --scenario FILE [--out FILE]

Exit codes: 0 success, 2 malformed config or input, 3 I/O error (missing
input, unwritable output), 4 numerical failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import logging
import platform
import sys
import time
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import solver as cs
from .experiments import (aggregate, default_workers, run_experiment, write_aggregate_csv,
                          write_trials_csv)
from .formats import (ConfigError, beamformers_from_dict, config_to_dict, config_to_ini,
                      load_config, load_scenario, read_json, solution_to_dict,
                      write_json_atomic)
from .model import InvalidInputError, sampled_worst_sinr, to_db
from .problems import ExtractionError, build_design, extract_beamformers, solve_problem

logger = logging.getLogger("robust_mcbf")

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_NUMERICAL = 0, 2, 3, 4
VERIFY_TOL_DB = 1e-4


class CliError(Exception):
    def __init__(self, message, code):
        super().__init__(message)
        self.code = code


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _versions() -> dict:
    return {"robust_mcbf": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def _prepare_dir(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
        probe = path / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {path} is not writable: {exc}", EXIT_IO) from exc
    return path


def _load_config(path):
    try:
        return load_config(path)
    except FileNotFoundError as exc:
        raise CliError(f"config file not found: {path}", EXIT_IO) from exc
    except ConfigError as exc:
        raise CliError(f"config error in {path}: {exc}", EXIT_CONFIG) from exc
    except OSError as exc:
        raise CliError(f"cannot read config {path}: {exc}", EXIT_IO) from exc


def _load_scenario(path):
    try:
        return load_scenario(path)
    except FileNotFoundError as exc:
        raise CliError(f"scenario file not found: {path}", EXIT_IO) from exc
    except (ConfigError, InvalidInputError) as exc:
        raise CliError(f"scenario error in {path}: {exc}", EXIT_CONFIG) from exc
    except OSError as exc:
        raise CliError(f"cannot read scenario {path}: {exc}", EXIT_IO) from exc


def cmd_run(args) -> int:
    cfg = _load_config(args.config)
    overrides = {}
    if args.out is not None:
        overrides["output_path"] = str(args.out)
    if args.seed is not None:
        overrides["base_seed"] = args.seed
    if overrides:
        cfg = dataclasses.replace(cfg, **overrides)
    out = _prepare_dir(Path(cfg.output_path))
    workers = args.threads or default_workers()
    started = _now()
    t0 = time.perf_counter()
    records = run_experiment(cfg, workers=workers)
    rows = aggregate(records, cfg.methods)
    elapsed = time.perf_counter() - t0
    files = {"trials": out / "trials.csv", "aggregate": out / "aggregate.csv",
             "config": out / "config.ini", "manifest": out / "manifest.json"}
    try:
        write_trials_csv(records, files["trials"], cfg.record_timing)
        write_aggregate_csv(rows, files["aggregate"])
        files["config"].write_text(config_to_ini(cfg))
        manifest = {
            "config_path": str(args.config),
            "config": config_to_dict(cfg),
            "versions": _versions(),
            "workers": workers,
            "started": started,
            "finished": _now(),
            "wall_time_s": round(elapsed, 3),
            "num_records": len(records),
            "outputs": sorted(p.name for p in files.values()),
        }
        write_json_atomic(files["manifest"], manifest)
    except OSError as exc:
        raise CliError(f"cannot write results to {out}: {exc}", EXIT_IO) from exc
    print(f"{len(records)} trials in {elapsed:.1f} s; results in {out}")
    return EXIT_OK


def _solution_path(args, scenario_path) -> Path:
    if args.out is not None:
        return Path(args.out)
    return Path(scenario_path).with_suffix(".solution.json")


def cmd_solve(args) -> int:
    sc = _load_scenario(args.scenario)
    problem = build_design(sc.method, sc.channels, sc.system)
    sol = solve_problem(problem, sc.system)
    beams = report = err = None
    if sol.is_optimal:
        try:
            beams, report = extract_beamformers(sol, sc.channels, sc.system,
                                                seed=args.seed or 0,
                                                error_samples=args.samples or 1000)
        except ExtractionError as exc:
            err = str(exc)
    record = solution_to_dict(sol, beams, report, err)
    path = _solution_path(args, args.scenario)
    try:
        write_json_atomic(path, record)
    except OSError as exc:
        raise CliError(f"cannot write {path}: {exc}", EXIT_IO) from exc
    line = f"{sol.kind.value}: {sol.status}"
    if sol.is_optimal:
        line += f", power {sol.objective:.9g} W"
    print(f"{line}; written to {path}")
    return EXIT_NUMERICAL if sol.status == "numerical-failure" else EXIT_OK


def cmd_verify(args) -> int:
    sc = _load_scenario(args.scenario)
    try:
        data = read_json(args.solution)
        beams = beamformers_from_dict(data)
    except FileNotFoundError as exc:
        raise CliError(f"solution file not found: {args.solution}", EXIT_IO) from exc
    except (ConfigError, InvalidInputError) as exc:
        raise CliError(f"solution error in {args.solution}: {exc}", EXIT_CONFIG) from exc
    cfg = sc.system
    if beams.vectors.shape != (cfg.num_cells, cfg.users_per_cell, cfg.num_antennas):
        raise CliError("solution and scenario dimensions differ", EXIT_CONFIG)
    samples = args.samples or 100
    seed = args.seed or 0
    users = []
    for i in range(cfg.num_cells):
        for k in range(cfg.users_per_cell):
            worst = sampled_worst_sinr(sc.channels, beams, cfg, (i, k), samples, seed)
            target_db = float(to_db(cfg.sinr_targets[i, k]))
            worst_db = float(to_db(worst))
            users.append({"cell": i, "user": k, "target_db": target_db,
                          "worst_sinr_db": worst_db,
                          "pass": bool(worst_db >= target_db - VERIFY_TOL_DB)})
    report = {"solution": str(args.solution), "scenario": str(args.scenario),
              "samples": samples, "seed": seed, "tolerance_db": VERIFY_TOL_DB,
              "users": users, "all_pass": all(u["pass"] for u in users)}
    for u in users:
        mark = "pass" if u["pass"] else "FAIL"
        print(f"cell {u['cell']} user {u['user']}: worst {u['worst_sinr_db']:.6f} dB, "
              f"target {u['target_db']:.6f} dB  {mark}")
    print("all users pass" if report["all_pass"] else "some users fail")
    if args.out is not None:
        try:
            write_json_atomic(Path(args.out), report)
        except OSError as exc:
            raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    return EXIT_OK


def cmd_dump_conic(args) -> int:
    sc = _load_scenario(args.scenario)
    problem = build_design(sc.method, sc.channels, sc.system)
    try:
        if args.out is None:
            cs.dump_problem(problem, sys.stdout)
        else:
            with open(args.out, "w") as fh:
                cs.dump_problem(problem, fh)
    except OSError as exc:
        raise CliError(f"cannot write {args.out}: {exc}", EXIT_IO) from exc
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="robust-mcbf",
                                description="Worst-case robust multicell beamforming.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a Monte Carlo experiment")
    r.add_argument("--config", required=True)
    r.add_argument("--out", help="output directory (overrides output_path)")
    r.add_argument("--seed", type=int, help="base seed (overrides the config)")
    r.add_argument("--threads", type=int, help="worker processes (default: all cores)")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("solve", help="solve one scenario file")
    s.add_argument("--scenario", required=True)
    s.add_argument("--out", help="solution file (default: <scenario>.solution.json)")
    s.add_argument("--seed", type=int, help="seed for randomized extraction")
    s.add_argument("--samples", type=int, help="error samples used by randomized extraction")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("verify", help="check a solution against sampled errors")
    v.add_argument("--solution", required=True)
    v.add_argument("--scenario", required=True)
    v.add_argument("--samples", type=int, help="error samples per user (default 100)")
    v.add_argument("--seed", type=int)
    v.add_argument("--out", help="write the report as JSON")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("dump-conic", help="write the standard-form conic problem")
    d.add_argument("--scenario", required=True)
    d.add_argument("--out")
    d.set_defaults(func=cmd_dump_conic)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    for name in ("threads", "samples"):
        val = getattr(args, name, None)
        if val is not None and val < 1:
            print(f"error: --{name} must be >= 1", file=sys.stderr)
            return EXIT_CONFIG
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
