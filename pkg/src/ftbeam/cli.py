"""Command-line interface: experiments, single solves, and subproblem dumps.

`ftbeam run` drives a Monte Carlo experiment from a flat YAML config file and
prints the per-(scheme, sweep point) summary table; `solve`, `maxmin`, and
`baseline` solve one realization and print the solution; `dump-subproblem`
writes one iteration's cone program as JSON for external cross-checking.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

import numpy as np

from .baselines import (UnsupportedSchemeError, conventional_dl_solve,
                        conventional_start, get_solver)
from .harness import (ConfigError, ExperimentConfig, format_summary,
                      load_config, run_experiment, summarize, write_records)
from .sca import maxmin_solve, matched_filter_start, sca_solve
from .scenario import LN2, SystemConfig, sample_scenario
from .subproblem import build_conventional_subproblem, build_subproblem
from .surrogate import surrogate_coeffs


def describe(solution) -> str:
    """Human-readable block for one Solution."""
    lines = [
        f"status     : {solution.status}",
        f"iterations : {solution.iterations}",
        f"sum rate   : {solution.sum_bits:.6f} bit/s/Hz",
        f"min rate   : {solution.min_bits:.6f} bit/s/Hz",
    ]
    if solution.tau is not None:
        lines.append(f"time split : tau1={solution.tau.tau1:.6f} "
                     f"tau2={solution.tau.tau2:.6f}")
    rates = np.array2string(solution.per_user_nats / LN2, precision=4,
                            suppress_small=True)
    lines.append(f"per-user rates (bit/s/Hz) by [zone, user]:\n{rates}")
    rep = solution.feasibility
    lines.append(f"feasible   : {rep.feasible} "
                 f"(worst violation {rep.worst_violation:.2e})")
    return "\n".join(lines)


def _system_from_args(args) -> SystemConfig:
    if args.config:
        return load_config(args.config).system
    return SystemConfig()


def _cmd_run(args) -> int:
    config = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["base_seed"] = args.seed
    if args.scheme:
        updates["schemes"] = tuple(args.scheme)
    if args.out:
        updates["out_path"] = args.out
    if args.format:
        updates["out_format"] = args.format
    if updates:
        config = dataclasses.replace(config, **updates)
    records = run_experiment(config, threads=args.threads)
    if config.out_path:
        write_records(records, config.out_path, config.out_format)
        print(f"wrote {len(records)} records to {config.out_path}", file=sys.stderr)
    print(format_summary(summarize(records)))
    return 0


def _solve_single(args, solver) -> int:
    system = _system_from_args(args)
    channel = sample_scenario(args.seed, system)
    print(describe(solver(channel, system)))
    return 0


def _cmd_solve(args) -> int:
    return _solve_single(args, sca_solve)


def _cmd_maxmin(args) -> int:
    return _solve_single(args, maxmin_solve)


def _cmd_baseline(args) -> int:
    return _solve_single(args, get_solver(args.scheme))


def _cmd_dump_subproblem(args) -> int:
    system = _system_from_args(args)
    channel = sample_scenario(args.seed, system)
    if args.scheme == "ft":
        beams, alpha = matched_filter_start(channel, system)
        coeffs = surrogate_coeffs(channel, beams, alpha, system)
        problem = build_subproblem(coeffs, channel, beams, alpha, system)
    elif args.scheme == "conventional-dl":
        beams = conventional_start(channel, system)
        coeffs = surrogate_coeffs(channel, beams, (1.0, 1.0), system,
                                  mode="conventional")
        problem = build_conventional_subproblem(coeffs, channel, beams, system)
    else:
        raise UnsupportedSchemeError(
            f"dump-subproblem supports 'ft' and 'conventional-dl', not {args.scheme!r}")
    payload = {
        "num_vars": problem.num_vars,
        "variables": {name: list(span) for name, span in problem.var_names.items()},
        "objective": problem.objective.tolist(),
        "objective_offset": problem.offset,
        "num_nonneg_rows": problem.num_nonneg,
        "cones": [{"kind": kind, "rows": size} for kind, size in problem.cones],
        "rows": problem.rows.tolist(),
        "rhs": problem.rhs.tolist(),
        "stats": {k: v for k, v in problem.stats.items() if k != "shape"}
                 | {"shape": list(problem.stats["shape"])},
    }
    payload["stats"]["q_users"] = [list(u) for u in payload["stats"]["q_users"]]
    with open(args.out, "w") as f:
        json.dump(payload, f, indent=1)
        f.write("\n")
    print(f"wrote {problem.num_nonneg} nonneg rows and "
          f"{len(problem.cones)} cones to {args.out}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ftbeam",
        description="Fractional-time two-zone downlink beamforming: "
                    "solvers and Monte Carlo benchmarks.")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment from a config file")
    run.add_argument("--config", required=True, help="flat YAML config file")
    run.add_argument("--seed", type=int, default=None, help="override base_seed")
    run.add_argument("--scheme", action="append", default=None,
                     help="override the scheme list (repeatable)")
    run.add_argument("--out", default=None, help="override the record output path")
    run.add_argument("--format", choices=("csv", "jsonl"), default=None,
                     help="override the record output format")
    run.add_argument("--threads", type=int, default=1,
                     help="worker threads (records are identical at any count)")
    run.set_defaults(func=_cmd_run)

    common = dict(config=(("--config",), {"default": None, "help": "flat YAML config file"}),
                  seed=(("--seed",), {"type": int, "default": 0,
                                      "help": "channel realization seed"}))

    def add_single(name, help_text, func):
        p = sub.add_parser(name, help=help_text)
        for flags, kwargs in common.values():
            p.add_argument(*flags, **kwargs)
        p.set_defaults(func=func)
        return p

    add_single("solve", "fractional-time sum-throughput solve on one realization",
               _cmd_solve)
    add_single("maxmin", "fractional-time max-min solve on one realization",
               _cmd_maxmin)
    baseline = add_single("baseline", "baseline scheme solve on one realization",
                          _cmd_baseline)
    baseline.add_argument("--scheme", default="conventional-dl",
                          help="scheme name from the registry")

    dump = add_single("dump-subproblem",
                      "write the first-iteration cone program as JSON",
                      _cmd_dump_subproblem)
    dump.add_argument("--scheme", choices=("ft", "conventional-dl"), default="ft",
                      help="which builder to dump")
    dump.add_argument("--out", required=True, help="output JSON path")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UnsupportedSchemeError as exc:
        print(f"unsupported scheme: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
