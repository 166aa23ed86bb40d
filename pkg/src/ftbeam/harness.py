"""Monte Carlo experiment driver: sweeps, seeding, records, and summaries.

An experiment is a grid of (sweep point x mc run) cells. Every cell gets one
channel realization, drawn from a child seed derived deterministically from
(base_seed, run_id), and every requested scheme solves that same realization,
so cross-scheme comparisons are paired. Records are sorted by (run_id, scheme
order) before writing, which makes the output independent of the execution
order; rerunning with the same config and base seed reproduces the output
files byte for byte. Wall-clock time is kept on the in-memory records for
eyeballing but never written to disk.
"""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import yaml

from .baselines import UnsupportedSchemeError, get_solver, SCHEMES
from .sca import CONVERGED
from .scenario import SystemConfig, sample_scenario

UNSUPPORTED_SCHEME = "unsupported-scheme"

# default sweep grids: budget in dBm for the power sweep, per-user target in
# bit/s/Hz for the QoS sweep (run at the config's own pmax, 30 dBm by default)
PMAX_GRID_DBM = (10.0, 14.0, 18.0, 22.0, 26.0, 30.0, 34.0, 38.0)
RBAR_GRID_BITS = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2)

SWEEP_AXES = ("none", "pmax_dbm", "rbar_bits")


class ConfigError(ValueError):
    """Malformed experiment configuration (bad key, value, or file)."""


@dataclass(frozen=True)
class ExperimentConfig:
    """A full experiment: system parameters, schemes, sweep, and output."""

    system: SystemConfig = dataclasses.field(default_factory=SystemConfig)
    schemes: tuple[str, ...] = ("ft",)
    sweep: str = "none"                      # axis: none | pmax_dbm | rbar_bits
    sweep_values: tuple[float, ...] = ()     # strictly increasing grid
    mc_runs: int = 100                       # channel realizations per sweep point
    base_seed: int = 0                       # root of the per-run seed derivation
    out_path: str | None = None              # record file; None writes nothing
    out_format: str = "csv"                  # csv | jsonl

    def __post_init__(self):
        if not self.schemes:
            raise ConfigError("schemes must be a nonempty list")
        for name in self.schemes:
            if name not in SCHEMES:
                known = ", ".join(sorted(SCHEMES))
                raise ConfigError(f"unknown scheme {name!r}; known schemes: {known}")
        if self.sweep not in SWEEP_AXES:
            raise ConfigError(f"sweep must be one of {SWEEP_AXES}, got {self.sweep!r}")
        if self.sweep == "none":
            if self.sweep_values:
                raise ConfigError("sweep_values must be empty when sweep is 'none'")
        else:
            if not self.sweep_values:
                raise ConfigError(f"sweep over {self.sweep} needs sweep_values")
            vals = self.sweep_values
            if any(b <= a for a, b in zip(vals, vals[1:])):
                raise ConfigError("sweep_values must be strictly increasing")
        if self.mc_runs < 1:
            raise ConfigError("mc_runs must be >= 1")
        if self.base_seed < 0:
            raise ConfigError("base_seed must be >= 0")
        if self.out_format not in ("csv", "jsonl"):
            raise ConfigError(f"out_format must be csv or jsonl, got {self.out_format!r}")

    def point_system(self, value: float | None) -> SystemConfig:
        """System config at one sweep point (the base config when value is None)."""
        if value is None:
            return self.system
        if self.sweep == "pmax_dbm":
            return dataclasses.replace(self.system, pmax_dbm=float(value))
        return dataclasses.replace(self.system, qos_rbar_bits=float(value))


@dataclass(frozen=True)
class RunRecord:
    """One scheme's outcome on one channel realization."""

    run_id: int
    seed: int
    scheme: str
    pmax_dbm: float
    rbar_bits: float
    sum_throughput_bits: float
    min_throughput_bits: float
    tau1: float | None
    tau2: float | None
    iterations: int
    status: str
    worst_violation: float  # max original-constraint violation over all iterates
    wall_time: float        # seconds; in-memory only, never written


# fixed, documented column order for both output formats
COLUMNS = ("run_id", "seed", "scheme", "pmax_dbm", "rbar_bits",
           "sum_throughput_bits", "min_throughput_bits", "tau1", "tau2",
           "iterations", "status", "worst_violation")


def child_seed(base_seed: int, run_id: int) -> int:
    """Deterministic per-run seed; independent streams across run ids."""
    ss = np.random.SeedSequence([int(base_seed), int(run_id)])
    return int(ss.generate_state(1, np.uint64)[0])


def _solve_cell(config: ExperimentConfig, run_id: int, value: float | None):
    """All schemes on the realization of one (sweep point, mc run) cell."""
    system = config.point_system(value)
    seed = child_seed(config.base_seed, run_id)
    channel = sample_scenario(seed, system)
    records = []
    for scheme in config.schemes:
        t0 = time.perf_counter()
        try:
            solution = get_solver(scheme)(channel, system)
        except UnsupportedSchemeError:
            records.append(RunRecord(
                run_id=run_id, seed=seed, scheme=scheme,
                pmax_dbm=system.pmax_dbm, rbar_bits=system.qos_rbar_bits,
                sum_throughput_bits=math.nan, min_throughput_bits=math.nan,
                tau1=None, tau2=None, iterations=0, status=UNSUPPORTED_SCHEME,
                worst_violation=math.nan,
                wall_time=time.perf_counter() - t0))
            continue
        tau = solution.tau
        records.append(RunRecord(
            run_id=run_id, seed=seed, scheme=scheme,
            pmax_dbm=system.pmax_dbm, rbar_bits=system.qos_rbar_bits,
            sum_throughput_bits=float(solution.sum_bits),
            min_throughput_bits=float(solution.min_bits),
            tau1=None if tau is None else float(tau.tau1),
            tau2=None if tau is None else float(tau.tau2),
            iterations=solution.iterations, status=solution.status,
            worst_violation=float(solution.max_trace_violation),
            wall_time=time.perf_counter() - t0))
    return records


def run_experiment(config: ExperimentConfig, threads: int = 1) -> list[RunRecord]:
    """Solve every (sweep point x mc run x scheme) cell and return the records.

    Records come back sorted by (run_id, scheme order), so the result does not
    depend on `threads` or on completion order. Schemes sharing a run_id were
    solved on the same channel realization.
    """
    points = list(config.sweep_values) if config.sweep != "none" else [None]
    cells = [(pi * config.mc_runs + mi, value)
             for pi, value in enumerate(points)
             for mi in range(config.mc_runs)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            batches = list(pool.map(
                lambda cell: _solve_cell(config, *cell), cells))
    else:
        batches = [_solve_cell(config, run_id, value) for run_id, value in cells]
    order = {name: i for i, name in enumerate(config.schemes)}
    records = [rec for batch in batches for rec in batch]
    records.sort(key=lambda r: (r.run_id, order[r.scheme]))
    return records


def _cell_text(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return "%.12g" % value
    return str(value)


def write_csv(records, path) -> None:
    """Write records in the fixed COLUMNS order; floats as %.12g, None empty."""
    with open(path, "w", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(COLUMNS)
        for rec in records:
            writer.writerow([_cell_text(getattr(rec, c)) for c in COLUMNS])


def write_jsonl(records, path) -> None:
    """One JSON object per record in COLUMNS order; NaN becomes null."""
    with open(path, "w", newline="\n") as f:
        for rec in records:
            row = {}
            for c in COLUMNS:
                v = getattr(rec, c)
                if isinstance(v, float) and math.isnan(v):
                    v = None
                row[c] = v
            f.write(json.dumps(row) + "\n")


def write_records(records, path, out_format: str) -> None:
    if out_format == "csv":
        write_csv(records, path)
    elif out_format == "jsonl":
        write_jsonl(records, path)
    else:
        raise ConfigError(f"unknown output format {out_format!r}")


def summarize(records) -> list[dict]:
    """Aggregate per (scheme, sweep point), ordered by (scheme, point).

    feasibility_rate counts converged runs over all runs; throughput means and
    the iteration median are taken over the converged runs only, and are NaN
    for groups where nothing converged.  max_violation is the worst
    original-constraint violation over every iterate of every run in the
    group (converged or not), NaN when no run was solved at all.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to summarize")
    groups: dict[tuple, list[RunRecord]] = {}
    for rec in records:
        groups.setdefault((rec.scheme, rec.pmax_dbm, rec.rbar_bits), []).append(rec)
    rows = []
    for key in sorted(groups):
        scheme, pmax_dbm, rbar_bits = key
        batch = groups[key]
        good = [r for r in batch if r.status == CONVERGED]
        solved = [r.worst_violation for r in batch
                  if not math.isnan(r.worst_violation)]
        rows.append({
            "scheme": scheme,
            "pmax_dbm": pmax_dbm,
            "rbar_bits": rbar_bits,
            "runs": len(batch),
            "feasibility_rate": len(good) / len(batch),
            "mean_sum_bits": float(np.mean([r.sum_throughput_bits for r in good]))
                             if good else math.nan,
            "mean_min_bits": float(np.mean([r.min_throughput_bits for r in good]))
                             if good else math.nan,
            "median_iterations": float(np.median([r.iterations for r in good]))
                                 if good else math.nan,
            "max_violation": max(solved) if solved else math.nan,
        })
    return rows


def format_summary(rows) -> str:
    """Fixed-width text table of summarize() rows."""
    header = ("scheme", "pmax_dbm", "rbar_bits", "runs", "feas_rate",
              "mean_sum_bits", "mean_min_bits", "med_iters", "max_viol")
    keys = ("scheme", "pmax_dbm", "rbar_bits", "runs", "feasibility_rate",
            "mean_sum_bits", "mean_min_bits", "median_iterations",
            "max_violation")
    table = [header]
    for row in rows:
        cells = []
        for key in keys:
            v = row[key]
            cells.append("%.4g" % v if isinstance(v, float) else str(v))
        table.append(tuple(cells))
    widths = [max(len(r[i]) for r in table) for i in range(len(header))]
    lines = ["  ".join(cell.rjust(w) for cell, w in zip(row, widths))
             for row in table]
    return "\n".join(lines)


# --- flat key/value config files -------------------------------------------

_SYSTEM_KEYS = {f.name for f in dataclasses.fields(SystemConfig)}
_EXPERIMENT_KEYS = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"system"}


def experiment_from_mapping(raw: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from one flat mapping.

    System keys and experiment keys share the namespace; unknown keys are
    rejected by name so typos fail loudly instead of silently using defaults.
    """
    if not isinstance(raw, dict):
        raise ConfigError("config must be a flat key/value mapping")
    sys_kwargs, exp_kwargs = {}, {}
    for key, value in raw.items():
        if key in _SYSTEM_KEYS:
            sys_kwargs[key] = value
        elif key in _EXPERIMENT_KEYS:
            if key in ("schemes", "sweep_values"):
                if not isinstance(value, (list, tuple)):
                    raise ConfigError(f"{key} must be a list")
                value = tuple(value)
            exp_kwargs[key] = value
        else:
            known = ", ".join(sorted(_SYSTEM_KEYS | _EXPERIMENT_KEYS))
            raise ConfigError(f"unknown config key {key!r}; known keys: {known}")
    try:
        system = SystemConfig(**sys_kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad system parameters: {exc}") from exc
    return ExperimentConfig(system=system, **exp_kwargs)


def load_config(path) -> ExperimentConfig:
    """Parse a flat YAML config file into an ExperimentConfig."""
    with open(path) as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if raw is None:
        raw = {}
    return experiment_from_mapping(raw)
