"""Acceptance gate: nine numbered end-to-end checks with pinned tolerances.

Each check prints one ``acceptance N: PASS/FAIL`` line (visible under
``pytest -rA`` or ``-s``) and asserts the same condition, so the printed
checklist and the test outcomes cannot disagree.  The heavy experiment
batches are module-scoped fixtures shared between checks, and every batch
deposits its worst original-constraint violation into a shared ledger that
check 8 reads at the end; check 9 reruns a full experiment to prove the
records are reproducible byte for byte.

Budgets (single CPU): the minorant chain runs in seconds; the QoS batch is
capped at ten minutes and typically needs two; the two sweep experiments
plus the determinism rerun dominate and put the whole module around half an
hour.  Deselect with ``-m "not acceptance"`` when iterating elsewhere.
"""

import math
import time

import numpy as np
import pytest

from ftbeam.harness import (
    PMAX_GRID_DBM,
    RBAR_GRID_BITS,
    ExperimentConfig,
    run_experiment,
    summarize,
    write_csv,
)
from ftbeam.sca import CONVERGED, maxmin_solve, sca_solve
from ftbeam.scenario import ChannelRealization, SystemConfig, sample_scenario
from ftbeam.surrogate import minorant_coeffs

from oracles import ft_single_user_grid

pytestmark = pytest.mark.acceptance

BASE_SEED = 0

# worst original-constraint violation per experiment batch; check 8 reads it
VIOLATIONS: dict[str, float] = {}


def _report(num: int, ok: bool, detail: str) -> None:
    line = f"acceptance {num}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(line, flush=True)
    assert ok, line


# --------------------------------------------------------------------------
# shared experiment batches
# --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def qos_batch():
    """50 solver runs on the reference system (4 users/zone, 5 antennas,
    30 dBm, 1 bit/s/Hz target), with wall time."""
    cfg = SystemConfig()
    t0 = time.monotonic()
    sols = [sca_solve(sample_scenario(seed, cfg), cfg) for seed in range(50)]
    elapsed = time.monotonic() - t0
    VIOLATIONS["qos-batch"] = max(s.max_trace_violation for s in sols)
    return sols, elapsed


@pytest.fixture(scope="module")
def oracle_batch():
    """20 single-user-per-zone instances solved both ways: the solver and a
    brute-force (slot, power-split) grid at step 1e-3 on matched filters."""
    t0 = time.monotonic()
    # without a rate floor the sum objective may abandon the weaker zone
    # (tau -> 0 geometrically), which converges but slowly; the raised cap
    # is budget for those trajectories, not a tolerance change
    cfg = SystemConfig(num_users_per_zone=1, num_antennas=2,
                       qos_rbar_bits=0.0, max_iters=150)
    pairs = []
    for seed in range(20):
        ch = sample_scenario(seed, cfg)
        sol = sca_solve(ch, cfg)
        pairs.append((sol, ft_single_user_grid(ch, cfg, step=1e-3)))
    elapsed = time.monotonic() - t0
    VIOLATIONS["oracle-batch"] = max(s.max_trace_violation for s, _ in pairs)
    return pairs, elapsed


@pytest.fixture(scope="module")
def power_sweep():
    """50 paired runs per transmit-power point at the 1 bit/s/Hz target.

    The sweep runs over a 1 MHz channelization so the whole power grid sits
    inside the radio link budget: over the default 10 MHz band the noise
    floor is -104 dBm, while 10 dBm through ~117 dB of cell-edge path loss
    delivers less than that even with the entire budget beamed at a single
    user, so the bottom of the grid would be physically infeasible for
    every scheme (rates depend on transmit power only through the ratio
    power/noise, so narrowing the band is equivalent to shifting the grid
    up).  The iteration caps are raised because instances pinned to the
    rate floor can ride long boundary-following trajectories; the caps are
    budget, not tolerance, and every rescued run still satisfies the
    per-iteration checks.
    """
    cfg = ExperimentConfig(
        system=SystemConfig(bandwidth_hz=1e6, max_iters=150,
                            init_max_iters=150),
        schemes=("ft", "conventional-dl"),
        sweep="pmax_dbm", sweep_values=PMAX_GRID_DBM,
        mc_runs=50, base_seed=BASE_SEED)
    records = run_experiment(cfg)
    VIOLATIONS["power-sweep"] = float(np.nanmax(
        [r.worst_violation for r in records]))
    return cfg, records


@pytest.fixture(scope="module")
def qos_sweep():
    """100 paired runs per QoS-target point at 30 dBm."""
    cfg = ExperimentConfig(
        system=SystemConfig(),
        schemes=("ft", "conventional-dl"),
        sweep="rbar_bits", sweep_values=RBAR_GRID_BITS,
        mc_runs=100, base_seed=BASE_SEED)
    records = run_experiment(cfg)
    VIOLATIONS["qos-sweep"] = float(np.nanmax(
        [r.worst_violation for r in records]))
    return cfg, records


def _symmetric_two_user_instance(seed: int):
    """One user per zone with identical channel vectors: a fully symmetric
    instance whose balanced optimum must treat the two users alike."""
    rng = np.random.default_rng(seed)
    vec = 1e-5 * (rng.standard_normal(3) + 1j * rng.standard_normal(3))
    h = np.stack([vec[None, :], vec[None, :]])
    ch = ChannelRealization(h=h, distances_km=np.full((2, 1), 0.1),
                            sigma2=3.98e-14)
    cfg = SystemConfig(num_users_per_zone=1, num_antennas=3, qos_rbar_bits=0.0)
    return ch, cfg


@pytest.fixture(scope="module")
def maxmin_batch():
    """50 balanced-throughput runs on the reference system plus 5 symmetric
    two-user instances."""
    cfg = SystemConfig()
    sols = [maxmin_solve(sample_scenario(seed, cfg), cfg) for seed in range(50)]
    sym = []
    for seed in range(5):
        ch, scfg = _symmetric_two_user_instance(100 + seed)
        sym.append(maxmin_solve(ch, scfg))
    VIOLATIONS["maxmin-batch"] = max(
        s.max_trace_violation for s in sols + sym)
    return sols, sym


# --------------------------------------------------------------------------
# the nine checks
# --------------------------------------------------------------------------

def test_acceptance_1_minorant_chain_bounds():
    # the two-stage lower bound ln(1+x^2/y)/t >= affine-in-(y/x^2, t) stage
    # >= cone-ready stage must hold on random positive tuples inside the
    # trust region 2x - xb > 0, and all three must coincide at the expansion
    # point, each to 1e-9; the whole sweep must take under five seconds.
    t0 = time.monotonic()
    rng = np.random.default_rng(12345)
    n = 10_000
    xb = 10.0 ** rng.uniform(-2, 2, size=n)
    yb = 10.0 ** rng.uniform(-2, 2, size=n)
    tb = 10.0 ** rng.uniform(-2, 2, size=n)
    x = xb * (0.5 + 10.0 ** rng.uniform(-3, 1, size=n))   # keeps 2x - xb > 0
    y = 10.0 ** rng.uniform(-2, 2, size=n)
    t = 10.0 ** rng.uniform(-2, 2, size=n)

    offset, iw, tw = minorant_coeffs(xb**2 / yb, tb)
    f = np.log1p(x**2 / y) / t
    mid = offset - iw * y / x**2 - tw * t
    low = offset - iw * y / (xb * (2.0 * x - xb)) - tw * t
    chain_violation = max(float(np.max(mid - f)), float(np.max(low - mid)))

    f0 = np.log1p(xb**2 / yb) / tb
    mid0 = offset - iw * yb / xb**2 - tw * tb
    low0 = offset - iw * yb / (xb * (2.0 * xb - xb)) - tw * tb
    coincide = max(float(np.max(np.abs(f0 - mid0))),
                   float(np.max(np.abs(mid0 - low0))))
    elapsed = time.monotonic() - t0

    ok = chain_violation <= 1e-9 and coincide <= 1e-9 and elapsed < 5.0
    _report(1, ok, f"chain violation {chain_violation:.2e}, expansion "
                   f"mismatch {coincide:.2e} over {n} tuples in {elapsed:.2f}s")


def test_acceptance_2_tightness_and_ascent(qos_batch):
    # at every iteration the surrogate equals the true objective at the
    # expansion point to 1e-8, and the true objective never steps down by
    # more than 1e-6; the 50-run batch must finish inside ten minutes.
    sols, elapsed = qos_batch
    converged = sum(s.status == CONVERGED for s in sols)
    worst_gap = max(rec.tightness_gap for s in sols for rec in s.trace)
    worst_drop = 0.0
    for s in sols:
        vals = [rec.objective for rec in s.trace]
        for a, b in zip(vals, vals[1:]):
            worst_drop = max(worst_drop, a - b)
    ok = (converged == len(sols) and worst_gap <= 1e-8
          and worst_drop <= 1e-6 and elapsed < 600.0)
    _report(2, ok, f"{converged}/{len(sols)} converged, max tightness gap "
                   f"{worst_gap:.2e}, max objective drop {worst_drop:.2e} "
                   f"in {elapsed:.0f}s")


def test_acceptance_3_iteration_count(qos_batch):
    # the 1e-4 relative stopping rule is reached in few steps: the median
    # over the same 50 runs must be at most 20.
    sols, _ = qos_batch
    med = float(np.median([s.iterations for s in sols]))
    ok = med <= 20.0
    _report(3, ok, f"median iterations {med:g} "
                   f"(max {max(s.iterations for s in sols)})")


def test_acceptance_4_grid_oracle_equivalence(oracle_batch):
    # with one user per zone the problem has a brute-force answer: matched
    # filters plus an exhaustive (slot, power-split) grid at step 1e-3.  On
    # 20 random instances the solver must land within 2%, in under two
    # minutes.
    pairs, elapsed = oracle_batch
    all_conv = all(sol.status == CONVERGED for sol, _ in pairs)
    worst_rel = max(abs(sol.sum_nats - ref) / ref for sol, ref in pairs)
    ok = all_conv and worst_rel <= 0.02 and elapsed < 120.0
    _report(4, ok, f"max relative gap to grid oracle {worst_rel:.4%} "
                   f"over 20 instances in {elapsed:.0f}s"
                   + ("" if all_conv else " (nonconverged runs!)"))


def test_acceptance_5_feasibility_dominance(power_sweep):
    # sweeping transmit power at the 1 bit/s/Hz target: the fractional-time
    # scheme must converge on every run at every point, while the
    # conventional downlink must have a strictly lower feasibility rate at
    # the lowest power point.
    _, records = power_sweep
    rows = summarize(records)
    ft_rates = {r["pmax_dbm"]: r["feasibility_rate"]
                for r in rows if r["scheme"] == "ft"}
    dl_rates = {r["pmax_dbm"]: r["feasibility_rate"]
                for r in rows if r["scheme"] == "conventional-dl"}
    lowest = min(PMAX_GRID_DBM)
    ok = (all(ft_rates[p] == 1.0 for p in PMAX_GRID_DBM)
          and dl_rates[lowest] < 1.0)
    _report(5, ok, f"ft feasibility {min(ft_rates.values()):.2f} at every "
                   f"point, conventional {dl_rates[lowest]:.2f} at "
                   f"{lowest:g} dBm")


def test_acceptance_6_qos_robustness_trend(qos_sweep):
    # sweeping the per-user target at 30 dBm: the fractional-time mean sum
    # throughput gives up less than 15% from the loosest to the tightest
    # target, while its lead over the conventional downlink widens at every
    # step (conventional means cover its converged runs).
    _, records = qos_sweep
    rows = summarize(records)
    ft_mean = {r["rbar_bits"]: r["mean_sum_bits"]
               for r in rows if r["scheme"] == "ft"}
    dl_mean = {r["rbar_bits"]: r["mean_sum_bits"]
               for r in rows if r["scheme"] == "conventional-dl"}
    drop = 1.0 - ft_mean[RBAR_GRID_BITS[-1]] / ft_mean[RBAR_GRID_BITS[0]]
    gaps = [ft_mean[v] - dl_mean[v] for v in RBAR_GRID_BITS]
    widening = all(b > a for a, b in zip(gaps, gaps[1:]))
    ok = drop < 0.15 and widening and all(math.isfinite(g) for g in gaps)
    _report(6, ok, f"ft mean drop {drop:.2%}, lead per target point "
                   f"{['%.2f' % g for g in gaps]}")


def test_acceptance_7_balanced_throughput(maxmin_batch):
    # the balanced solver's worst-user trace never steps down by more than
    # 1e-6, its final point is feasible at 1e-6, and on fully symmetric
    # two-user instances the two optimized throughputs agree within 1%.
    sols, sym = maxmin_batch
    converged = sum(s.status == CONVERGED for s in sols + sym)
    worst_drop = 0.0
    for s in sols:
        vals = [rec.objective for rec in s.trace]
        for a, b in zip(vals, vals[1:]):
            worst_drop = max(worst_drop, a - b)
    worst_feas = max(s.feasibility.worst_violation for s in sols)
    worst_split = 0.0
    for s in sym:
        if s.status != CONVERGED:
            continue
        r = s.per_user_nats
        worst_split = max(worst_split,
                          abs(r[0, 0] - r[1, 0]) / max(r[0, 0], r[1, 0]))
    ok = (converged == len(sols) + len(sym) and worst_drop <= 1e-6
          and worst_feas <= 1e-6 and worst_split <= 0.01)
    _report(7, ok, f"{converged}/{len(sols) + len(sym)} converged, max trace "
                   f"drop {worst_drop:.2e}, final feasibility {worst_feas:.2e}, "
                   f"symmetric split {worst_split:.4%}")


def test_acceptance_8_original_constraints_everywhere(
        qos_batch, oracle_batch, power_sweep, qos_sweep, maxmin_batch):
    # every iterate of every run in checks 2-7 came from a subproblem
    # solution; none of them may violate the true sign, time-budget, or
    # power-budget constraints beyond 1e-6 - the inner convex power bound
    # must never step outside the original feasible set.
    expected = {"qos-batch", "oracle-batch", "power-sweep", "qos-sweep",
                "maxmin-batch"}
    assert expected <= set(VIOLATIONS), (
        f"missing violation sources: {expected - set(VIOLATIONS)}")
    worst = max(VIOLATIONS.values())
    ok = worst <= 1e-6
    detail = ", ".join(f"{k} {v:.2e}" for k, v in sorted(VIOLATIONS.items()))
    _report(8, ok, detail)


def test_acceptance_9_byte_identical_rerun(power_sweep, tmp_path):
    # recomputing the full power-sweep experiment from the same base seed
    # must reproduce the CSV records byte for byte.
    cfg, records = power_sweep
    again = run_experiment(cfg)
    first, second = tmp_path / "first.csv", tmp_path / "second.csv"
    write_csv(records, first)
    write_csv(again, second)
    ok = first.read_bytes() == second.read_bytes()
    _report(9, ok, f"{len(again)} records, "
                   f"{len(first.read_bytes())} bytes, rerun identical: {ok}")
