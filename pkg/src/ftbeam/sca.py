"""Successive convex approximation loops for the two-zone downlink.

Each outer iteration freezes the concave minorants at the current iterate,
solves one second-order cone subproblem, and moves to its optimum.  Because
every minorant is tight at the expansion point and every feasible set is an
inner approximation of the true one, the true objective is nondecreasing
along the iterate sequence and every iterate satisfies the original
constraints.

Two loops are provided here:

* :func:`sca_solve` — maximize the sum throughput subject to per-user
  throughput targets.  A target above zero requires a feasibility phase
  (:func:`find_initial_point`) that drives the worst target ratio up to one
  before the sum phase starts.
* :func:`maxmin_solve` — maximize the worst per-user throughput.  No
  feasibility phase is needed because the ratio variable absorbs any start.

Trace records store the *true* objective (recomputed from the iterate, not
from the surrogate), the optimal surrogate value, and the gap between the
surrogate and the true objective at the expansion point.  During the
feasibility phase the objective column holds the worst ratio of achieved
throughput to target, which reaches 1.0 at success.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .conic import OPTIMAL, solve
from .rates import (
    FeasibilityReport,
    TimeSplit,
    align_phases,
    check_feasibility,
    min_throughput,
    per_user_rates,
    sum_throughput,
)
from .scenario import ChannelRealization, SystemConfig
from .subproblem import (
    MIN_RATIO,
    SUM,
    build_subproblem,
    extract_alpha,
    extract_beams,
    original_violations,
)
from .surrogate import TrustRegionError, eval_surrogate, surrogate_coeffs, surrogate_sum

CONVERGED = "converged"
MAX_ITERS = "max-iters"
INFEASIBLE_INIT = "infeasible-init"
SUBPROBLEM_FAILURE = "subproblem-failure"


class InfeasibleInitError(RuntimeError):
    """The feasibility phase stalled below the target ratio."""

    def __init__(self, message, beams, alpha, trace):
        super().__init__(message)
        self.beams = beams
        self.alpha = alpha
        self.trace = trace


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    objective: float
    surrogate_objective: float
    tightness_gap: float
    worst_violation: float
    solver_status: str
    solver_iterations: int


@dataclass(frozen=True)
class Solution:
    """Outcome of one solver run, with per-iteration diagnostics."""

    status: str
    beams: np.ndarray
    alpha: np.ndarray | None
    tau: TimeSplit | None
    per_user_nats: np.ndarray
    sum_nats: float
    min_nats: float
    objective_nats: float
    iterations: int
    trace: list[IterationRecord] = field(default_factory=list)
    init_trace: list[IterationRecord] = field(default_factory=list)
    feasibility: FeasibilityReport | None = None

    @property
    def converged(self) -> bool:
        return self.status == CONVERGED

    @property
    def sum_bits(self) -> float:
        return self.sum_nats / np.log(2.0)

    @property
    def min_bits(self) -> float:
        return self.min_nats / np.log(2.0)

    @property
    def max_trace_violation(self) -> float:
        worst = 0.0
        for rec in self.init_trace + self.trace:
            worst = max(worst, rec.worst_violation)
        return worst


def matched_filter_start(channel: ChannelRealization, config: SystemConfig):
    """Phase-aligned per-user beams with an even two-way time split.

    Each beam points along its own channel so the projection is real and
    positive; the common norm is chosen so the time-shared transmit power
    equals ``init_power_margin`` times the budget, leaving slack for the
    first subproblem.
    """
    K = channel.num_users_per_zone
    theta = np.sqrt(config.init_power_margin * config.pmax_w / K)
    norms = np.linalg.norm(channel.h, axis=2, keepdims=True)
    beams = theta * channel.h / norms
    return beams, np.array([2.0, 2.0])


def _target_ratio(channel, beams, alpha, rbar_nats):
    tau = TimeSplit(1.0 / alpha[0], 1.0 / alpha[1])
    rates = per_user_rates(channel, beams, tau)
    return float(np.min(rates / rbar_nats))


def _surrogate_min_ratio(coeffs, channel, beams, alpha, rbar_nats):
    worst = np.inf
    K = channel.num_users_per_zone
    for z in range(2):
        for k in range(K):
            val = eval_surrogate(coeffs, channel, beams, alpha, z, k)
            worst = min(worst, val / rbar_nats[z, k])
    return worst


def find_initial_point(channel: ChannelRealization, config: SystemConfig):
    """Produce a point satisfying the throughput targets, or raise.

    Starts from :func:`matched_filter_start` and, when the targets are not
    already met, repeatedly maximizes the worst ratio of surrogate
    throughput to target.  The loop stops as soon as the *true* worst ratio
    reaches one, and declares the instance infeasible when the ratio stalls
    (relative progress below ``init_stall_tol`` over ``init_stall_window``
    iterations) or the iteration cap is hit.

    Returns ``(beams, alpha, trace)``.
    """
    beams, alpha = matched_filter_start(channel, config)
    trace: list[IterationRecord] = []
    rbar = config.rbar_nats
    if rbar <= 0.0:
        return beams, alpha, trace
    targets = np.full((2, channel.num_users_per_zone), rbar)

    ratio = _target_ratio(channel, beams, alpha, targets)
    history = [ratio]
    for it in range(1, config.init_max_iters + 1):
        if ratio >= 1.0:
            return beams, alpha, trace
        try:
            coeffs = surrogate_coeffs(channel, beams, alpha, config)
        except TrustRegionError as exc:
            raise InfeasibleInitError(str(exc), beams, alpha, trace) from exc
        problem = build_subproblem(
            coeffs, channel, beams, alpha, config,
            objective_mode=MIN_RATIO, rbar_nats=targets,
        )
        sol = solve(problem, tol=config.solver_tol)
        if sol.status != OPTIMAL:
            if sol.x is None or problem.max_violation(sol.x, scaled=True) > 1e-7:
                raise InfeasibleInitError(
                    f"subproblem ended with status {sol.status!r}",
                    beams, alpha, trace,
                )
        gap = abs(
            _surrogate_min_ratio(coeffs, channel, beams, alpha, targets) - ratio
        )
        beams = align_phases(channel, extract_beams(problem, sol.x))
        alpha = extract_alpha(problem, sol.x)
        ratio = _target_ratio(channel, beams, alpha, targets)
        trace.append(IterationRecord(
            iteration=it,
            objective=ratio,
            surrogate_objective=-sol.objective,
            tightness_gap=gap,
            worst_violation=original_violations(channel, beams, alpha, config)["worst"],
            solver_status=sol.status,
            solver_iterations=sol.iterations,
        ))
        window = config.init_stall_window
        history.append(ratio)
        if len(history) > window:
            base = history[-1 - window]
            if history[-1] - base < config.init_stall_tol * max(abs(base), 1e-12):
                raise InfeasibleInitError(
                    f"target ratio stalled at {ratio:.4f} after {it} iterations",
                    beams, alpha, trace,
                )
    if ratio >= 1.0:
        return beams, alpha, trace
    raise InfeasibleInitError(
        f"target ratio reached only {ratio:.4f} in {config.init_max_iters} iterations",
        beams, alpha, trace,
    )


def _finish(channel, config, status, beams, alpha, trace, init_trace,
            objective_nats, rbar_nats, iterations):
    tau = TimeSplit(1.0 / alpha[0], 1.0 / alpha[1])
    rates = per_user_rates(channel, beams, tau)
    report = check_feasibility(channel, beams, tau, config, rbar_nats=rbar_nats)
    return Solution(
        status=status,
        beams=beams,
        alpha=alpha.copy(),
        tau=tau,
        per_user_nats=rates,
        sum_nats=float(rates.sum()),
        min_nats=float(rates.min()),
        objective_nats=objective_nats,
        iterations=iterations,
        trace=trace,
        init_trace=init_trace,
        feasibility=report,
    )


def _run_loop(channel, config, beams, alpha, objective_mode, targets, true_objective,
              surrogate_at_expansion):
    """Shared ascent loop; returns (status, beams, alpha, phi, trace)."""
    trace: list[IterationRecord] = []
    status = MAX_ITERS
    phi = true_objective(beams, alpha)
    for it in range(1, config.max_iters + 1):
        try:
            coeffs = surrogate_coeffs(channel, beams, alpha, config)
        except TrustRegionError:
            status = SUBPROBLEM_FAILURE
            break
        problem = build_subproblem(
            coeffs, channel, beams, alpha, config,
            objective_mode=objective_mode, rbar_nats=targets,
        )
        sol = solve(problem, tol=config.solver_tol)
        if sol.status != OPTIMAL:
            if sol.x is None or problem.max_violation(sol.x, scaled=True) > 1e-7:
                status = SUBPROBLEM_FAILURE
                break
        gap = abs(surrogate_at_expansion(coeffs, beams, alpha) - phi)
        beams = align_phases(channel, extract_beams(problem, sol.x))
        alpha = extract_alpha(problem, sol.x)
        phi_new = true_objective(beams, alpha)
        trace.append(IterationRecord(
            iteration=it,
            objective=phi_new,
            surrogate_objective=-sol.objective,
            tightness_gap=gap,
            worst_violation=original_violations(channel, beams, alpha, config)["worst"],
            solver_status=sol.status,
            solver_iterations=sol.iterations,
        ))
        if abs(phi_new - phi) <= config.conv_tol * max(1.0, abs(phi_new)):
            phi = phi_new
            status = CONVERGED
            break
        phi = phi_new
    return status, beams, alpha, phi, trace


def sca_solve(channel: ChannelRealization, config: SystemConfig) -> Solution:
    """Maximize sum throughput subject to per-user targets."""
    try:
        beams, alpha, init_trace = find_initial_point(channel, config)
    except InfeasibleInitError as exc:
        return _finish(
            channel, config, INFEASIBLE_INIT, exc.beams, exc.alpha,
            [], exc.trace, objective_nats=float("nan"),
            rbar_nats=config.rbar_nats, iterations=len(exc.trace),
        )

    def true_objective(w, a):
        return sum_throughput(channel, w, TimeSplit(1.0 / a[0], 1.0 / a[1]))

    def expansion(coeffs, w, a):
        return surrogate_sum(coeffs, channel, w, a)

    status, beams, alpha, phi, trace = _run_loop(
        channel, config, beams, alpha, SUM, config.rbar_nats,
        true_objective, expansion,
    )
    return _finish(
        channel, config, status, beams, alpha, trace, init_trace,
        objective_nats=phi, rbar_nats=config.rbar_nats, iterations=len(trace),
    )


def maxmin_solve(channel: ChannelRealization, config: SystemConfig) -> Solution:
    """Maximize the worst per-user throughput (no target constraints)."""
    beams, alpha = matched_filter_start(channel, config)
    targets = np.ones((2, channel.num_users_per_zone))

    def true_objective(w, a):
        return min_throughput(channel, w, TimeSplit(1.0 / a[0], 1.0 / a[1]))

    def expansion(coeffs, w, a):
        return _surrogate_min_ratio(coeffs, channel, w, a, targets)

    status, beams, alpha, phi, trace = _run_loop(
        channel, config, beams, alpha, MIN_RATIO, targets,
        true_objective, expansion,
    )
    return _finish(
        channel, config, status, beams, alpha, trace, init_trace=[],
        objective_nats=phi, rbar_nats=0.0, iterations=len(trace),
    )
