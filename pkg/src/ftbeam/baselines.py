"""Conventional downlink baseline and the scheme registry.

The baseline serves all users in every symbol, so there is no time split:
each user sees interference from all other beams and the power budget caps
the plain sum of beam powers.  The ascent loop mirrors the fractional-time
one with the time variables stripped out.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .conic import OPTIMAL, solve
from .rates import align_phases, check_feasibility, per_user_rates
from .sca import (
    CONVERGED,
    INFEASIBLE_INIT,
    MAX_ITERS,
    SUBPROBLEM_FAILURE,
    InfeasibleInitError,
    IterationRecord,
    Solution,
    maxmin_solve,
    sca_solve,
)
from .scenario import ChannelRealization, SystemConfig
from .subproblem import (
    MIN_RATIO,
    SUM,
    build_conventional_subproblem,
    conventional_violations,
    extract_beams,
)
from .surrogate import TrustRegionError, eval_surrogate, surrogate_coeffs

_ONES = (1.0, 1.0)


def conventional_start(channel: ChannelRealization, config: SystemConfig):
    """Phase-aligned beams whose total power sits at the configured margin."""
    K = channel.num_users_per_zone
    theta = np.sqrt(config.init_power_margin * config.pmax_w / (2 * K))
    norms = np.linalg.norm(channel.h, axis=2, keepdims=True)
    return theta * channel.h / norms


def _rates(channel, beams):
    return per_user_rates(channel, beams, None, mode="conventional")


def _surrogate_values(coeffs, channel, beams):
    K = channel.num_users_per_zone
    out = np.empty((2, K))
    for z in range(2):
        for k in range(K):
            out[z, k] = eval_surrogate(coeffs, channel, beams, _ONES, z, k)
    return out


def _record(it, objective, sol, gap, channel, beams, config):
    return IterationRecord(
        iteration=it,
        objective=objective,
        surrogate_objective=-sol.objective,
        tightness_gap=gap,
        worst_violation=conventional_violations(channel, beams, config)["worst"],
        solver_status=sol.status,
        solver_iterations=sol.iterations,
    )


def _conventional_init(channel, config):
    """Drive the worst rate-to-target ratio up to one, or raise."""
    beams = conventional_start(channel, config)
    trace: list[IterationRecord] = []
    rbar = config.rbar_nats
    if rbar <= 0.0:
        return beams, trace
    targets = np.full((2, channel.num_users_per_zone), rbar)

    ratio = float(np.min(_rates(channel, beams) / targets))
    history = [ratio]
    for it in range(1, config.init_max_iters + 1):
        if ratio >= 1.0:
            return beams, trace
        try:
            coeffs = surrogate_coeffs(channel, beams, _ONES, config, mode="conventional")
        except TrustRegionError as exc:
            raise InfeasibleInitError(str(exc), beams, None, trace) from exc
        problem = build_conventional_subproblem(
            coeffs, channel, beams, config,
            objective_mode=MIN_RATIO, rbar_nats=targets,
        )
        sol = solve(problem, tol=config.solver_tol)
        if sol.status != OPTIMAL:
            if sol.x is None or problem.max_violation(sol.x, scaled=True) > 1e-7:
                raise InfeasibleInitError(
                    f"subproblem ended with status {sol.status!r}",
                    beams, None, trace,
                )
        gap = abs(float(np.min(_surrogate_values(coeffs, channel, beams) / targets)) - ratio)
        beams = align_phases(channel, extract_beams(problem, sol.x))
        ratio = float(np.min(_rates(channel, beams) / targets))
        trace.append(_record(it, ratio, sol, gap, channel, beams, config))
        history.append(ratio)
        window = config.init_stall_window
        if len(history) > window:
            base = history[-1 - window]
            if history[-1] - base < config.init_stall_tol * max(abs(base), 1e-12):
                raise InfeasibleInitError(
                    f"target ratio stalled at {ratio:.4f} after {it} iterations",
                    beams, None, trace,
                )
    if ratio >= 1.0:
        return beams, trace
    raise InfeasibleInitError(
        f"target ratio reached only {ratio:.4f} in {config.init_max_iters} iterations",
        beams, None, trace,
    )


def _conventional_finish(channel, config, status, beams, trace, init_trace,
                         objective_nats):
    rates = _rates(channel, beams)
    report = check_feasibility(channel, beams, None, config,
                               rbar_nats=config.rbar_nats, mode="conventional")
    return Solution(
        status=status,
        beams=beams,
        alpha=None,
        tau=None,
        per_user_nats=rates,
        sum_nats=float(rates.sum()),
        min_nats=float(rates.min()),
        objective_nats=objective_nats,
        iterations=len(trace),
        trace=trace,
        init_trace=init_trace,
        feasibility=report,
    )


def conventional_dl_solve(channel: ChannelRealization, config: SystemConfig) -> Solution:
    """Maximize the sum rate of the no-time-split downlink under targets."""
    try:
        beams, init_trace = _conventional_init(channel, config)
    except InfeasibleInitError as exc:
        return _conventional_finish(
            channel, config, INFEASIBLE_INIT, exc.beams, [], exc.trace,
            objective_nats=float("nan"),
        )

    trace: list[IterationRecord] = []
    status = MAX_ITERS
    phi = float(_rates(channel, beams).sum())
    for it in range(1, config.max_iters + 1):
        try:
            coeffs = surrogate_coeffs(channel, beams, _ONES, config, mode="conventional")
        except TrustRegionError:
            status = SUBPROBLEM_FAILURE
            break
        problem = build_conventional_subproblem(
            coeffs, channel, beams, config,
            objective_mode=SUM, rbar_nats=config.rbar_nats,
        )
        sol = solve(problem, tol=config.solver_tol)
        if sol.status != OPTIMAL:
            if sol.x is None or problem.max_violation(sol.x, scaled=True) > 1e-7:
                status = SUBPROBLEM_FAILURE
                break
        gap = abs(float(_surrogate_values(coeffs, channel, beams).sum()) - phi)
        beams = align_phases(channel, extract_beams(problem, sol.x))
        phi_new = float(_rates(channel, beams).sum())
        trace.append(_record(it, phi_new, sol, gap, channel, beams, config))
        if abs(phi_new - phi) <= config.conv_tol * max(1.0, abs(phi_new)):
            phi = phi_new
            status = CONVERGED
            break
        phi = phi_new
    return _conventional_finish(channel, config, status, beams, trace, init_trace,
                                objective_nats=phi)


class UnsupportedSchemeError(ValueError):
    """Raised for scheme names that are recognized but not implemented."""


@dataclass(frozen=True)
class SchemeInfo:
    name: str
    summary: str
    solver: Callable[[ChannelRealization, SystemConfig], Solution] | None

    @property
    def implemented(self) -> bool:
        return self.solver is not None


SCHEMES: dict[str, SchemeInfo] = {
    "ft": SchemeInfo(
        "ft",
        "fractional-time two-zone downlink, sum throughput under targets",
        sca_solve,
    ),
    "maxmin-ft": SchemeInfo(
        "maxmin-ft",
        "fractional-time two-zone downlink, worst-user throughput",
        maxmin_solve,
    ),
    "conventional-dl": SchemeInfo(
        "conventional-dl",
        "single-slot downlink serving all users simultaneously",
        conventional_dl_solve,
    ),
    # recognized companions that this package does not implement
    "noma-dl": SchemeInfo(
        "noma-dl",
        "single-slot downlink with superposition coding and interference cancellation",
        None,
    ),
    "ft-noma": SchemeInfo(
        "ft-noma",
        "fractional-time downlink with superposition coding across zones",
        None,
    ),
    "ft-noma-inner": SchemeInfo(
        "ft-noma-inner",
        "fractional-time superposition variant decoding the near zone first",
        None,
    ),
    "ft-noma-outer": SchemeInfo(
        "ft-noma-outer",
        "fractional-time superposition variant decoding the far zone first",
        None,
    ),
}


def get_solver(name: str):
    """Solver callable for a scheme name; raises for unknown/unimplemented."""
    info = SCHEMES.get(name)
    if info is None:
        known = ", ".join(sorted(SCHEMES))
        raise ValueError(f"unknown scheme {name!r}; known schemes: {known}")
    if not info.implemented:
        available = ", ".join(sorted(k for k, v in SCHEMES.items() if v.implemented))
        raise UnsupportedSchemeError(
            f"scheme {name!r} is recognized but not implemented here; "
            f"available: {available}"
        )
    return info.solver
