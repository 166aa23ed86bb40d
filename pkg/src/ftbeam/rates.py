"""Achievable rates and feasibility checks for the two-zone downlink.

Beamformers are passed around as a complex ndarray of shape (2, K, Nt):
w[zone, user] is the beam serving that user. All rates are in nat/s/Hz; divide
by ln 2 for bit/s/Hz.

Two service modes:
  "ft"            zones are served in separate time slots of fractions
                  (tau1, tau2); a user only sees interference from beams of
                  its own zone, and its rate is scaled by the zone's fraction.
  "conventional"  all 2K users are served simultaneously over the whole slot;
                  every other beam interferes.

The signal term is (Re{h^H w})^2, which matches |h^H w|^2 whenever the beam is
phase-aligned with the channel (rotating each beam to make h^H w real positive
changes neither the interference powers nor the power budget).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import LN2, ChannelRealization, SystemConfig


@dataclass(frozen=True)
class TimeSplit:
    """Time-slot fractions for the two zones (plain container, not validated)."""

    tau1: float
    tau2: float

    def as_array(self) -> np.ndarray:
        return np.array([self.tau1, self.tau2], dtype=float)


def beam_gains(channel: ChannelRealization, beams: np.ndarray) -> np.ndarray:
    """All cross projections h[z,k]^H w[z',j], shape (2, K, 2, K) complex."""
    # einsum over the antenna axis: out[z,k,zp,j] = conj(h[z,k]) . w[zp,j]
    return np.einsum("zka,yja->zkyj", channel.h.conj(), beams)


def align_phases(channel: ChannelRealization, beams: np.ndarray) -> np.ndarray:
    """Rotate each beam so its own-channel projection is real nonnegative.

    A per-beam phase changes no interference magnitude and no power, so this
    is free; it keeps numerically-roundtripped beams inside the positive
    projection region the design works in.
    """
    proj = np.einsum("zka,zka->zk", channel.h.conj(), beams)
    mag = np.abs(proj)
    phase = np.where(mag > 0.0, proj / np.where(mag > 0.0, mag, 1.0), 1.0)
    return beams * phase.conj()[:, :, None]


def sinr(channel: ChannelRealization, beams: np.ndarray, zone: int, user: int,
         mode: str = "ft") -> float:
    """SINR of one user; numerator (Re{h^H w})^2, denominator per service mode."""
    h = channel.h[zone, user]
    proj = np.einsum("a,zja->zj", h.conj(), beams)  # h^H w for every beam, (2, K)
    signal = float(np.real(proj[zone, user])) ** 2
    if mode == "ft":
        interf = np.abs(proj[zone]) ** 2
        interference = float(np.sum(interf)) - float(np.abs(proj[zone, user]) ** 2)
    elif mode == "conventional":
        interference = float(np.sum(np.abs(proj) ** 2)) - float(np.abs(proj[zone, user]) ** 2)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return signal / (interference + channel.sigma2)


def ft_rate(channel: ChannelRealization, beams: np.ndarray, tau: TimeSplit,
            zone: int, user: int) -> float:
    """Fractional-time rate tau_zone * ln(1 + SINR) in nat/s/Hz; exactly 0 when tau_zone = 0."""
    t = (tau.tau1, tau.tau2)[zone]
    if t == 0.0:
        return 0.0
    return t * float(np.log1p(sinr(channel, beams, zone, user, mode="ft")))


def conventional_rate(channel: ChannelRealization, beams: np.ndarray,
                      zone: int, user: int) -> float:
    """Full-slot rate ln(1 + SINR) under all-user interference, in nat/s/Hz."""
    return float(np.log1p(sinr(channel, beams, zone, user, mode="conventional")))


def per_user_rates(channel: ChannelRealization, beams: np.ndarray,
                   tau: TimeSplit | None, mode: str = "ft") -> np.ndarray:
    """Rates of all users, shape (2, K), nat/s/Hz."""
    K = channel.num_users_per_zone
    out = np.empty((2, K))
    for z in range(2):
        for k in range(K):
            if mode == "ft":
                out[z, k] = ft_rate(channel, beams, tau, z, k)
            else:
                out[z, k] = conventional_rate(channel, beams, z, k)
    return out


def sum_throughput(channel: ChannelRealization, beams: np.ndarray,
                   tau: TimeSplit | None, mode: str = "ft") -> float:
    """Sum throughput over all users in nat/s/Hz."""
    return float(np.sum(per_user_rates(channel, beams, tau, mode=mode)))


def min_throughput(channel: ChannelRealization, beams: np.ndarray,
                   tau: TimeSplit | None, mode: str = "ft") -> float:
    """Worst per-user throughput in nat/s/Hz."""
    return float(np.min(per_user_rates(channel, beams, tau, mode=mode)))


@dataclass(frozen=True)
class FeasibilityReport:
    """Signed residuals of the design constraints (>= 0 means satisfied).

    sign_residuals  (2, K)  Re{h^H w} on noise-normalized channels
    qos_residuals   (2, K)  rate - target, nat/s/Hz
    power_residual  scalar  (P - used) / P
    time_residuals  (3,)    tau1, tau2, 1 - tau1 - tau2 (zeros in conventional mode)
    """

    sign_residuals: np.ndarray
    qos_residuals: np.ndarray
    power_residual: float
    time_residuals: np.ndarray
    worst_violation: float
    feasible: bool


def check_feasibility(channel: ChannelRealization, beams: np.ndarray,
                      tau: TimeSplit | None, config: SystemConfig,
                      rbar_nats: float | np.ndarray | None = None,
                      mode: str = "ft") -> FeasibilityReport:
    """Evaluate all design constraints at a candidate point.

    rbar_nats overrides the config's QoS target (pass 0.0 to check without QoS,
    e.g. for max-min solutions). The report is feasible when no residual is
    below -config.feas_tol.
    """
    if mode not in ("ft", "conventional"):
        raise ValueError(f"unknown mode {mode!r}")
    K = channel.num_users_per_zone
    target = config.rbar_nats if rbar_nats is None else rbar_nats
    target = np.broadcast_to(np.asarray(target, dtype=float), (2, K))

    sd = np.sqrt(channel.sigma2)
    gains = beam_gains(channel, beams)
    own = np.array([[gains[z, k, z, k] for k in range(K)] for z in range(2)])
    sign_res = np.real(own) / sd

    pmax = config.pmax_w
    if mode == "ft":
        if tau is None:
            raise ValueError("ft mode needs a time split")
        rates = per_user_rates(channel, beams, tau, mode="ft")
        used = tau.tau1 * float(np.sum(np.abs(beams[0]) ** 2)) \
            + tau.tau2 * float(np.sum(np.abs(beams[1]) ** 2))
        time_res = np.array([tau.tau1, tau.tau2, 1.0 - tau.tau1 - tau.tau2])
    else:
        rates = per_user_rates(channel, beams, None, mode="conventional")
        used = float(np.sum(np.abs(beams) ** 2))
        time_res = np.zeros(3)

    qos_res = rates - target
    power_res = (pmax - used) / pmax

    worst = -min(float(sign_res.min()), float(qos_res.min()), power_res,
                 float(time_res.min()))
    worst = max(worst, 0.0)
    return FeasibilityReport(
        sign_residuals=sign_res,
        qos_residuals=qos_res,
        power_residual=power_res,
        time_residuals=time_res,
        worst_violation=worst,
        feasible=bool(worst <= config.feas_tol),
    )


__all__ = [
    "TimeSplit",
    "FeasibilityReport",
    "beam_gains",
    "sinr",
    "ft_rate",
    "conventional_rate",
    "per_user_rates",
    "sum_throughput",
    "min_throughput",
    "check_feasibility",
    "LN2",
]
