"""Concave per-user rate minorants for the successive convex programming loops.

Each user's rate ln(1 + x^2/y)/t with x = Re{h^H w}, y = interference + noise,
t = inverse time fraction, is lower-bounded around an expansion point
(x_bar, y_bar, t_bar) by

    offset - iw * y / (x_bar * (2x - x_bar)) - tw * t,

valid wherever 2x - x_bar > 0 (the trust region). With d = x_bar^2 / y_bar:

    offset = 2*ln(1+d)/t_bar + d / (t_bar*(d+1))
    iw     = d^2 / (t_bar*(d+1))
    tw     = ln(1+d) / t_bar^2

The bound is tight at the expansion point: offset - iw/d - tw*t_bar
= ln(1+d)/t_bar exactly. The same coefficients with t_bar = 1 serve the
conventional (full-slot) downlink, where the time term is a constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import ChannelRealization, SystemConfig


class TrustRegionError(ValueError):
    """An expansion or evaluation point violates the trust-region condition."""


def minorant_coeffs(sinr, time_scale):
    """Coefficients (offset, interference_weight, time_weight) of the minorant.

    sinr is the expansion-point ratio d = x_bar^2 / y_bar > 0 and time_scale the
    expansion-point t_bar > 0. Vectorized over ndarrays.
    """
    d = np.asarray(sinr, dtype=float)
    t = np.asarray(time_scale, dtype=float)
    if np.any(d <= 0.0) or np.any(t <= 0.0):
        raise ValueError("minorant needs positive sinr and time scale")
    log_term = np.log1p(d)
    offset = 2.0 * log_term / t + d / (t * (d + 1.0))
    interference_weight = d * d / (t * (d + 1.0))
    time_weight = log_term / (t * t)
    return offset, interference_weight, time_weight


@dataclass(frozen=True)
class SurrogateCoeffs:
    """Per-user minorant data at an expansion point. All arrays have shape (2, K).

    gain                 x_bar = Re{h^H w_prev} (raw channel units, > 0)
    interference         y_bar = sum of interfering |h^H w|^2 + sigma2 [W]
    sinr                 d = gain^2 / interference (floored below)
    offset, interference_weight, time_weight   minorant coefficients
    alpha                expansion-point inverse time fractions, shape (2,);
                         all-ones in "conventional" mode where the slot is whole
    mode                 "ft" (own-zone interference) or "conventional" (all users)
    """

    gain: np.ndarray
    interference: np.ndarray
    sinr: np.ndarray
    offset: np.ndarray
    interference_weight: np.ndarray
    time_weight: np.ndarray
    alpha: np.ndarray
    mode: str = "ft"

    def __post_init__(self):
        for name in ("gain", "sinr", "offset", "interference_weight", "time_weight"):
            if np.any(getattr(self, name) <= 0.0):
                raise ValueError(f"surrogate field {name} must be positive")


def _projections(channel: ChannelRealization, beams: np.ndarray) -> np.ndarray:
    """proj[z, k, y, j] = h[z,k]^H w[y,j]."""
    return np.einsum("zka,yja->zkyj", channel.h.conj(), beams)


def interference_power(channel: ChannelRealization, beams: np.ndarray, mode: str) -> np.ndarray:
    """y for every user: interfering beam powers + noise, shape (2, K)."""
    proj = _projections(channel, beams)
    p = np.abs(proj) ** 2
    K = channel.num_users_per_zone
    own = p[np.arange(2)[:, None], np.arange(K)[None, :],
            np.arange(2)[:, None], np.arange(K)[None, :]]
    if mode == "ft":
        same_zone = p[np.arange(2)[:, None], np.arange(K)[None, :], np.arange(2)[:, None], :].sum(-1)
        return same_zone - own + channel.sigma2
    if mode == "conventional":
        return p.sum(axis=(2, 3)) - own + channel.sigma2
    raise ValueError(f"unknown mode {mode!r}")


def surrogate_coeffs(channel: ChannelRealization, w_prev: np.ndarray,
                     alpha_prev, config: SystemConfig,
                     mode: str = "ft") -> SurrogateCoeffs:
    """Minorant coefficients at the expansion point (w_prev, alpha_prev).

    Every user must have Re{h^H w} > 0 at the expansion point, else a
    TrustRegionError is raised. The per-user SINR is floored at
    config.sinr_floor so the coefficients stay finite and positive.
    In "conventional" mode pass alpha_prev = (1, 1).
    """
    proj = _projections(channel, w_prev)
    K = channel.num_users_per_zone
    gain = np.real(proj[np.arange(2)[:, None], np.arange(K)[None, :],
                        np.arange(2)[:, None], np.arange(K)[None, :]])
    if np.any(gain <= 0.0):
        raise TrustRegionError("expansion point has a nonpositive beam projection")
    y = interference_power(channel, w_prev, mode)
    d = np.maximum(gain**2 / y, config.sinr_floor)
    alpha = np.asarray(alpha_prev, dtype=float)
    if alpha.shape != (2,) or np.any(alpha <= 0.0):
        raise ValueError("alpha_prev must be two positive scalars")
    offset, iw, tw = minorant_coeffs(d, alpha[:, None])
    return SurrogateCoeffs(gain=gain, interference=y, sinr=d, offset=offset,
                           interference_weight=iw, time_weight=tw,
                           alpha=alpha.copy(), mode=mode)


def eval_surrogate(coeffs: SurrogateCoeffs, channel: ChannelRealization,
                   beams: np.ndarray, alpha, zone: int, user: int) -> float:
    """Value of one user's minorant at (beams, alpha), in nat/s/Hz.

    Raises TrustRegionError outside the trust region 2*Re{h^H w} > gain.
    In "conventional" mode pass alpha = (1, 1); the time term is then the
    constant time_weight.
    """
    h = channel.h[zone, user]
    proj = np.einsum("a,zja->zj", h.conj(), beams)
    x_bar = coeffs.gain[zone, user]
    span = x_bar * (2.0 * float(np.real(proj[zone, user])) - x_bar)
    if span <= 0.0:
        raise TrustRegionError("evaluation point outside the trust region")
    if coeffs.mode == "ft":
        y = float(np.sum(np.abs(proj[zone]) ** 2)) - float(np.abs(proj[zone, user]) ** 2) \
            + channel.sigma2
    else:
        y = float(np.sum(np.abs(proj) ** 2)) - float(np.abs(proj[zone, user]) ** 2) \
            + channel.sigma2
    a = np.asarray(alpha, dtype=float)
    return float(coeffs.offset[zone, user]
                 - coeffs.interference_weight[zone, user] * y / span
                 - coeffs.time_weight[zone, user] * a[zone])


def surrogate_sum(coeffs: SurrogateCoeffs, channel: ChannelRealization,
                  beams: np.ndarray, alpha) -> float:
    """Sum of all users' minorants at (beams, alpha), nat/s/Hz."""
    K = channel.num_users_per_zone
    return sum(eval_surrogate(coeffs, channel, beams, alpha, z, k)
               for z in range(2) for k in range(K))


def expansion_values(coeffs: SurrogateCoeffs) -> np.ndarray:
    """Minorant values at the expansion point itself: offset - iw/d - tw*alpha.

    Equals ln(1 + d) / alpha per user (the true rate there), shape (2, K).
    """
    return (coeffs.offset
            - coeffs.interference_weight / coeffs.sinr
            - coeffs.time_weight * coeffs.alpha[:, None])


__all__ = [
    "TrustRegionError",
    "SurrogateCoeffs",
    "minorant_coeffs",
    "surrogate_coeffs",
    "eval_surrogate",
    "surrogate_sum",
    "expansion_values",
    "interference_power",
]
