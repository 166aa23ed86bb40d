"""System configuration, cell geometry, and channel generation.

A single base station with `num_antennas` transmit antennas serves two groups of
single-antenna users: zone 0 collects the users inside `zone1_radius_m`, zone 1
the users in the outer annulus up to `cell_radius_m`. Each zone has
`num_users_per_zone` users.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

LN2 = float(np.log(2.0))


def pathloss_db(distance_km) -> np.ndarray | float:
    """Distance-dependent pathloss 128.1 + 37.6*log10(d) in dB, d in kilometers."""
    d = np.asarray(distance_km, dtype=float)
    if np.any(d <= 0.0):
        raise ValueError("distance must be positive (km)")
    out = 128.1 + 37.6 * np.log10(d)
    return float(out) if out.ndim == 0 else out


def noise_power_w(density_dbm_hz: float, bandwidth_hz: float) -> float:
    """Thermal noise power in watts for a noise density in dBm/Hz over a bandwidth in Hz."""
    if bandwidth_hz <= 0.0:
        raise ValueError("bandwidth must be positive (Hz)")
    noise_dbm = density_dbm_hz + 10.0 * np.log10(bandwidth_hz)
    return float(10.0 ** ((noise_dbm - 30.0) / 10.0))


@dataclass
class SystemConfig:
    """Scenario parameters and solver knobs. Distances in meters, powers in dBm."""

    num_antennas: int = 5          # transmit antennas at the base station
    num_users_per_zone: int = 4    # single-antenna users per zone
    pmax_dbm: float = 30.0         # transmit power budget [dBm]
    qos_rbar_bits: float = 1.0     # per-user throughput target [bit/s/Hz]; 0 disables QoS
    noise_density_dbm: float = -174.0  # noise power density [dBm/Hz]
    bandwidth_hz: float = 10e6     # system bandwidth [Hz]
    cell_radius_m: float = 500.0   # outer cell radius [m]
    zone1_radius_m: float = 200.0  # inner-zone coverage radius [m]
    min_distance_m: float = 10.0   # minimum BS-user distance [m]

    # --- solver knobs ---
    conv_tol: float = 1e-4         # relative objective progress for convergence
    max_iters: int = 50            # main-loop iteration cap
    feas_tol: float = 1e-6         # feasibility check tolerance
    solver_tol: float = 1e-8       # conic solver tolerance (abs/rel gap, residuals)
    trust_margin: float = 1e-9     # relative closure margin on the trust-region rows
    alpha_min: float = 1.0 + 1e-6  # lower bound on inverse time fractions
    alpha_max: float = 1e6         # upper bound on inverse time fractions
    sinr_floor: float = 1e-12      # floor on the expansion-point SINR
    sinr_drop: float = 1e-8        # below this, a zero-target user loses its cone in sum mode
    init_max_iters: int = 50       # initialization iteration cap
    init_stall_window: int = 5     # iterations without progress before declaring a stall
    init_stall_tol: float = 1e-4   # relative min-ratio progress counted as progress
    init_power_margin: float = 0.5 # fraction of the budget used by the starting beams

    def __post_init__(self):
        if self.num_antennas < 1 or self.num_users_per_zone < 1:
            raise ValueError("need at least one antenna and one user per zone")
        if not (0.0 < self.min_distance_m < self.zone1_radius_m < self.cell_radius_m):
            raise ValueError("require 0 < min_distance_m < zone1_radius_m < cell_radius_m")
        if self.bandwidth_hz <= 0.0:
            raise ValueError("bandwidth must be positive (Hz)")
        if self.qos_rbar_bits < 0.0:
            raise ValueError("qos_rbar_bits must be >= 0")
        if not (0.0 < self.init_power_margin <= 1.0):
            raise ValueError("init_power_margin must be in (0, 1]")
        if not (0.0 < self.sinr_floor < self.sinr_drop):
            raise ValueError("require 0 < sinr_floor < sinr_drop")

    @property
    def pmax_w(self) -> float:
        """Power budget in watts."""
        return float(10.0 ** ((self.pmax_dbm - 30.0) / 10.0))

    @property
    def sigma2_w(self) -> float:
        """Receiver noise power in watts (shared by all users)."""
        return noise_power_w(self.noise_density_dbm, self.bandwidth_hz)

    @property
    def rbar_nats(self) -> float:
        """Per-user throughput target in nat/s/Hz."""
        return self.qos_rbar_bits * LN2


@dataclass(frozen=True)
class ChannelRealization:
    """One random drop of user positions and fading.

    h has shape (2, K, Nt): h[zone, user] is the complex downlink channel already
    scaled by sqrt(10^(-PL/10)). distances_km has shape (2, K). sigma2 in watts.
    """

    h: np.ndarray
    distances_km: np.ndarray
    sigma2: float

    @property
    def num_users_per_zone(self) -> int:
        return self.h.shape[1]

    @property
    def num_antennas(self) -> int:
        return self.h.shape[2]


def _annulus_radii(rng: np.random.Generator, n: int, r_lo_m: float, r_hi_m: float) -> np.ndarray:
    """n distances in meters, uniform over the annulus area between the two radii."""
    u = rng.uniform(r_lo_m**2, r_hi_m**2, size=n)
    return np.sqrt(u)


def sample_scenario(rng_seed, config: SystemConfig) -> ChannelRealization:
    """Draw one channel realization.

    Zone-0 users are placed uniformly over the disc annulus
    [min_distance_m, zone1_radius_m], zone-1 users over
    (zone1_radius_m, cell_radius_m]. Fading is i.i.d. CN(0, I_Nt) scaled by the
    pathloss. The draw order (zone-0 distances, zone-1 distances, then fading in
    zone-major user order) is fixed, so identical seeds give bit-identical
    realizations.
    """
    rng = np.random.default_rng(rng_seed)
    K, Nt = config.num_users_per_zone, config.num_antennas

    d0 = _annulus_radii(rng, K, config.min_distance_m, config.zone1_radius_m)
    d1 = _annulus_radii(rng, K, config.zone1_radius_m, config.cell_radius_m)
    distances_km = np.stack([d0, d1]) / 1e3

    gain = np.sqrt(10.0 ** (-pathloss_db(distances_km) / 10.0))  # (2, K)
    fading = (rng.standard_normal((2, K, Nt)) + 1j * rng.standard_normal((2, K, Nt))) / np.sqrt(2.0)
    h = gain[:, :, None] * fading

    return ChannelRealization(h=h, distances_km=distances_km, sigma2=config.sigma2_w)


__all__ = [
    "LN2",
    "SystemConfig",
    "ChannelRealization",
    "pathloss_db",
    "noise_power_w",
    "sample_scenario",
]
