"""Convex subproblem assembly for the successive convex programming loops.

Complex beams are stacked as real variables (w_re, w_im). Channel projection
rows are written on noise-normalized channels g = h / sigma, which keeps every
cone row O(1)-scaled; beam power rows stay in raw watts. Per user, the
interference-plus-noise relative to its expansion value y_hat is captured by
an epigraph q >= ||u||^2 / (y_hat * span) via a rotated cone (see _user_cone)
with

    span = (2 Re{g^H w} - x) / x    (affine; x = expansion projection)
    u = (Re{g^H w_j}, Im{g^H w_j} for interferers j, 1)

so q = 1 at the expansion point and each user's concave rate minorant becomes
the affine expression

    offset - (interference_weight * y_hat / x^2) * q - time_weight * alpha_zone.

Two problem families share this machinery:

  fractional time   variables (w, alpha) plus epigraphs; inverse time
                    fractions obey 1/alpha_1 + 1/alpha_2 <= 1 through
                    u_z * alpha_z >= 1 rows, and the nonconvex coupled power
                    budget is replaced by its convex inner bound around
                    (w_prev, alpha_prev) (linearizing ||w1||^2/alpha_2).
  conventional      beams only; plain sum-power ball.

Objective modes: "sum" maximizes the sum of minorants; "min-ratio" maximizes
t with minorant >= target * t for every user with a positive target (users
with target 0 get no ratio row).
"""

from __future__ import annotations

import numpy as np

from .conic import ConicProblem, ProblemBuilder
from .scenario import ChannelRealization, SystemConfig
from .surrogate import SurrogateCoeffs

SUM = "sum"
MIN_RATIO = "min-ratio"


def _as_target_array(rbar_nats, K: int) -> np.ndarray:
    t = np.asarray(rbar_nats, dtype=float)
    if t.ndim == 0:
        t = np.full((2, K), float(t))
    if t.shape != (2, K) or np.any(t < 0.0):
        raise ValueError("per-user targets must be a nonnegative scalar or (2, K) array")
    return t


class _BeamIndex:
    """Column bookkeeping for the stacked real beam variables."""

    def __init__(self, builder: ProblemBuilder, K: int, Nt: int):
        self.K, self.Nt = K, Nt
        self.re = builder.add_var("w_re", 2 * K * Nt)
        self.im = builder.add_var("w_im", 2 * K * Nt)

    def cols(self, z: int, k: int) -> tuple[slice, slice]:
        base = (z * self.K + k) * self.Nt
        return (slice(self.re.start + base, self.re.start + base + self.Nt),
                slice(self.im.start + base, self.im.start + base + self.Nt))

    def add_re(self, vec: np.ndarray, g: np.ndarray, z: int, k: int, scale: float = 1.0):
        """vec += scale * Re{g^H w[z,k]} coefficients."""
        cr, ci = self.cols(z, k)
        vec[cr] += scale * g.real
        vec[ci] += scale * g.imag

    def add_im(self, vec: np.ndarray, g: np.ndarray, z: int, k: int, scale: float = 1.0):
        """vec += scale * Im{g^H w[z,k]} coefficients."""
        cr, ci = self.cols(z, k)
        vec[cr] += -scale * g.imag
        vec[ci] += scale * g.real


def _user_cone(builder: ProblemBuilder, beams: _BeamIndex, g_all: np.ndarray,
               q_col: int, z: int, k: int, gain_n: float, y_hat_n: float,
               interferers) -> None:
    """Rotated cone tying q[z,k] to relative interference for user (z,k).

    Let span = (2 Re{g^H w} - x) / x with x the expansion projection (span is
    1 at the expansion point) and y_hat the expansion interference-plus-noise
    power.  The cone certifies

        (sqrt(y_hat) * span) * (sqrt(y_hat) * q) >= ||u||^2,

    i.e. q bounds the user's interference-plus-noise relative to y_hat, per
    unit span.  At the expansion point all three cone members sit at
    sqrt(y_hat) and q = 1 for every user, however weak its projection or hot
    its interference.  Without both normalizations the value spread inside a
    single cone grows like the inverse SINR, which stalls the interior-point
    method.
    """
    g = g_all[z, k]
    root_y = float(np.sqrt(y_hat_n))
    s_vec = builder.zeros()
    beams.add_re(s_vec, g, z, k, scale=2.0 * root_y / gain_n)
    q_vec = builder.zeros()
    q_vec[q_col] = root_y
    u_rows = []
    for (zz, jj) in interferers:
        re_vec = builder.zeros()
        beams.add_re(re_vec, g, zz, jj)
        im_vec = builder.zeros()
        beams.add_im(im_vec, g, zz, jj)
        u_rows.append((re_vec, 0.0))
        u_rows.append((im_vec, 0.0))
    u_rows.append((builder.zeros(), 1.0))  # normalized noise
    builder.add_rotated_cone((s_vec, -root_y), (q_vec, 0.0), u_rows)


def _select_q_users(objective_mode, targets, coeffs, config, K):
    """Users that get an interference epigraph variable and cone.

    In min-ratio mode only users with positive targets enter the objective,
    and each of them needs its cone; a coneless zero-target user would leave
    an unconstrained epigraph variable behind.  In sum mode, a zero-target
    user whose expansion SINR has collapsed is served by the constant part
    of its minorant alone: its span rows scale with the inverse of its
    vanishing projection, which wrecks the subproblem's conditioning, while
    the dropped objective term is below the expansion SINR itself and
    therefore far inside the ascent tolerance.
    """
    if objective_mode == SUM:
        return [(z, k) for z in range(2) for k in range(K)
                if targets[z, k] > 0.0 or coeffs.sinr[z, k] > config.sinr_drop]
    users = [(z, k) for z in range(2) for k in range(K) if targets[z, k] > 0.0]
    if not users:
        raise ValueError("min-ratio mode needs at least one positive target")
    return users


def _sign_and_trust_rows(builder, beams, g_all, gains_n, trust_margin, K):
    # the trust margin is relative to the user's own expansion projection, so
    # arbitrarily weak users stay inside their (scaled-down) trust region
    for z in range(2):
        for k in range(K):
            g = g_all[z, k]
            sign_vec = builder.zeros()
            beams.add_re(sign_vec, g, z, k)
            builder.add_nonneg(sign_vec, 0.0)
            trust_vec = builder.zeros()
            beams.add_re(trust_vec, g, z, k, scale=2.0)
            builder.add_nonneg(trust_vec, -gains_n[z, k] * (1.0 + trust_margin))


def build_subproblem(coeffs: SurrogateCoeffs, channel: ChannelRealization,
                     w_prev: np.ndarray, alpha_prev, config: SystemConfig,
                     objective_mode: str = SUM,
                     rbar_nats=None) -> ConicProblem:
    """Assemble the fractional-time subproblem around (w_prev, alpha_prev).

    Maximizes the chosen objective over the minorants from `coeffs` subject to
    per-user sign and trust-region rows, QoS rows (sum mode, positive targets),
    the inverse-time-fraction budget, bound closure on alpha, and the inner
    convex power budget. Returned as a minimization ConicProblem.
    """
    if coeffs.mode != "ft":
        raise ValueError("fractional-time subproblem needs ft-mode coefficients")
    if objective_mode not in (SUM, MIN_RATIO):
        raise ValueError(f"unknown objective mode {objective_mode!r}")
    K, Nt = channel.num_users_per_zone, channel.num_antennas
    targets = _as_target_array(config.rbar_nats if rbar_nats is None else rbar_nats, K)
    alpha_prev = np.asarray(alpha_prev, dtype=float)

    sd = float(np.sqrt(channel.sigma2))
    g_all = channel.h / sd
    gains_n = coeffs.gain / sd
    y_n = coeffs.interference / channel.sigma2

    q_users = _select_q_users(objective_mode, targets, coeffs, config, K)
    # q is relative to the expansion interference (see _user_cone), so its
    # weight absorbs y_hat / x^2; at the expansion point the q term is
    # exactly interference_weight / sinr for every user
    q_weight = coeffs.interference_weight * y_n / gains_n**2

    b = ProblemBuilder()
    beams = _BeamIndex(b, K, Nt)
    alpha = b.add_var("alpha", 2)
    q = b.add_var("q", len(q_users))
    inv_tau = b.add_var("inv_tau", 2)
    pow1 = b.add_var("pow_zone1", 1)
    pow2 = b.add_var("pow_zone2_scaled", 1)
    ratio = b.add_var("ratio", 1) if objective_mode == MIN_RATIO else None
    n = b.num_vars

    def surrogate_expr(z, k, qi):
        """offset - iw*q - tw*alpha_z as (coeffs, const)."""
        vec = b.zeros()
        vec[q.start + qi] = -q_weight[z, k]
        vec[alpha.start + z] = -coeffs.time_weight[z, k]
        return vec, float(coeffs.offset[z, k])

    # --- per-user cones, sign, trust ---
    for qi, (z, k) in enumerate(q_users):
        interferers = [(z, j) for j in range(K) if j != k]
        _user_cone(b, beams, g_all, q.start + qi, z, k,
                   gains_n[z, k], y_n[z, k], interferers)
    _sign_and_trust_rows(b, beams, g_all, gains_n, config.trust_margin, K)

    # --- QoS / ratio rows ---
    qos_rows = 0
    for qi, (z, k) in enumerate(q_users):
        if targets[z, k] <= 0.0:
            continue
        vec, const = surrogate_expr(z, k, qi)
        if objective_mode == SUM:
            builder_const = const - targets[z, k]
        else:
            vec = vec.copy()
            vec[ratio.start] = -targets[z, k]
            builder_const = const
        b.add_nonneg(vec, builder_const)
        qos_rows += 1

    # --- time budget: inv_tau_z * alpha_z >= 1, sum inv_tau <= 1, alpha bounds ---
    for z in range(2):
        a_vec = b.zeros(); a_vec[alpha.start + z] = 1.0
        u_vec = b.zeros(); u_vec[inv_tau.start + z] = 1.0
        b.add_rotated_cone((a_vec, 0.0), (u_vec, 0.0), [(b.zeros(), 1.0)])
    t_vec = b.zeros()
    t_vec[inv_tau] = -1.0
    b.add_nonneg(t_vec, 1.0)
    for z in range(2):
        lo = b.zeros(); lo[alpha.start + z] = 1.0
        b.add_nonneg(lo, -config.alpha_min)
        hi = b.zeros(); hi[alpha.start + z] = -1.0
        b.add_nonneg(hi, config.alpha_max)

    # --- power: epigraphs per zone, then the linearized coupled budget ---
    def beam_entry_rows(z):
        rows = []
        for k in range(K):
            cr, ci = beams.cols(z, k)
            for col in list(range(cr.start, cr.stop)) + list(range(ci.start, ci.stop)):
                e = b.zeros(); e[col] = 1.0
                rows.append((e, 0.0))
        return rows

    p1_vec = b.zeros(); p1_vec[pow1] = 1.0
    b.add_rotated_cone((b.zeros(), 1.0), (p1_vec, 0.0), beam_entry_rows(0))
    a2_vec = b.zeros(); a2_vec[alpha.start + 1] = 1.0
    p2_vec = b.zeros(); p2_vec[pow2] = 1.0
    b.add_rotated_cone((a2_vec, 0.0), (p2_vec, 0.0), beam_entry_rows(1))

    w1_prev = w_prev[0]
    w1_norm2 = float(np.sum(np.abs(w1_prev) ** 2))
    a2_prev = float(alpha_prev[1])
    pow_vec = b.zeros()
    pow_vec[pow1] = -1.0
    pow_vec[pow2] = -1.0
    pow_vec[alpha.start + 1] = -w1_norm2 / a2_prev**2
    for k in range(K):
        cr, ci = beams.cols(0, k)
        pow_vec[cr] += (2.0 / a2_prev) * w1_prev[k].real
        pow_vec[ci] += (2.0 / a2_prev) * w1_prev[k].imag
    b.add_nonneg(pow_vec, config.pmax_w)

    # --- objective ---
    if objective_mode == SUM:
        obj = np.zeros(n)
        for qi, (z, k) in enumerate(q_users):
            obj[q.start + qi] = q_weight[z, k]
        for z in range(2):
            obj[alpha.start + z] = float(np.sum(coeffs.time_weight[z]))
        b.minimize(obj, offset=-float(np.sum(coeffs.offset)))
    else:
        obj = np.zeros(n)
        obj[ratio.start] = -1.0
        b.minimize(obj)

    stats = {
        "shape": (2, K, Nt),
        "mode": "ft",
        "objective_mode": objective_mode,
        "core_scalar_vars": 2 * K * Nt + 2,   # complex beam coefficients + two time scalars
        "aux_scalar_vars": n - 4 * K * Nt - 2,
        "core_constraint_rows": qos_rows + 2 * K + 2 * K + 1 + 1,
        "aux_rows": 4,                        # alpha bound closures
        "row_families": {"qos": qos_rows, "trust": 2 * K, "sign": 2 * K,
                         "time": 1, "power": 1, "alpha_bounds": 4},
        "q_users": q_users,
    }
    return b.build(stats=stats)


def build_conventional_subproblem(coeffs: SurrogateCoeffs, channel: ChannelRealization,
                                  w_prev: np.ndarray, config: SystemConfig,
                                  objective_mode: str = SUM,
                                  rbar_nats=None) -> ConicProblem:
    """Assemble the conventional-downlink subproblem around w_prev.

    Same per-user machinery with all-user interference, a whole slot
    (time_weight enters as a constant), and the plain power ball
    ||w||_F <= sqrt(P).
    """
    if coeffs.mode != "conventional":
        raise ValueError("conventional subproblem needs conventional-mode coefficients")
    if objective_mode not in (SUM, MIN_RATIO):
        raise ValueError(f"unknown objective mode {objective_mode!r}")
    K, Nt = channel.num_users_per_zone, channel.num_antennas
    targets = _as_target_array(config.rbar_nats if rbar_nats is None else rbar_nats, K)

    sd = float(np.sqrt(channel.sigma2))
    g_all = channel.h / sd
    gains_n = coeffs.gain / sd
    y_n = coeffs.interference / channel.sigma2
    # constant part of each minorant: offset - time_weight (whole slot, t = 1)
    const_part = coeffs.offset - coeffs.time_weight

    q_users = _select_q_users(objective_mode, targets, coeffs, config, K)
    # q is relative to the expansion interference (see _user_cone), so its
    # weight absorbs y_hat / x^2
    q_weight = coeffs.interference_weight * y_n / gains_n**2

    b = ProblemBuilder()
    beams = _BeamIndex(b, K, Nt)
    q = b.add_var("q", len(q_users))
    ratio = b.add_var("ratio", 1) if objective_mode == MIN_RATIO else None
    n = b.num_vars

    for qi, (z, k) in enumerate(q_users):
        interferers = [(zz, jj) for zz in range(2) for jj in range(K) if (zz, jj) != (z, k)]
        _user_cone(b, beams, g_all, q.start + qi, z, k,
                   gains_n[z, k], y_n[z, k], interferers)
    _sign_and_trust_rows(b, beams, g_all, gains_n, config.trust_margin, K)

    qos_rows = 0
    for qi, (z, k) in enumerate(q_users):
        if targets[z, k] <= 0.0:
            continue
        vec = b.zeros()
        vec[q.start + qi] = -q_weight[z, k]
        if objective_mode == SUM:
            b.add_nonneg(vec, float(const_part[z, k]) - targets[z, k])
        else:
            vec[ratio.start] = -targets[z, k]
            b.add_nonneg(vec, float(const_part[z, k]))
        qos_rows += 1

    # power ball over all beams
    tail = []
    for z in range(2):
        for k in range(K):
            cr, ci = beams.cols(z, k)
            for col in list(range(cr.start, cr.stop)) + list(range(ci.start, ci.stop)):
                e = b.zeros(); e[col] = 1.0
                tail.append((e, 0.0))
    b.add_soc((b.zeros(), float(np.sqrt(config.pmax_w))), tail)

    if objective_mode == SUM:
        obj = np.zeros(n)
        for qi, (z, k) in enumerate(q_users):
            obj[q.start + qi] = q_weight[z, k]
        b.minimize(obj, offset=-float(np.sum(const_part)))
    else:
        obj = np.zeros(n)
        obj[ratio.start] = -1.0
        b.minimize(obj)

    stats = {
        "shape": (2, K, Nt),
        "mode": "conventional",
        "objective_mode": objective_mode,
        "core_scalar_vars": 2 * K * Nt,
        "aux_scalar_vars": n - 4 * K * Nt,
        "core_constraint_rows": qos_rows + 2 * K + 2 * K + 1,
        "aux_rows": 0,
        "row_families": {"qos": qos_rows, "trust": 2 * K, "sign": 2 * K, "power": 1},
        "q_users": q_users,
    }
    return b.build(stats=stats)


def extract_beams(problem: ConicProblem, x: np.ndarray) -> np.ndarray:
    """Complex beams (2, K, Nt) from a solution vector."""
    _, K, Nt = problem.stats["shape"]
    re = x[problem.slice_of("w_re")].reshape(2, K, Nt)
    im = x[problem.slice_of("w_im")].reshape(2, K, Nt)
    return re + 1j * im


def extract_alpha(problem: ConicProblem, x: np.ndarray) -> np.ndarray:
    """Inverse time fractions (2,) from a fractional-time solution vector."""
    return x[problem.slice_of("alpha")].copy()


def expansion_vector(problem: ConicProblem, channel: ChannelRealization,
                     coeffs: SurrogateCoeffs, w_prev: np.ndarray,
                     alpha_prev=None, rbar_nats=None) -> np.ndarray:
    """Primal vector embedding the expansion point with natural auxiliaries.

    Useful as a feasibility probe: the expansion point satisfies every row of
    the subproblem built around it (QoS rows require it to meet the targets).
    """
    x = np.zeros(problem.num_vars)
    x[problem.slice_of("w_re")] = w_prev.real.ravel()
    x[problem.slice_of("w_im")] = w_prev.imag.ravel()

    sd = float(np.sqrt(channel.sigma2))
    gains_n = coeffs.gain / sd
    y_n = coeffs.interference / channel.sigma2
    q_weight = coeffs.interference_weight * y_n / gains_n**2
    q_sl = problem.slice_of("q")
    q_vals = {}
    for qi, (z, k) in enumerate(problem.stats["q_users"]):
        # the relative-interference epigraph sits exactly at 1 (see _user_cone)
        q_vals[(z, k)] = 1.0
        x[q_sl.start + qi] = q_vals[(z, k)]

    if problem.stats["mode"] == "ft":
        alpha_prev = np.asarray(alpha_prev, dtype=float)
        x[problem.slice_of("alpha")] = alpha_prev
        x[problem.slice_of("inv_tau")] = 1.0 / alpha_prev
        x[problem.slice_of("pow_zone1")] = float(np.sum(np.abs(w_prev[0]) ** 2))
        x[problem.slice_of("pow_zone2_scaled")] = \
            float(np.sum(np.abs(w_prev[1]) ** 2)) / alpha_prev[1]

    if problem.stats["objective_mode"] == MIN_RATIO:
        K = channel.num_users_per_zone
        targets = _as_target_array(rbar_nats, K)
        ratios = []
        for (z, k) in problem.stats["q_users"]:
            # row-consistent minorant value at the embedded q
            val = coeffs.offset[z, k] - q_weight[z, k] * q_vals[(z, k)]
            if problem.stats["mode"] == "ft":
                val -= coeffs.time_weight[z, k] * float(alpha_prev[z])
            else:
                val -= coeffs.time_weight[z, k]
            ratios.append(val / targets[z, k])
        x[problem.slice_of("ratio")] = min(ratios)
    return x


def original_violations(channel: ChannelRealization, beams: np.ndarray,
                        alpha, config: SystemConfig) -> dict:
    """Violations of the design constraints in inverse-time form at (beams, alpha).

    sign          max over users of -Re{g^H w} (noise-normalized)
    time_budget   1/alpha_1 + 1/alpha_2 - 1
    power_budget  ((1 - 1/alpha_2)||w1||^2 + ||w2||^2/alpha_2 - P) / P
    All values <= 0 mean satisfied; the dict also carries the max.
    """
    alpha = np.asarray(alpha, dtype=float)
    sd = float(np.sqrt(channel.sigma2))
    proj = np.einsum("zka,zka->zk", channel.h.conj(), beams)
    sign_v = float(np.max(-proj.real / sd))
    time_v = float(1.0 / alpha[0] + 1.0 / alpha[1] - 1.0)
    p1 = float(np.sum(np.abs(beams[0]) ** 2))
    p2 = float(np.sum(np.abs(beams[1]) ** 2))
    power_v = ((1.0 - 1.0 / alpha[1]) * p1 + p2 / alpha[1] - config.pmax_w) / config.pmax_w
    worst = max(sign_v, time_v, power_v, 0.0)
    return {"sign": sign_v, "time_budget": time_v, "power_budget": power_v, "worst": worst}


def conventional_violations(channel: ChannelRealization, beams: np.ndarray,
                            config: SystemConfig) -> dict:
    """Single-slot counterpart of :func:`original_violations` (no time split)."""
    sd = float(np.sqrt(channel.sigma2))
    proj = np.einsum("zka,zka->zk", channel.h.conj(), beams)
    sign_v = float(np.max(-proj.real / sd))
    power_v = (float(np.sum(np.abs(beams) ** 2)) - config.pmax_w) / config.pmax_w
    worst = max(sign_v, power_v, 0.0)
    return {"sign": sign_v, "power_budget": power_v, "worst": worst}


__all__ = [
    "SUM",
    "MIN_RATIO",
    "build_subproblem",
    "build_conventional_subproblem",
    "extract_beams",
    "extract_alpha",
    "expansion_vector",
    "original_violations",
]
