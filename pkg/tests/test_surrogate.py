"""Minorant coefficients: frozen values, tightness, lower-bound property."""

import math

import numpy as np
import pytest

from ftbeam.rates import TimeSplit, ft_rate
from ftbeam.scenario import ChannelRealization, SystemConfig, sample_scenario
from ftbeam.surrogate import (
    SurrogateCoeffs,
    TrustRegionError,
    eval_surrogate,
    expansion_values,
    interference_power,
    minorant_coeffs,
    surrogate_coeffs,
)


def make_channel(h, sigma2=1.0):
    h = np.asarray(h, dtype=complex)
    return ChannelRealization(h=h, distances_km=np.full(h.shape[:2], 0.1), sigma2=sigma2)


def mf_beams(ch, total_power_w):
    """Per-user matched-filter beams splitting total_power_w evenly (h^H w > 0)."""
    K = ch.num_users_per_zone
    theta = np.sqrt(total_power_w / (2 * K))
    norms = np.linalg.norm(ch.h, axis=2, keepdims=True)
    return theta * ch.h / norms


def test_minorant_coeffs_frozen_example():
    # x = 2, y = 1, alpha = 2: d = 4
    # offset = 2 ln5 / 2 + 4/(2*5) = ln5 + 0.4, iw = 16/(2*5) = 1.6, tw = ln5 / 4
    offset, iw, tw = minorant_coeffs(4.0, 2.0)
    assert offset == pytest.approx(math.log(5.0) + 0.4, abs=1e-12)
    assert offset == pytest.approx(2.0094379124341003, abs=1e-12)  # frozen
    assert iw == pytest.approx(1.6, abs=1e-12)
    assert tw == pytest.approx(math.log(5.0) / 4.0, abs=1e-12)
    assert tw == pytest.approx(0.4023594781085251, abs=1e-12)  # frozen


def test_minorant_tightness_identity():
    # offset - iw/d - tw*t_bar == ln(1+d)/t_bar for any valid expansion point
    rng = np.random.default_rng(1)
    d = 10.0 ** rng.uniform(-6, 6, size=1000)
    t = 10.0 ** rng.uniform(-2, 2, size=1000)
    offset, iw, tw = minorant_coeffs(d, t)
    lhs = offset - iw / d - tw * t
    rhs = np.log1p(d) / t
    assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_minorant_coeffs_positive_and_validated():
    offset, iw, tw = minorant_coeffs(1e-12, 1.0)
    assert offset > 0 and iw > 0 and tw > 0
    with pytest.raises(ValueError):
        minorant_coeffs(0.0, 1.0)
    with pytest.raises(ValueError):
        minorant_coeffs(1.0, 0.0)


def test_minorant_chain_random_tuples():
    # ln(1+x^2/y)/t  >=  offset - iw*y/x^2 - tw*t  >=  offset - iw*y/(xb(2x-xb)) - tw*t
    # over random positive tuples with 2x - xb > 0; equality at the expansion point.
    rng = np.random.default_rng(7)
    n = 20000
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
    assert float(np.min(f - mid)) >= -1e-9
    assert float(np.min(mid - low)) >= -1e-9

    f0 = np.log1p(xb**2 / yb) / tb
    mid0 = offset - iw * yb / xb**2 - tw * tb
    assert float(np.max(np.abs(f0 - mid0))) <= 1e-9


def test_surrogate_coeffs_from_channel():
    # single user per zone, real channels: x = h*w, y = sigma2
    ch = make_channel([[[2.0]], [[1.0]]], sigma2=1.0)
    w = np.array([[[1.0]], [[1.0]]], dtype=complex)
    cfg = SystemConfig(num_users_per_zone=1, num_antennas=1)
    co = surrogate_coeffs(ch, w, (2.0, 2.0), cfg)
    assert co.gain[0, 0] == pytest.approx(2.0)
    assert co.interference[0, 0] == pytest.approx(1.0)
    assert co.sinr[0, 0] == pytest.approx(4.0)
    assert co.offset[0, 0] == pytest.approx(math.log(5.0) + 0.4, abs=1e-12)
    assert co.interference_weight[0, 0] == pytest.approx(1.6, abs=1e-12)
    assert co.time_weight[0, 0] == pytest.approx(math.log(5.0) / 4.0, abs=1e-12)


def test_surrogate_coeffs_interference_sets():
    cfg = SystemConfig(num_users_per_zone=2, num_antennas=3)
    ch = sample_scenario(3, cfg)
    w = mf_beams(ch, 0.5)  # aligned beams, positive projections
    y_ft = interference_power(ch, w, "ft")
    y_conv = interference_power(ch, w, "conventional")
    assert np.all(y_conv >= y_ft)          # extra cross-zone terms
    assert np.all(y_ft >= ch.sigma2)
    co = surrogate_coeffs(ch, w, (2.0, 2.0), cfg)
    assert np.allclose(co.interference, y_ft)
    co_c = surrogate_coeffs(ch, w, (1.0, 1.0), cfg, mode="conventional")
    assert np.allclose(co_c.interference, y_conv)


def test_surrogate_coeffs_rejects_bad_expansion():
    ch = make_channel([[[2.0]], [[1.0]]], sigma2=1.0)
    w_neg = np.array([[[-1.0]], [[1.0]]], dtype=complex)
    cfg = SystemConfig(num_users_per_zone=1, num_antennas=1)
    with pytest.raises(TrustRegionError):
        surrogate_coeffs(ch, w_neg, (2.0, 2.0), cfg)
    with pytest.raises(ValueError):
        surrogate_coeffs(ch, np.ones((2, 1, 1), dtype=complex), (2.0,), cfg)


def test_sinr_floor_keeps_coeffs_finite():
    ch = make_channel([[[1e-9]], [[1.0]]], sigma2=1.0)  # d would be 1e-18
    w = np.ones((2, 1, 1), dtype=complex)
    cfg = SystemConfig(num_users_per_zone=1, num_antennas=1)
    co = surrogate_coeffs(ch, w, (2.0, 2.0), cfg)
    assert co.sinr[0, 0] == cfg.sinr_floor
    assert np.isfinite(co.offset).all() and np.all(co.offset > 0)


def test_eval_surrogate_tight_at_expansion():
    cfg = SystemConfig(num_users_per_zone=3, num_antennas=4)
    for seed in range(5):
        ch = sample_scenario(seed, cfg)
        w = mf_beams(ch, 0.5)
        alpha = np.array([2.5, 1.8])
        co = surrogate_coeffs(ch, w, alpha, cfg)
        tau = TimeSplit(1.0 / alpha[0], 1.0 / alpha[1])
        vals = expansion_values(co)
        for z in range(2):
            for k in range(3):
                s = eval_surrogate(co, ch, w, alpha, z, k)
                r = ft_rate(ch, w, tau, z, k)
                assert s == pytest.approx(r, abs=1e-9)
                assert vals[z, k] == pytest.approx(r, abs=1e-9)


def test_eval_surrogate_is_lower_bound_in_trust_region():
    cfg = SystemConfig(num_users_per_zone=2, num_antennas=3)
    rng = np.random.default_rng(11)
    violations = 0
    for seed in range(10):
        ch = sample_scenario(seed, cfg)
        w0 = mf_beams(ch, 0.5)
        alpha0 = np.array([2.0, 2.0])
        co = surrogate_coeffs(ch, w0, alpha0, cfg)
        for _ in range(20):
            w = w0 * (1.0 + 0.3 * rng.standard_normal(w0.shape)) \
                + 0.2e-3 * (rng.standard_normal(w0.shape) + 1j * rng.standard_normal(w0.shape)) * np.abs(w0).mean()
            a1, a2 = rng.uniform(1.3, 4.0, size=2)
            alpha = np.array([a1, a2])
            tau = TimeSplit(1.0 / a1, 1.0 / a2)
            for z in range(2):
                for k in range(2):
                    try:
                        s = eval_surrogate(co, ch, w, alpha, z, k)
                    except TrustRegionError:
                        continue
                    r = ft_rate(ch, w, tau, z, k)
                    if s > r + 1e-9:
                        violations += 1
    assert violations == 0


def test_eval_surrogate_outside_trust_region_raises():
    ch = make_channel([[[2.0]], [[1.0]]], sigma2=1.0)
    w = np.ones((2, 1, 1), dtype=complex)
    cfg = SystemConfig(num_users_per_zone=1, num_antennas=1)
    co = surrogate_coeffs(ch, w, (2.0, 2.0), cfg)
    with pytest.raises(TrustRegionError):
        eval_surrogate(co, ch, -w, (2.0, 2.0), 0, 0)


def test_surrogate_decreases_with_interference():
    # more interference power at fixed signal -> strictly smaller surrogate
    ch = make_channel([[[1.0, 0.0], [0.0, 1.0]], [[1.0, 0.0], [0.0, 1.0]]], sigma2=1.0)
    cfg = SystemConfig(num_users_per_zone=2, num_antennas=2)
    w = np.zeros((2, 2, 2), dtype=complex)
    w[0, 0] = [1.0, 0.0]
    w[0, 1] = [0.0, 1.0]
    w[1, 0] = [1.0, 0.0]
    w[1, 1] = [0.0, 1.0]
    co = surrogate_coeffs(ch, w, (2.0, 2.0), cfg)
    w_noisy = w.copy()
    w_noisy[0, 1] = [0.4, 1.0]   # user (0,0) now sees interference
    s_clean = eval_surrogate(co, ch, w, (2.0, 2.0), 0, 0)
    s_noisy = eval_surrogate(co, ch, w_noisy, (2.0, 2.0), 0, 0)
    assert s_noisy < s_clean


def test_surrogate_concave_along_segments():
    cfg = SystemConfig(num_users_per_zone=2, num_antennas=3)
    ch = sample_scenario(21, cfg)
    w0 = mf_beams(ch, 0.5)
    co = surrogate_coeffs(ch, w0, (2.0, 2.0), cfg)
    rng = np.random.default_rng(4)
    for _ in range(30):
        wa = w0 * (1.0 + 0.2 * rng.standard_normal(w0.shape))
        wb = w0 * (1.0 + 0.2 * rng.standard_normal(w0.shape))
        aa = np.array(rng.uniform(1.5, 3.0, size=2))
        ab = np.array(rng.uniform(1.5, 3.0, size=2))
        try:
            sa = eval_surrogate(co, ch, wa, aa, 0, 0)
            sb = eval_surrogate(co, ch, wb, ab, 0, 0)
            sm = eval_surrogate(co, ch, 0.5 * (wa + wb), 0.5 * (aa + ab), 0, 0)
        except TrustRegionError:
            continue
        assert sm >= 0.5 * (sa + sb) - 1e-10


def test_conventional_mode_identity():
    # with t_bar = 1 the expansion value is ln(1+d) exactly
    cfg = SystemConfig(num_users_per_zone=2, num_antennas=2)
    ch = sample_scenario(2, cfg)
    w = mf_beams(ch, 0.5)
    co = surrogate_coeffs(ch, w, (1.0, 1.0), cfg, mode="conventional")
    vals = expansion_values(co)
    assert np.allclose(vals, np.log1p(co.sinr), rtol=1e-12)
    ones = np.ones(2)
    for z in range(2):
        for k in range(2):
            s = eval_surrogate(co, ch, w, ones, z, k)
            assert s == pytest.approx(float(np.log1p(co.sinr[z, k])), abs=1e-9)
