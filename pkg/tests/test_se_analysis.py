import numpy as np
import pytest
from hypothesis import given, strategies as st

from fdcellfree.allocation import PowerAllocation, baseline_alloc
from fdcellfree.config import SystemConfig
from fdcellfree.fronthaul import IDEAL_QUANTIZER, full_service, quantizer_params
from fdcellfree.scenario import Scenario
from fdcellfree.se_analysis import (build_coefficients, closed_form_moments, ergodic_se_mc, moment_oracle,
                                    se_downlink_lb, se_lower_bounds, se_rows, se_uplink_lb, sinr_dl, sinr_ul)


def _unity(M, K_d, K_u):
    o = lambda *s: np.ones(s)
    return Scenario(o(M, K_d), o(M, K_u), o(K_d, K_u), o(M, M), o(M, K_d), o(M, K_u))


def test_perfect_fronthaul_has_no_ul_distortion(desk_case):
    cfg, scn, smap, _ = desk_case
    assert np.all(build_coefficients(scn, smap, IDEAL_QUANTIZER, cfg).E_ul == 0)


def test_no_ri_gives_zero_ri_coefficients(desk_case):
    cfg, scn, smap, q = desk_case
    cfg = cfg.replace(gamma_ri_db=-np.inf)
    assert np.all(build_coefficients(scn, smap, q, cfg).D_ul == 0)


def test_ul_numerator_unity_example():
    cfg = SystemConfig().replace(**{"geometry.M": 2, "geometry.K_d": 1, "geometry.K_u": 1}, N_r=2)
    q = quantizer_params(2)
    coef = build_coefficients(_unity(2, 1, 1), full_service(2, 1, 1), q, cfg)
    assert coef.A_ul[0] == pytest.approx(16 * q.a_tilde ** 2 * cfg.rho_u, rel=1e-14)


def test_scalar_downlink():
    cfg = SystemConfig().replace(**{"geometry.M": 1, "geometry.K_d": 1, "geometry.K_u": 0}, N_t=1)
    coef = build_coefficients(_unity(1, 1, 0), full_service(1, 1, 0), IDEAL_QUANTIZER, cfg)
    a = PowerAllocation(np.ones((1, 1)), np.zeros(0))
    r = cfg.rho_d
    assert sinr_dl(coef, a)[0] == pytest.approx(r / (r + 1), rel=1e-14)
    assert se_downlink_lb(coef, a, 0) == pytest.approx(cfg.tau_f * np.log2(1 + r / (r + 1)))
    assert se_downlink_lb(coef, PowerAllocation(np.zeros((1, 1)), np.zeros(0)), 0) == 0


def test_scalar_uplink():
    cfg = SystemConfig().replace(**{"geometry.M": 1, "geometry.K_d": 0, "geometry.K_u": 1}, N_r=1)
    coef = build_coefficients(_unity(1, 0, 1), full_service(1, 0, 1), IDEAL_QUANTIZER, cfg)
    r = cfg.rho_u
    # brute force: desired |g|^2 -> (N r gamma)^2 / (r N beta gamma + N gamma)
    assert sinr_ul(coef, PowerAllocation(np.zeros((1, 0)), np.ones(1)))[0] == pytest.approx(r / (r + 1))
    assert se_uplink_lb(coef, PowerAllocation(np.zeros((1, 0)), np.zeros(1)), 0) == 0


def test_ul_decreases_with_interferer(desk_case):
    cfg, scn, smap, q = desk_case
    coef = build_coefficients(scn, smap, q, cfg)
    base = baseline_alloc("EPA1", scn, smap, q, cfg)
    th = base.theta.copy()
    th[1] = 0.5
    low = se_lower_bounds(coef, PowerAllocation(base.c, th)).se_ul
    high = se_lower_bounds(coef, base).se_ul
    assert np.all(high[[0, 2, 3]] < low[[0, 2, 3]])


@given(st.floats(0.01, 1.0))
def test_eta_scaling_matches_rational_form(t):
    cfg = SystemConfig()
    rng = np.random.default_rng(0)
    from fdcellfree.scenario import make_drop
    from fdcellfree.fronthaul import select_aps
    scn = make_drop(cfg, 4)
    smap = select_aps(scn, cfg)
    q = quantizer_params(cfg.nu)
    coef = build_coefficients(scn, smap, q, cfg)
    a = baseline_alloc("RPA", scn, smap, q, cfg, rng)
    scaled = PowerAllocation(a.c * np.sqrt(t), a.theta)
    num = np.sum(coef.A_dl * a.c * smap.serve_dl, axis=0) ** 2
    bterm = np.einsum("kmq,mq->k", coef.B_dl, a.eta * smap.serve_dl)
    expect = t * num / (t * bterm + coef.D_dl @ a.theta + 1)
    assert np.allclose(sinr_dl(coef, scaled), expect, rtol=1e-12)
    assert np.all(sinr_ul(coef, scaled) >= 0)


def test_encoded_denominator_matches_coefficients(small_case):
    cfg, scn, smap, q = small_case
    a = baseline_alloc("RPA", scn, smap, q, cfg, 1)
    dl, ul, enc = closed_form_moments(scn, smap, q, a, cfg)
    coef = build_coefficients(scn, smap, q, cfg)
    c = a.c * smap.serve_dl
    assert np.allclose(dl["BU"] + dl["MUI"] + enc, np.einsum("kmq,mq->k", coef.B_dl, c ** 2), rtol=1e-12)
    assert np.allclose(dl["DS"], np.sum(coef.A_dl * c, axis=0) ** 2, rtol=1e-12)
    assert np.allclose(dl["UDI"], coef.D_dl @ a.theta, rtol=1e-12)
    assert np.allclose(ul["DS"], coef.A_ul * a.theta, rtol=1e-12)
    # the UL bound's denominator is the sum of all non-desired powers
    den = ul["BU"] + ul["MUI"] + ul["RI"] + ul["TQD"] + ul["N"]
    eta = c ** 2
    ref = (coef.B_ul @ a.theta + np.einsum("lik,ik->l", coef.D_ul, eta) + coef.E_ul * a.theta + coef.F_ul)
    assert np.allclose(den, ref, rtol=1e-12)


def test_moment_oracle_examples():
    cfg = SystemConfig().replace(**{"geometry.M": 1, "geometry.K_d": 2, "geometry.K_u": 1}, p_t=1e3)
    scn = _unity(1, 2, 1)
    smap = full_service(1, 2, 1)
    q = quantizer_params(2)
    a = PowerAllocation(np.sqrt(np.full((1, 2), 0.5 / (q.b_tilde * cfg.N_t))), np.ones(1))
    eta = a.eta[0, 0]
    ds = moment_oracle(scn, smap, q, a, "DS", "dl", 0, 100_000, 3, cfg)
    assert ds.closed_form == pytest.approx(q.a_tilde ** 2 * cfg.N_t ** 2 * cfg.rho_d * eta, rel=1e-12)
    assert ds.mc_estimate == pytest.approx(ds.closed_form, rel=0.02)
    bu = moment_oracle(scn, smap, q, a, "BU", "dl", 1, 100_000, 3, cfg)
    assert bu.closed_form == pytest.approx(q.a_tilde ** 2 * cfg.N_t * cfg.rho_d * eta, rel=1e-12)
    assert bu.mc_estimate == pytest.approx(bu.closed_form, rel=0.02)
    with pytest.raises(ValueError):
        moment_oracle(scn, smap, q, a, "RI", "dl", 0, 10, 0, cfg)
    fine = quantizer_params(8)
    tqd = moment_oracle(scn, smap, fine, a, "TQD", "ul", 0, 20_000, 3, cfg)
    assert tqd.closed_form < 1e-3 * moment_oracle(scn, smap, fine, a, "DS", "ul", 0, 10, 3, cfg).closed_form


def test_mc_interference_free_scalar():
    cfg = SystemConfig().replace(**{"geometry.M": 1, "geometry.K_d": 1, "geometry.K_u": 0}, N_t=1)
    scn = _unity(1, 1, 0)
    a = PowerAllocation(np.ones((1, 1)), np.zeros(0))
    rep = ergodic_se_mc(scn, full_service(1, 1, 0), IDEAL_QUANTIZER, a, cfg, 50_000, 1)
    # unnormalized MRT with perfect CSI: SINR = rho |g|^4, |g|^2 ~ Exp(1)
    g2 = np.random.default_rng(2).exponential(size=1_000_000)
    ref = cfg.tau_f * np.mean(np.log2(1 + cfg.rho_d * g2 ** 2))
    assert abs(rep.se_dl[0] - ref) < 4 * rep.stderr_dl[0]


def test_lb_below_ub_on_drops():
    cfg = SystemConfig()
    from fdcellfree.scenario import make_drop
    from fdcellfree.fronthaul import select_aps
    q = quantizer_params(cfg.nu)
    for d in range(20):
        scn = make_drop(cfg, d)
        smap = select_aps(scn, cfg)
        a = baseline_alloc("EPA1", scn, smap, q, cfg)
        lb = se_lower_bounds(build_coefficients(scn, smap, q, cfg), a)
        ub = ergodic_se_mc(scn, smap, q, a, cfg, 400, d)
        assert np.all(lb.se_dl <= ub.se_dl + 3 * ub.stderr_dl)
        assert np.all(lb.se_ul <= ub.se_ul + 3 * ub.stderr_ul)


def test_stderr_scaling(small_case):
    cfg, scn, smap, q = small_case
    a = baseline_alloc("EPA1", scn, smap, q, cfg)
    r1 = ergodic_se_mc(scn, smap, q, a, cfg, 4000, 1)
    r2 = ergodic_se_mc(scn, smap, q, a, cfg, 8000, 2)
    ratio = (r1.sum_stderr / r2.sum_stderr) ** 2
    assert ratio == pytest.approx(2.0, rel=0.2)


def test_csv_rows(small_case):
    cfg, scn, smap, q = small_case
    lb = se_lower_bounds(build_coefficients(scn, smap, q, cfg), baseline_alloc("EPA1", scn, smap, q, cfg))
    lines = se_rows(lb).splitlines()
    assert lines[0] == "ue_id,side,se_lb,se_ub,stderr" and len(lines) == 1 + 3 + 2
