import numpy as np
import pytest

from fdcellfree.allocation import PowerAllocation, ap_load, baseline_alloc, check_feasible, init_allocation
from fdcellfree.fronthaul import ServiceMap
from fdcellfree.scenario import Scenario


def test_epa1_saturates_every_ap(desk_case):
    cfg, scn, smap, q = desk_case
    a = init_allocation(scn, smap, q, cfg)
    assert np.allclose(ap_load(a, scn, smap, q, cfg.N_t), 1.0)
    assert np.all(a.theta == 1.0)


def test_epa2_within_budget(desk_case):
    cfg, scn, smap, q = desk_case
    a = baseline_alloc("EPA2", scn, smap, q, cfg)
    assert np.allclose(ap_load(a, scn, smap, q, cfg.N_t), 1.0)  # K_dm terms of 1/K_dm each


def test_epa2_equals_epa1_when_gains_equal(desk_case):
    cfg, scn, smap, q = desk_case
    g = np.full_like(scn.gamma_dl, 3e-9)
    flat = Scenario(scn.beta_dl, scn.beta_ul, scn.beta_udi, scn.beta_ri, g, scn.gamma_ul)
    a1, a2 = baseline_alloc("EPA1", flat, smap, q, cfg), baseline_alloc("EPA2", flat, smap, q, cfg)
    assert np.allclose(a1.c, a2.c, rtol=1e-12)


def test_single_served_ue_eta():
    g = np.array([[2e-9, 5e-9]])
    scn = Scenario(g, np.ones((1, 1)), np.ones((2, 1)), np.ones((1, 1)), g, np.ones((1, 1)))
    smap = ServiceMap(np.array([[False, True]]), np.ones((1, 1), bool))
    from fdcellfree.config import SystemConfig
    from fdcellfree.fronthaul import quantizer_params
    q = quantizer_params(2)
    cfg = SystemConfig()
    a = init_allocation(scn, smap, q, cfg)
    assert a.eta[0, 0] == 0.0
    assert a.eta[0, 1] == pytest.approx(1 / (q.b_tilde * cfg.N_t * 5e-9))


def test_rpa_feasible(desk_case):
    cfg, scn, smap, q = desk_case
    for s in range(50):
        a = baseline_alloc("RPA", scn, smap, q, cfg, s)
        check_feasible(a, scn, smap, q, cfg.N_t)
        assert np.all((a.theta >= 0) & (a.theta <= 1))


def test_infeasible_detected(desk_case):
    cfg, scn, smap, q = desk_case
    a = init_allocation(scn, smap, q, cfg)
    with pytest.raises(ValueError, match="budget"):
        check_feasible(PowerAllocation(a.c * 1.01, a.theta), scn, smap, q, cfg.N_t)
    with pytest.raises(ValueError):
        baseline_alloc("EPA3", scn, smap, q, cfg)
