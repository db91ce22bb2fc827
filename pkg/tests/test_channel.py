import numpy as np
import pytest

from fdcellfree.channel import draw_channels
from fdcellfree.config import SystemConfig
from fdcellfree.scenario import Scenario, make_drop, scenario_from_betas

CFG = SystemConfig().replace(**{"geometry.M": 2, "geometry.K_d": 2, "geometry.K_u": 2})


def _scn():
    bd = np.array([[1.0, 0.5], [0.3, 2.0]])
    bu = np.array([[0.7, 1.2], [0.4, 0.9]])
    return scenario_from_betas(bd, bu, np.full((2, 2), 0.1), np.full((2, 2), 0.2), CFG.replace(p_t=1e-12))


def test_perfect_estimate_has_no_error():
    cfg = CFG
    b = np.ones((2, 2))
    scn = Scenario(b, b, b, b, b.copy(), b.copy())
    ch = draw_channels(scn, cfg, 0, trials=3)
    assert np.all(ch.e_dl == 0) and np.all(ch.e_ul == 0)
    assert np.array_equal(ch.g_dl, ch.g_dl_hat)


def test_rejects_estimate_above_channel():
    b = np.ones((2, 2))
    scn = Scenario(b, b, b, b, 2 * b, b)
    with pytest.raises(ValueError):
        draw_channels(scn, CFG, 0)


def test_moments():
    scn = _scn()
    ch = draw_channels(scn, CFG, 1, trials=100_000)
    Nt, Nr = CFG.N_t, CFG.N_r
    p2 = np.mean(np.sum(np.abs(ch.g_dl_hat) ** 2, axis=-1), axis=0)
    assert np.allclose(p2, Nt * scn.gamma_dl, rtol=0.02)
    # cross-UE UL inner product power
    x = np.einsum("tn,tn->t", ch.g_ul_hat[:, 0, 0].conj(), ch.g_ul[:, 0, 1])
    assert np.mean(np.abs(x) ** 2) == pytest.approx(Nr * scn.gamma_ul[0, 0] * scn.beta_ul[0, 1], rel=0.02)
    p4 = np.mean(np.sum(np.abs(ch.g_dl_hat[:, 1, 1]) ** 2, axis=-1) ** 2)
    assert p4 == pytest.approx(Nt * (Nt + 1) * scn.gamma_dl[1, 1] ** 2, rel=0.03)
    # estimate and error uncorrelated
    c = np.mean(ch.g_dl_hat[:, 0, 1, 0] * ch.e_dl[:, 0, 1, 0].conj())
    scale = np.sqrt(scn.gamma_dl[0, 1] * (scn.beta_dl[0, 1] - scn.gamma_dl[0, 1]))
    assert abs(c) / scale < 5 / np.sqrt(100_000)


def test_reproducible():
    scn = make_drop(CFG, 0)
    a, b = draw_channels(scn, CFG, 9, trials=4), draw_channels(scn, CFG, 9, trials=4)
    assert np.array_equal(a.H_ri, b.H_ri) and np.array_equal(a.h_udi, b.h_udi)
    assert a.H_ri.shape == (4, 2, 2, CFG.N_r, CFG.N_t)
