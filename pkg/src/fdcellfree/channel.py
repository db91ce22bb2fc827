"""Small-scale fading draws with MMSE estimate/error split."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .scenario import Scenario, make_rng


@dataclass(frozen=True)
class ChannelRealization:
    """Arrays carry an optional leading trial axis when drawn in batches."""
    g_dl: np.ndarray  # (..., M, K_d, N_t)
    g_ul: np.ndarray  # (..., M, K_u, N_r)
    g_dl_hat: np.ndarray
    g_ul_hat: np.ndarray
    e_dl: np.ndarray
    e_ul: np.ndarray
    h_udi: np.ndarray  # (..., K_d, K_u)
    H_ri: np.ndarray  # (..., M, M, N_r, N_t); block (m, i) maps AP i's output into AP m


def cn(rng: np.random.Generator, var, shape) -> np.ndarray:
    """Circularly symmetric complex Gaussian with per-entry variance ``var``."""
    s = np.sqrt(np.asarray(var, float) / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_channels(scn: Scenario, cfg: SystemConfig, seed, trials: int | None = None) -> ChannelRealization:
    err_dl = scn.beta_dl - scn.gamma_dl
    err_ul = scn.beta_ul - scn.gamma_ul
    if np.any(err_dl < 0) or np.any(err_ul < 0):
        raise ValueError("scenario has estimate variance above channel variance")
    rng = make_rng(seed)
    lead = () if trials is None else (int(trials),)
    M, K_d, K_u = scn.M, scn.K_d, scn.K_u
    Nt, Nr = cfg.N_t, cfg.N_r

    ghat_dl = cn(rng, scn.gamma_dl[..., None], lead + (M, K_d, Nt))
    e_dl = cn(rng, err_dl[..., None], lead + (M, K_d, Nt))
    ghat_ul = cn(rng, scn.gamma_ul[..., None], lead + (M, K_u, Nr))
    e_ul = cn(rng, err_ul[..., None], lead + (M, K_u, Nr))
    h = cn(rng, scn.beta_udi, lead + (K_d, K_u))
    H = cn(rng, (scn.beta_ri * cfg.gamma_ri)[:, :, None, None], lead + (M, M, Nr, Nt))
    return ChannelRealization(
        g_dl=ghat_dl + e_dl, g_ul=ghat_ul + e_ul,
        g_dl_hat=ghat_dl, g_ul_hat=ghat_ul, e_dl=e_dl, e_ul=e_ul,
        h_udi=h, H_ri=H,
    )
