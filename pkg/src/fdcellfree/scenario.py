"""Network drops on a wrap-around square and their large-scale fading."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from .config import ConfigError, GeometryConfig, PathLossParams, SystemConfig, db_to_lin


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def spawn_seeds(seed, n: int):
    """Independent child seed sequences derived from ``seed``.

    Unlike ``SeedSequence.spawn`` this does not advance the parent, so the same
    seed always yields the same children (same drop at every sweep point).
    """
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return [np.random.SeedSequence(ss.entropy, spawn_key=ss.spawn_key + (ss.n_children_spawned + i,),
                                   pool_size=ss.pool_size) for i in range(n)]


@dataclass(frozen=True)
class Layout:
    D: float
    ap: np.ndarray  # (M, 2) km
    ue_dl: np.ndarray  # (K_d, 2)
    ue_ul: np.ndarray  # (K_u, 2)


@dataclass(frozen=True)
class Scenario:
    beta_dl: np.ndarray  # (M, K_d)
    beta_ul: np.ndarray  # (M, K_u)
    beta_udi: np.ndarray  # (K_d, K_u)
    beta_ri: np.ndarray  # (M, M)
    gamma_dl: np.ndarray
    gamma_ul: np.ndarray
    layout: Layout | None = None

    @property
    def M(self) -> int:
        return self.beta_dl.shape[0]

    @property
    def K_d(self) -> int:
        return self.beta_dl.shape[1]

    @property
    def K_u(self) -> int:
        return self.beta_ul.shape[1]


def place_network(geom: GeometryConfig, seed) -> Layout:
    rng = make_rng(seed)
    pts = rng.uniform(0.0, geom.D, size=(geom.M + geom.K_d + geom.K_u, 2))
    # uniform() may return the upper end after rounding; keep [0, D)
    pts = np.where(pts >= geom.D, 0.0, pts)
    M, K_d = geom.M, geom.K_d
    return Layout(geom.D, pts[:M], pts[M:M + K_d], pts[M + K_d:])


def wrapped_distance(a, b, D: float):
    """Torus distance; broadcasts over leading dimensions of ``a`` and ``b``."""
    delta = np.abs(np.asarray(a, float) - np.asarray(b, float))
    delta = np.minimum(delta, D - delta)
    return np.sqrt(np.sum(delta ** 2, axis=-1))


def pairwise_wrapped(a: np.ndarray, b: np.ndarray, D: float) -> np.ndarray:
    return wrapped_distance(a[:, None, :], b[None, :, :], D)


def path_loss_db(d, p: PathLossParams, L: float | None = None):
    """Three-slope path loss in dB (non-positive) at distance ``d`` km."""
    L = p.attenuation_db() if L is None else L
    d = np.asarray(d, float)
    d0, d1 = p.d0 / 1000.0, p.d1 / 1000.0
    far = -L - 35.0 * np.log10(np.maximum(d, d1))
    mid = -L - 15.0 * np.log10(d1) - 20.0 * np.log10(np.clip(d, d0, d1))
    near = -L - 15.0 * np.log10(d1) - 20.0 * np.log10(d0)
    return np.where(d > d1, far, np.where(d > d0, mid, near))


def _correlated_field(points: np.ndarray, D: float, d_decorr_km: float, rng) -> np.ndarray:
    n = len(points)
    if n == 0:
        return np.zeros(0)
    dist = pairwise_wrapped(points, points, D)
    cov = 2.0 ** (-dist / d_decorr_km)
    # exponential kernel on a torus is not guaranteed PSD; clip eigenvalues
    w, V = np.linalg.eigh(cov)
    root = V * np.sqrt(np.clip(w, 0.0, None))
    return root @ rng.standard_normal(n)


def correlated_shadowing(layout: Layout, p: PathLossParams, seed):
    """Two-component shadowing terms (z_dl (M,K_d), z_ul (M,K_u)).

    z = sqrt(delta) a_m + sqrt(1-delta) b_k with a, b spatially correlated unit
    Gaussian fields. One AP field and one UE field (over DL and UL UEs jointly).
    """
    rng = make_rng(seed)
    dc = p.d_decorr / 1000.0
    a = _correlated_field(layout.ap, layout.D, dc, rng)
    ues = np.vstack([layout.ue_dl, layout.ue_ul]) if len(layout.ue_dl) + len(layout.ue_ul) else np.zeros((0, 2))
    b = _correlated_field(ues, layout.D, dc, rng)
    K_d = len(layout.ue_dl)
    sd, su = np.sqrt(p.delta), np.sqrt(1.0 - p.delta)
    z_dl = sd * a[:, None] + su * b[None, :K_d]
    z_ul = sd * a[:, None] + su * b[None, K_d:]
    return z_dl, z_ul


def estimate_quality(beta, tau_t: int, rho_t: float):
    """MMSE estimate variance tau rho beta^2 / (tau rho beta + 1)."""
    beta = np.asarray(beta, float)
    x = tau_t * rho_t * beta
    return x * beta / (x + 1.0)


def _check_pilots(cfg: SystemConfig):
    if not cfg.rho_t > 0:
        raise ConfigError("pilot SNR rho_t must be positive")
    if cfg.tau_t_dl <= 0 or cfg.tau_t_ul <= 0:
        raise ConfigError("pilot lengths must be positive")


def build_scenario(layout: Layout, p: PathLossParams, cfg: SystemConfig, seed) -> Scenario:
    _check_pilots(cfg)
    rng = make_rng(seed)
    D = layout.D
    z_dl, z_ul = correlated_shadowing(layout, p, rng)
    sig = p.sigma_sd

    def beta(dist, z, L=None):
        return db_to_lin(path_loss_db(dist, p, L)) * 10.0 ** (sig * z / 10.0)

    beta_dl = beta(pairwise_wrapped(layout.ap, layout.ue_dl, D), z_dl)
    beta_ul = beta(pairwise_wrapped(layout.ap, layout.ue_ul, D), z_ul)

    # UE-UE links: UE antenna height on both ends, independent shadowing
    L_ue = dataclasses.replace(p, h_ap=p.h_ue).attenuation_db()
    d_uu = pairwise_wrapped(layout.ue_dl, layout.ue_ul, D)
    beta_udi = beta(d_uu, rng.standard_normal(d_uu.shape), L_ue)

    M = len(layout.ap)
    d_aa = pairwise_wrapped(layout.ap, layout.ap, D)
    z_aa = np.triu(rng.standard_normal((M, M)), 1)
    z_aa = z_aa + z_aa.T
    beta_ri = beta(d_aa, z_aa)
    np.fill_diagonal(beta_ri, db_to_lin(cfg.pl_ri_db))

    return Scenario(
        beta_dl=beta_dl, beta_ul=beta_ul, beta_udi=beta_udi, beta_ri=beta_ri,
        gamma_dl=estimate_quality(beta_dl, cfg.tau_t_dl, cfg.rho_t),
        gamma_ul=estimate_quality(beta_ul, cfg.tau_t_ul, cfg.rho_t),
        layout=layout,
    )


def scenario_from_betas(beta_dl, beta_ul, beta_udi, beta_ri, cfg: SystemConfig, layout=None) -> Scenario:
    """Scenario from explicit large-scale coefficients (estimates via MMSE law)."""
    _check_pilots(cfg)
    beta_dl = np.asarray(beta_dl, float)
    beta_ul = np.asarray(beta_ul, float)
    return Scenario(
        beta_dl=beta_dl, beta_ul=beta_ul,
        beta_udi=np.asarray(beta_udi, float), beta_ri=np.asarray(beta_ri, float),
        gamma_dl=estimate_quality(beta_dl, cfg.tau_t_dl, cfg.rho_t),
        gamma_ul=estimate_quality(beta_ul, cfg.tau_t_ul, cfg.rho_t),
        layout=layout,
    )


def make_drop(cfg: SystemConfig, seed) -> Scenario:
    """One drop: placement and shadowing from independent child streams.

    With ``cfg.unity_fading`` the AP-UE coefficients are overridden to 1 while
    the UE-UE and AP-AP terms keep their geometric values.
    """
    s_layout, s_shadow = spawn_seeds(seed, 2)
    layout = place_network(cfg.geometry, s_layout)
    scn = build_scenario(layout, cfg.pathloss, cfg, s_shadow)
    if cfg.unity_fading:
        ones_d = np.ones_like(scn.beta_dl)
        ones_u = np.ones_like(scn.beta_ul)
        scn = scenario_from_betas(ones_d, ones_u, scn.beta_udi, scn.beta_ri, cfg, layout)
    return scn
