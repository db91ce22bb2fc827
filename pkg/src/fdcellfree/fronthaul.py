"""Fronthaul quantization constants, capacity limit and AP-UE association."""
from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import ndtr

from .config import SystemConfig
from .scenario import Scenario

MAX_BITS = 8
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class QuantizerParams:
    nu: int | None  # None marks an ideal (unquantized) link
    a_tilde: float
    b_tilde: float
    delta_opt: float

    @property
    def distortion(self) -> float:
        return self.b_tilde - self.a_tilde ** 2


IDEAL_QUANTIZER = QuantizerParams(None, 1.0, 1.0, 0.0)


def _moments(delta: float, nu: int):
    """(E[x h(x)], E[h(x)^2]) for a mid-rise 2^nu-level quantizer, x ~ N(0,1).

    Each cell's contribution is integrated exactly with the normal CDF/PDF.
    """
    half = 2 ** (nu - 1)
    i = np.arange(1, half + 1)
    levels = (i - 0.5) * delta
    lo = (i - 1) * delta
    hi = np.append(i[:-1] * delta, np.inf)
    pdf_lo = np.exp(-0.5 * lo ** 2) * _INV_SQRT_2PI
    pdf_hi = np.where(np.isinf(hi), 0.0, np.exp(-0.5 * np.where(np.isinf(hi), 0.0, hi) ** 2) * _INV_SQRT_2PI)
    prob = ndtr(hi) - ndtr(lo)
    a = 2.0 * np.sum(levels * (pdf_lo - pdf_hi))
    b = 2.0 * np.sum(levels ** 2 * prob)
    return float(a), float(b)


def quantizer_mse(delta: float, nu: int) -> float:
    a, b = _moments(delta, nu)
    return 1.0 - 2.0 * a + b


@functools.lru_cache(maxsize=None)
def quantizer_params(nu: int) -> QuantizerParams:
    """MSE-optimal uniform quantizer for a unit-variance Gaussian input."""
    if isinstance(nu, bool) or int(nu) != nu or not (1 <= nu <= MAX_BITS):
        raise ValueError(f"nu must be an integer in 1..{MAX_BITS}, got {nu!r}")
    nu = int(nu)
    # coarse scan then bounded Brent refinement around the best grid point
    grid = np.linspace(0.005, 3.0, 600)
    mse = [quantizer_mse(d, nu) for d in grid]
    j = int(np.argmin(mse))
    lo, hi = grid[max(j - 1, 0)], grid[min(j + 1, len(grid) - 1)]
    res = minimize_scalar(quantizer_mse, bounds=(lo, hi), args=(nu,), method="bounded",
                          options={"xatol": 1e-10})
    delta = float(res.x)
    a, b = _moments(delta, nu)
    return QuantizerParams(nu, a, b, delta)


def max_ues_per_ap(cfg: SystemConfig, m: int = 0):
    """Per-AP UE limit (K_um_max, K_dm_max) from the fronthaul capacity.

    All APs share C_fh and nu, so ``m`` only documents the per-AP nature.
    """
    if cfg.C_fh <= 0 or cfg.tau_c <= cfg.tau_t or cfg.nu < 1:
        raise ValueError("need C_fh > 0, tau_c > tau_t and nu >= 1")
    kmax = math.floor(cfg.C_fh * cfg.T_c / (4 * (cfg.tau_c - cfg.tau_t) * cfg.nu) + 1e-9)
    return kmax, kmax


def fronthaul_rate(K_dm, K_um, nu_m, cfg: SystemConfig):
    """Fronthaul bit rate of one AP (bits/s); broadcasts over arrays."""
    return 2.0 * nu_m * (np.asarray(K_dm) + np.asarray(K_um)) * (cfg.tau_c - cfg.tau_t) / cfg.T_c


@dataclass(frozen=True)
class ServiceMap:
    serve_dl: np.ndarray  # (M, K_d) bool
    serve_ul: np.ndarray  # (M, K_u) bool

    @property
    def kappa_dm(self):
        return [tuple(np.flatnonzero(r)) for r in self.serve_dl]

    @property
    def kappa_um(self):
        return [tuple(np.flatnonzero(r)) for r in self.serve_ul]

    @property
    def M_dk(self):
        return [tuple(np.flatnonzero(c)) for c in self.serve_dl.T]

    @property
    def M_ul(self):
        return [tuple(np.flatnonzero(c)) for c in self.serve_ul.T]

    @property
    def K_dm(self) -> np.ndarray:
        return self.serve_dl.sum(axis=1)

    @property
    def K_um(self) -> np.ndarray:
        return self.serve_ul.sum(axis=1)

    def dump(self) -> str:
        lines = []
        for m, (d, u) in enumerate(zip(self.kappa_dm, self.kappa_um)):
            lines.append(f"ap{m} dl:{','.join(map(str, d))} ul:{','.join(map(str, u))}")
        return "\n".join(lines) + "\n"


def full_service(M: int, K_d: int, K_u: int) -> ServiceMap:
    return ServiceMap(np.ones((M, K_d), bool), np.ones((M, K_u), bool))


def _greedy(beta: np.ndarray, cap: int) -> np.ndarray:
    M, K = beta.shape
    serve = np.zeros((M, K), bool)
    n = min(K, cap)
    for m in range(M):
        order = np.argsort(-beta[m], kind="stable")
        serve[m, order[:n]] = True
    return serve


def _rescue_orphans(beta: np.ndarray, serve: np.ndarray, side: str) -> None:
    """Attach every UE without a serving AP by evicting a multiply-served UE."""
    M, K = beta.shape
    for k in range(K):
        if serve[:, k].any():
            continue
        placed = False
        for n in np.argsort(-beta[:, k], kind="stable"):
            served = np.flatnonzero(serve[n])
            evictable = [q for q in served if serve[:, q].sum() >= 2]
            if not evictable:
                continue
            # min gain; ties resolved toward the lower index by min()
            victim = min(evictable, key=lambda q: (beta[n, q], q))
            serve[n, victim] = False
            serve[n, k] = True
            placed = True
            break
        if not placed:
            raise RuntimeError(f"cannot attach {side} UE {k}: no evictable UE at any AP")


def select_aps(scn: Scenario, cfg: SystemConfig) -> ServiceMap:
    if cfg.perfect_fronthaul:
        return full_service(scn.M, scn.K_d, scn.K_u)
    cap_u, cap_d = max_ues_per_ap(cfg)
    if cap_u < 1 or cap_d < 1:
        raise ValueError("fronthaul capacity admits no UE per AP")
    serve_dl = _greedy(scn.beta_dl, cap_d)
    serve_ul = _greedy(scn.beta_ul, cap_u)
    _rescue_orphans(scn.beta_dl, serve_dl, "DL")
    _rescue_orphans(scn.beta_ul, serve_ul, "UL")
    return ServiceMap(serve_dl, serve_ul)


def quantizer_for(cfg: SystemConfig) -> QuantizerParams:
    return IDEAL_QUANTIZER if cfg.perfect_fronthaul else quantizer_params(cfg.nu)
