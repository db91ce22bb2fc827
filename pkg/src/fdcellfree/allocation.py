"""Power-control coefficients and the baseline allocators."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .config import SystemConfig
from .fronthaul import QuantizerParams, ServiceMap
from .scenario import Scenario, make_rng


@dataclass(frozen=True)
class PowerAllocation:
    c: np.ndarray  # (M, K_d), c = sqrt(eta)
    theta: np.ndarray  # (K_u,)

    @property
    def eta(self) -> np.ndarray:
        return self.c ** 2

    @classmethod
    def from_eta(cls, eta, theta) -> "PowerAllocation":
        return cls(np.sqrt(np.asarray(eta, float)), np.asarray(theta, float))


def ap_load(alloc: PowerAllocation, scn: Scenario, smap: ServiceMap, q: QuantizerParams, N_t: int) -> np.ndarray:
    """Left side of the per-AP power constraint, scaled so the limit is 1."""
    eta = alloc.eta * smap.serve_dl
    return q.b_tilde * N_t * np.sum(scn.gamma_dl * eta, axis=1)


def check_feasible(alloc: PowerAllocation, scn: Scenario, smap: ServiceMap, q: QuantizerParams,
                   N_t: int, tol: float = 1e-9) -> None:
    if alloc.c.shape != scn.beta_dl.shape or alloc.theta.shape != (scn.K_u,):
        raise ValueError("allocation shape does not match scenario")
    if np.any(alloc.c < 0) or np.any(alloc.theta < -tol) or np.any(alloc.theta > 1 + tol):
        raise ValueError("allocation has negative coefficients or theta outside [0, 1]")
    load = ap_load(alloc, scn, smap, q, N_t)
    if np.any(load > 1 + tol):
        m = int(np.argmax(load))
        raise ValueError(f"AP {m} exceeds its power budget (normalized load {load[m]:.6g})")


def _epa1_eta(scn: Scenario, smap: ServiceMap, q: QuantizerParams, N_t: int) -> np.ndarray:
    served = smap.serve_dl
    tot = np.sum(scn.gamma_dl * served, axis=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(served & (tot > 0), 1.0 / (q.b_tilde * N_t * tot), 0.0)
    return eta


def baseline_alloc(kind: str, scn: Scenario, smap: ServiceMap, q: QuantizerParams,
                   cfg: SystemConfig, seed=None) -> PowerAllocation:
    kind = kind.upper()
    N_t = cfg.N_t
    eta1 = _epa1_eta(scn, smap, q, N_t)
    if kind == "EPA1":
        return PowerAllocation.from_eta(eta1, np.ones(scn.K_u))
    if kind == "EPA2":
        served = smap.serve_dl
        K_dm = served.sum(axis=1, keepdims=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            eta = np.where(served & (scn.gamma_dl > 0), 1.0 / (q.b_tilde * N_t * K_dm * scn.gamma_dl), 0.0)
        return PowerAllocation.from_eta(eta, np.ones(scn.K_u))
    if kind == "RPA":
        rng = make_rng(seed)
        eta = rng.uniform(0.0, 1.0, eta1.shape) * eta1
        theta = rng.uniform(0.0, 1.0, scn.K_u)
        return PowerAllocation.from_eta(eta, theta)
    raise ValueError(f"unknown baseline {kind!r}")


def init_allocation(scn: Scenario, smap: ServiceMap, q: QuantizerParams, cfg: SystemConfig) -> PowerAllocation:
    """SCA starting point: equal DL power over served UEs, full UL power."""
    return baseline_alloc("EPA1", scn, smap, q, cfg)
