"""Per-UE power consumption and weighted-sum energy efficiency."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .allocation import PowerAllocation
from .config import SystemConfig
from .fronthaul import QuantizerParams, ServiceMap, fronthaul_rate
from .scenario import Scenario
from .se_analysis import build_coefficients, se_lower_bounds


@dataclass(frozen=True)
class WSEEReport:
    ee_dl: np.ndarray  # bits/J
    ee_ul: np.ndarray
    wsee: float
    p_dl: np.ndarray  # W
    p_ul: np.ndarray
    se_dl: np.ndarray
    se_ul: np.ndarray
    w_dl: np.ndarray
    w_ul: np.ndarray

    @property
    def sum_se(self) -> float:
        return float(self.se_dl.sum() + self.se_ul.sum())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ue_id", "side", "ee", "power", "weight"])
        for side, ee, p, wt in (("dl", self.ee_dl, self.p_dl, self.w_dl), ("ul", self.ee_ul, self.p_ul, self.w_ul)):
            for i in range(len(ee)):
                w.writerow([i, side, repr(float(ee[i])), repr(float(p[i])), repr(float(wt[i]))])
        w.writerow(["wsee", "", repr(self.wsee), "", ""])
        return buf.getvalue()


def p_fix(cfg: SystemConfig, smap: ServiceMap) -> float:
    """Fixed per-UE share of the network's static and fronthaul power."""
    K = cfg.K
    if K < 1:
        raise ValueError("need at least one UE")
    if cfg.C_fh <= 0:
        raise ValueError("C_fh must be positive")
    pm = cfg.power
    rate = fronthaul_rate(smap.K_dm, smap.K_um, cfg.nu, cfg)
    per_ap = pm.P_0 + (cfg.N_t + cfg.N_r) * pm.P_tc + pm.P_ft * rate / cfg.C_fh
    return float(np.sum(per_ap) / K)


def ue_powers(alloc: PowerAllocation, scn: Scenario, smap: ServiceMap, cfg: SystemConfig):
    pm = cfg.power
    base = p_fix(cfg, smap)
    eta = alloc.eta * smap.serve_dl
    radiated_dl = cfg.N_t * cfg.p_d * np.sum(scn.gamma_dl * eta, axis=0) / pm.alpha_ap
    p_dl = base + radiated_dl + pm.P_tc_dl
    p_ul = base + cfg.p_u * alloc.theta / pm.alpha_ue + pm.P_tc_ul
    return p_dl, p_ul


def ee_from_se(se_dl, se_ul, p_dl, p_ul, cfg: SystemConfig) -> WSEEReport:
    if np.any(np.asarray(p_dl) <= 0) or np.any(np.asarray(p_ul) <= 0):
        raise ValueError("every UE needs positive consumed power")
    B = cfg.power.bandwidth
    w_dl, w_ul = cfg.weights()
    ee_dl = B * np.asarray(se_dl) / p_dl
    ee_ul = B * np.asarray(se_ul) / p_ul
    total = float(np.dot(w_dl, ee_dl) + np.dot(w_ul, ee_ul))
    return WSEEReport(ee_dl, ee_ul, total, np.asarray(p_dl), np.asarray(p_ul),
                      np.asarray(se_dl), np.asarray(se_ul), w_dl, w_ul)


def wsee(alloc: PowerAllocation, scn: Scenario, smap: ServiceMap, q: QuantizerParams,
         cfg: SystemConfig, coef=None) -> WSEEReport:
    coef = build_coefficients(scn, smap, q, cfg) if coef is None else coef
    se = se_lower_bounds(coef, alloc)
    p_dl, p_ul = ue_powers(alloc, scn, smap, cfg)
    return ee_from_se(se.se_dl, se.se_ul, p_dl, p_ul, cfg)
