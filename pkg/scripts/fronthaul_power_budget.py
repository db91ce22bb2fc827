"""Fixed per-UE power and served-UE counts vs fronthaul bits, at desk and larger scales.

Explains how the WSEE-vs-bits trend depends on network size: with few UEs per AP the
fronthaul term of the fixed power grows almost linearly in the bit count, with many UEs
per AP the per-AP cap binds and the fronthaul load saturates.
"""
import numpy as np

from fdcellfree.config import SystemConfig
from fdcellfree.fronthaul import max_ues_per_ap, select_aps
from fdcellfree.harness import drop_seeds
from fdcellfree.power_model import p_fix
from fdcellfree.scenario import make_drop

for label, geo in (("desk", {"geometry.M": 8, "geometry.K_d": 4, "geometry.K_u": 4}),
                   ("large", {"geometry.M": 32, "geometry.K_d": 10, "geometry.K_u": 10})):
    for C in (100e6, 10e6):
        for nu in (1, 2, 3, 4):
            cfg = SystemConfig(drops=5).replace(C_fh=C, nu=nu, **geo)
            vals, served = [], []
            for s in drop_seeds(cfg):
                smap = select_aps(make_drop(cfg, s.spawn(2)[0]), cfg)
                vals.append(p_fix(cfg, smap))
                served.append(float(np.mean(smap.K_dm + smap.K_um)))
            print(f"{label:5s} C={C / 1e6:4.0f}Mbps nu={nu} cap={max_ues_per_ap(cfg)[0]:3d} "
                  f"UEs/AP={np.mean(served):5.2f} P_fix={np.mean(vals):.3f} W")
