"""Optimized WSEE and sum-SE vs fronthaul bits for two fronthaul capacities.

Pass --large-scale for M=32, K_d=K_u=10 (slow: tens of minutes per drop set).
"""
import argparse

from fdcellfree.config import SystemConfig
from fdcellfree.harness import ExperimentSpec, run_experiment

ap = argparse.ArgumentParser()
ap.add_argument("--drops", type=int, default=10)
ap.add_argument("--workers", type=int, default=1)
ap.add_argument("--large-scale", action="store_true")
ap.add_argument("--out", default="wsee_vs_bits.csv")
args = ap.parse_args()

cfg = SystemConfig(drops=args.drops)
if args.large_scale:
    cfg = cfg.replace(**{"geometry.M": 32, "geometry.K_d": 10, "geometry.K_u": 10})
table = run_experiment(ExperimentSpec("wsee_vs_bits", out=args.out, workers=args.workers), cfg)
print("C_fh[Mbps] nu  mean WSEE      mean sum-SE")
for row in table.aggregate:
    if row["drop"] == "mean":
        print(f"{row['c_fh'] / 1e6:9.0f} {row['nu']:3d}  {row['wsee']:.5g}  {row['sum_se']:.4f}")
