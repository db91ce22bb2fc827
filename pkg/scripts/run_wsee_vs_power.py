"""WSEE of the optimized allocation against EPA1, EPA2 and RPA over transmit power (desk scale)."""
import argparse
import sys

from fdcellfree.config import SystemConfig
from fdcellfree.harness import ExperimentSpec, run_experiment

ap = argparse.ArgumentParser()
ap.add_argument("--drops", type=int, default=10)
ap.add_argument("--workers", type=int, default=1)
ap.add_argument("--out", default="wsee_vs_power.csv")
args = ap.parse_args()

cfg = SystemConfig(drops=args.drops)
table = run_experiment(ExperimentSpec("wsee_vs_power", out=args.out, workers=args.workers), cfg)
for row in table.aggregate:
    if row["drop"] == "mean":
        print(f"{row['p_dbm']:5.1f} dBm {row['allocator']:5s} WSEE {row['wsee']:.4g} bits/J  sum-SE {row['sum_se']:.3f}")
for name, ok, detail in table.checks:
    print(("ok  " if ok else "FAIL"), name, detail)
sys.exit(0 if table.ok else 1)
