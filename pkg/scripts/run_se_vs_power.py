"""Sum-SE lower bound vs Monte-Carlo upper bound over transmit power, unity large-scale fading.

Usage: python scripts/run_se_vs_power.py [--drops N] [--trials T] [--out PATH]
"""
import argparse
import sys

from fdcellfree.config import SystemConfig
from fdcellfree.harness import ExperimentSpec, run_experiment

ap = argparse.ArgumentParser()
ap.add_argument("--drops", type=int, default=1)
ap.add_argument("--trials", type=int, default=2000)
ap.add_argument("--out", default="se_vs_power.csv")
args = ap.parse_args()

cfg = SystemConfig().replace(**{"geometry.M": 32, "geometry.K_d": 10, "geometry.K_u": 10},
                             unity_fading=True, nu=2, C_fh=10e6, drops=args.drops, mc_trials=args.trials)
table = run_experiment(ExperimentSpec("se_vs_power", out=args.out), cfg)
for name, ok, detail in table.checks:
    print(("ok  " if ok else "FAIL"), name, detail)
print("wrote", args.out)
sys.exit(0 if table.ok else 1)
