"""
Why one (k, delta) for everyone is a poor choice
================================================

Sweeps a uniform FedPer setting over local steps and compression rates and
prints simulated seconds to the accuracy target for every cell. The gap
between the best and the worst cell is what per-device tuning tries to close.
Takes under a minute on one core.
"""

import argparse
import math

from fedluck import ExperimentConfig, run_grid

parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
parser.add_argument("--out-dir", default="demo_runs/grid")
parser.add_argument("--workers", type=int, default=1)
args = parser.parse_args()

ks = [10, 20, 30, 40, 50, 60]
deltas = [0.001, 0.005, 0.01, 0.05, 0.1, 0.5]
cells = run_grid(ExperimentConfig(), ks, deltas, out_dir=args.out_dir, workers=args.workers)

times = {(c.k, c.delta): c.time_to_target_s if c.time_to_target_s is not None else math.inf for c in cells}
print("k \\ delta " + "".join(f"{d:>9}" for d in deltas))
for k in ks:
    print(f"{k:>9d} " + "".join(f"{times[k, d]:>9.3f}" for d in deltas))

reached = [t for t in times.values() if t < math.inf]
print(f"best {min(reached):.3f} s, worst reached {max(reached):.3f} s, "
      f"spread {max(reached) / min(reached):.1f}x, {len(times) - len(reached)} cells never reach the target")
print(f"grid.csv and heatmap.csv in {args.out_dir}")
