"""
How the convergence factor picks local steps and compression
=============================================================

Every device pays ``k*alpha`` seconds to train and ``delta*beta`` seconds to
upload. The factor ``phi(k, delta)`` rewards more local work and denser
uploads, but penalises cycles much longer than one aggregation period. This
script prints where the minimum sits for a fast and a slow uplink.
"""

import argparse

import numpy as np

from fedluck import OptimizerBounds, optimize_params, phi

parser = argparse.ArgumentParser(description=__doc__.splitlines()[1])
parser.add_argument("--alpha", type=float, default=0.01, help="seconds per local step")
parser.add_argument("--period", type=float, default=1.0, help="aggregation period in seconds")
args = parser.parse_args()

bounds = OptimizerBounds(10, 60, 0.001, 0.5, args.period)
ks = np.arange(bounds.k_min, bounds.k_max + 1, 10)
deltas = np.geomspace(bounds.delta_min, bounds.delta_max, 6)

for beta in (0.5, 8.0):
    print(f"\nbeta = {beta} s per dense upload, alpha = {args.alpha} s per step")
    print("k \\ delta " + "".join(f"{d:>10.4f}" for d in deltas))
    for k in ks:
        print(f"{k:>9d} " + "".join(f"{phi(int(k), float(d), args.alpha, beta, args.period):>10.3f}" for d in deltas))
    k_best, d_best = optimize_params(args.alpha, beta, bounds)
    cycle = k_best * args.alpha + d_best * beta
    print(f"optimum: k = {k_best}, delta = {d_best:.4f}, cycle = {cycle:.3f} s")

# A slow uplink pushes the optimum towards sparser uploads, so the cycle
# stays close to the period instead of piling up staleness.
