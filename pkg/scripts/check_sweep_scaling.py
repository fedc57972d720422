"""
Script to time one Gibbs sweep as the number of time points grows.

The per-point cost of a sweep should stay roughly flat; a cost that climbs
with the grid size points at a neighbor or factor build that is not linear.
"""

import argparse
import os
import sys
import time

import numpy as np
from dotenv import load_dotenv

# Add project root to path
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from dnngp.datagen import DATASET_PRESETS, grid_locations
from dnngp.mcmc import ModelSpec, SamplerConfig, initial_state, update_theta, update_w
from dnngp.spacetime import enumerate_reference
from utils.logging_config import setup_logging

# Load environment variables
load_dotenv()

THETA_NAMES = ("sigma2", "a", "c", "kappa")

def time_sweeps(n_side: int, n_times: int, m: int, scheme: str, sweeps: int, threads: int) -> float:
    """Seconds per (w, theta) sweep on an n_side^2 x n_times grid."""
    preset = DATASET_PRESETS["dataset1"]
    ref = enumerate_reference(grid_locations(n_side, 2), np.linspace(0.0, 1.0, n_times))
    rng = np.random.default_rng(0)
    # responses are noise; only the cost matters here
    x = np.column_stack([np.ones(ref.size), rng.standard_normal(ref.size)])
    y = x @ np.array(preset.beta) + rng.standard_normal(ref.size)
    spec = ModelSpec(ref=ref, x=x, y=y, observed=np.arange(ref.size), theta_priors=preset.priors,
                     scheme=scheme, m=m,
                     initial_theta={k: v for k, v in preset.theta.values().items() if k in THETA_NAMES})
    state = initial_state(spec, SamplerConfig(n_iter=sweeps), chain=0, threads=threads)

    started = time.perf_counter()
    for k in range(1, sweeps + 1):
        state.iteration = k
        update_w(state, spec)
        update_theta(state, spec)
    return (time.perf_counter() - started) / sweeps

def main():
    parser = argparse.ArgumentParser(description="Gibbs sweep cost against grid size")
    parser.add_argument("--n-side", type=int, default=16)
    parser.add_argument("--times", type=int, nargs="+", default=[16, 32])
    parser.add_argument("--m", type=int, default=25)
    parser.add_argument("--scheme", choices=["simple", "adaptive"], default="adaptive")
    parser.add_argument("--sweeps", type=int, default=5)
    parser.add_argument("--threads", type=int, default=1)
    args = parser.parse_args()

    setup_logging("WARNING")
    print(f"🔍 Timing {args.scheme} sweeps with m={args.m} on {args.n_side}x{args.n_side} sites")
    sizes, costs = [], []
    for n_times in args.times:
        seconds = time_sweeps(args.n_side, n_times, args.m, args.scheme, args.sweeps, args.threads)
        r = args.n_side ** 2 * n_times
        sizes.append(r)
        costs.append(seconds)
        print(f"  r={r:>7}: {seconds:.3f}s per sweep, {1e6 * seconds / r:.1f}us per point")

    growth = costs[-1] / costs[0]
    expected = sizes[-1] / sizes[0]
    print()
    if abs(growth / expected - 1.0) <= 0.3:
        print(f"✅ Sweep cost grew {growth:.2f}x for {expected:.1f}x the points")
    else:
        print(f"⚠️ Sweep cost grew {growth:.2f}x for {expected:.1f}x the points; check the neighbor build")

if __name__ == "__main__":
    main()
