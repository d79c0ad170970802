"""Time the joint-search kernel of the exhaustive oracle: numba vs numpy.

Usage: python3 benchmarks/bench_oracle.py [--instances N] [--seed S]

Instances are three-vehicle micro-instances with unpruned option tables, so
both kernels scan the full joint space.
"""
import argparse
import time

import numpy as np

from vecsim._jit import HAVE_NUMBA
from vecsim.decision import brute_force_best, enumeration_size, random_micro_instance


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--instances", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    rng = np.random.default_rng(args.seed)
    snaps = []
    while len(snaps) < args.instances:
        s = random_micro_instance(rng, K=3, channels=2)
        if all(t is not None for t in s.tasks):
            snaps.append(s)
    if HAVE_NUMBA:
        brute_force_best(snaps[0], prune=False, use_numba=True)  # compile outside the timing
    print(f"{'instance':>8} {'joints':>10} {'numpy_s':>9} {'numba_s':>9} {'speedup':>8}")
    for i, s in enumerate(snaps):
        t0 = time.perf_counter()
        a = brute_force_best(s, prune=False, use_numba=False)
        t_np = time.perf_counter() - t0
        t_nb = float("nan")
        if HAVE_NUMBA:
            t0 = time.perf_counter()
            b = brute_force_best(s, prune=False, use_numba=True)
            t_nb = time.perf_counter() - t0
            assert a.utility == b.utility, "kernels disagree"
        print(f"{i:>8} {enumeration_size(s):>10} {t_np:>9.3f} {t_nb:>9.3f} {t_np / t_nb:>8.1f}")


if __name__ == "__main__":
    main()
