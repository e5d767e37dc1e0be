"""Exact vs enumeration vs MCTS on random single-intersection instances.

Prints how often MCTS hits the optimum and the worst relative gap.
"""

import argparse

import numpy as np

from netcoop.solvers import SolverBudget, solve_exact, solve_mcts
from netcoop.workloads import random_instance

if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--iterations", type=int, default=10_000)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    hits, gaps = 0, []
    for i in range(args.n):
        inst = random_instance(rng, int(rng.integers(1, 9)))
        opt = solve_exact(inst).objective
        got = solve_mcts(inst, SolverBudget(time_limit=None, iterations=args.iterations, seed=i)).objective
        hits += got <= opt + 1e-9
        gaps.append(0.0 if opt == 0 else (got - opt) / opt)
    print(f"optimal on {hits}/{args.n}; within 5% on {sum(g <= 0.05 for g in gaps)}/{args.n}; "
          f"worst gap {max(gaps):.2%}")
