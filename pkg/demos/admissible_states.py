"""Compute the admissible initial-state polytope and scan the benchmark state along its ray.

    python3 demos/admissible_states.py
"""
import numpy as np

from netmpc import BENCHMARK_X0, benchmark_problem
from netmpc.admissible import admissible_set, is_admissible
from netmpc.tables import lqr_and_terminal


def main():
    problem = benchmark_problem()
    _, terminal = lqr_and_terminal(problem)
    poly = admissible_set(problem, terminal)
    print(f"terminal set: {terminal.M.shape[0]} rows; admissible set: {poly.M.shape[0]} rows")
    x0 = np.asarray(BENCHMARK_X0)
    for scale in (0.0, 0.5, 1.0, 1.5, 2.0, 5.0, 10.0):
        inside, row, val = is_admissible(poly, scale * x0)
        print(f"{scale:5.1f} * x0: {'admissible' if inside else 'outside'} (worst row {row}: {val:+.3f})")
    ray = poly.M @ x0
    print(f"largest admissible multiple of x0: {np.min(poly.n[ray > 0] / ray[ray > 0]):.4f}")


if __name__ == "__main__":
    main()
