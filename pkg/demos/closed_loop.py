"""Run the stochastic MPC on the benchmark loop for a few seeds and print a summary.

    python3 demos/closed_loop.py [--seeds 5] [--tables tables.bin]
"""
import argparse

import numpy as np

from netmpc import BENCHMARK_X0, ExperimentSpec, benchmark_problem, load_or_build, run_closed_loop


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--tables", default="tables.bin")
    args = ap.parse_args()

    tables, hit = load_or_build(benchmark_problem(), args.tables)
    print(f"tables {'loaded' if hit else 'built'}: {tables.sizes()}")
    for seed in range(args.seeds):
        tr = run_closed_loop(ExperimentSpec("stochastic", 60, seed), tables, BENCHMARK_X0)
        print(f"seed {seed}: J = {tr.final_cost:9.2f}  violations = {len(tr.violations)}  "
              f"|x_60| = {np.max(np.abs(tr.x[-1])):.1e}  ages D = {''.join(map(str, tr.D[:20]))}...")


if __name__ == "__main__":
    main()
