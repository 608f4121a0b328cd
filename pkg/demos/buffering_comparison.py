"""Stochastic MPC against buffered deterministic MPC with the sensor age held at its maximum.

Writes ``comparison.csv`` and ``comparison.svg`` with the running cost of each run.

    python3 demos/buffering_comparison.py [--tables tables.bin] [--out .]
"""
import argparse
from pathlib import Path

from netmpc import BENCHMARK_X0, benchmark_problem, compare_experiments, load_or_build
from netmpc.simulate import comparison_specs, svg_lines


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--tables", default="tables.bin")
    ap.add_argument("--out", default=".")
    args = ap.parse_args()

    problem = benchmark_problem()
    tables, _ = load_or_build(problem, args.tables)
    rep = compare_experiments(comparison_specs(problem), tables, BENCHMARK_X0)
    out = Path(args.out)
    (out / "comparison.csv").write_text(rep["csv"])
    (out / "comparison.svg").write_text(svg_lines({k: t.J for k, t in rep["traces"].items()}, "running cost"))
    det = rep["traces"]["deterministic"].final_cost
    for name, tr in rep["traces"].items():
        print(f"{name:16s} J = {tr.final_cost:8.2f}  ({100 * (tr.final_cost / det - 1):+.1f}% vs buffered)")


if __name__ == "__main__":
    main()
