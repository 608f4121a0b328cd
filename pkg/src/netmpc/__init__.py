"""Stochastic model predictive control over networks with random delays and packet loss."""
from .markov import MarkovChain, validate
from .model import ConfigError, PlantModel, Problem, benchmark_problem, BENCHMARK_X0
from .tables import SynthesisTables, build_tables, load_or_build
from .qp import QPInstance, QPResult, solve
from .simulate import ExperimentSpec, Trace, compare_experiments, run_closed_loop

__all__ = [
    "MarkovChain", "validate", "ConfigError", "PlantModel", "Problem", "benchmark_problem",
    "BENCHMARK_X0", "SynthesisTables", "build_tables", "load_or_build", "QPInstance",
    "QPResult", "solve", "ExperimentSpec", "Trace", "compare_experiments", "run_closed_loop",
]
