import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from netmpc.model import BENCHMARK_X0, benchmark_problem  # noqa: E402
from netmpc.tables import load_or_build  # noqa: E402


@pytest.fixture(scope="session")
def problem():
    return benchmark_problem()


@pytest.fixture(scope="session")
def tables(problem, request):
    # the full build takes about half a minute; keep it in pytest's cache directory
    path = request.config.cache.mkdir("netmpc") / "tables.bin"
    tabs, _ = load_or_build(problem, path, jobs=1)
    return tabs


@pytest.fixture(scope="session")
def x0():
    return np.array(BENCHMARK_X0)


@pytest.fixture(scope="session")
def run_samples(tables, x0):
    """``(h_tilde, dtilde, x_hat, plan)`` from every solved step of five seeded runs."""
    from netmpc.simulate import ExperimentSpec, run_closed_loop

    out = []

    def grab(k, ctrl, data):
        rec = ctrl.records[-1]
        if rec.status == "optimal":
            out.append((rec.h_tilde, frozenset(rec.dtilde), np.array(rec.x_hat), ctrl.plans[k].copy()))

    for seed in range(5):
        run_closed_loop(ExperimentSpec(seed=seed), tables, x0, observer=grab)
    return out


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
