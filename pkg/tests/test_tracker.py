import copy

import numpy as np
import pytest

from oracles import brute_force_pk
from netmpc.simulate import ExperimentSpec, run_closed_loop
from netmpc.tables import reachable_dtilde
from netmpc.tracker import InformationState, enumerate_scenarios, h_hat_value, h_tilde_value


def test_anchor_delay():
    assert h_tilde_value(5, 1, 2, None) == 1
    assert h_tilde_value(5, 1, 1, 3) == 0
    assert h_tilde_value(2, 1, 1, 3) == 1


def test_tail_window_length():
    assert h_hat_value(1, 10, 10, 1, 3) == 0
    assert h_hat_value(1, 12, 10, 1, 3) == -2
    assert h_hat_value(0, 9, 10, 1, 3) == 0


def test_scenarios_from_a_single_age(problem):
    sc = enumerate_scenarios(problem.chain, 0, {2})
    assert sc.sequences == ((2, 0), (2, 1), (2, 2))
    assert np.allclose(sc.weights, [0.2, 0.4, 0.4])
    sc = enumerate_scenarios(problem.chain, 1, {0, 1, 2})
    for d in (0, 1, 2):
        assert sum(sc.weights[j] for j in sc.group(d)) == pytest.approx(1.0)


@pytest.fixture(scope="module")
def snapshots(tables, x0):
    snaps = []
    for seed in range(60):
        spec = ExperimentSpec("stochastic", 10, seed)
        real = spec.realization(tables.problem)

        def obs(k, ctrl, data, real=real):
            if data.K_h is not None:
                data = copy.deepcopy(data)    # the inbox keeps mutating its record
                packets = {t: v for t, v in ctrl.packets.items() if t < k}
                snaps.append((InformationState(tables.problem, data, packets), real, packets, data))

        run_closed_loop(spec, tables, x0, real, observer=obs)
    return snaps


def test_pk_matches_exhaustive_posterior(problem, snapshots):
    for st, _, packets, data in snapshots:
        want = brute_force_pk(problem, data, packets)
        assert np.max(np.abs(st.pk - want)) <= 1e-10, st.summary()


def test_realized_ages_are_covered(problem, snapshots):
    family = set(reachable_dtilde(problem.chain))
    for st, real, _, _ in snapshots:
        assert abs(st.pk.sum() - 1.0) <= 1e-10
        assert real.d_seq[st.k - st.h_tilde] in st.dtilde
        window = tuple(real.d_seq[st.k + j] for j in range(-st.h_tilde, problem.d_max))
        assert window in st.scenarios.sequences
        assert st.dtilde in family
        assert st.x_hat.size == problem.n_hat == 21


def test_theta_singleton_by_forward_simulation(problem, snapshots):
    A, B = problem.plant.A, problem.plant.B
    checked = 0
    for st, real, _, _ in snapshots:
        for t in range(0, st.k - st.H):
            th = st.theta(t)
            assert real.d_seq[t] in th
            for d in problem.chain.ages:
                x1 = A @ st.state(t) + B @ st.packet_input(t, d)
                assert (d in th) == bool(np.max(np.abs(x1 - st.state(t + 1))) <= 1e-9)
                checked += 1
    assert checked > 0
