import numpy as np
import pytest

from netmpc.channels import NetworkRealization
from netmpc.protocol import (ActuatorPacket, ControllerInbox, ControllerPacket, ProtocolError, SensorPacket,
                             actuator_apply, actuator_packet, decode_packets, encode_packet, sensor_packet)


def _packet(k):
    # three blocks u^(2), u^(1), u^(0) with recognisable values
    return np.array([k + 0.2, -k - 0.2, k + 0.1, -k - 0.1, k + 0.0, -k - 0.0])


def test_actuator_selects_the_block_of_the_age():
    store = {t: _packet(t) for t in range(6)}
    assert np.array_equal(actuator_apply(5, 1, store, 2, 2), [4.1, -4.1])
    assert np.array_equal(actuator_apply(5, 2, store, 2, 2), [3.2, -3.2])
    assert np.array_equal(actuator_apply(1, 2, store, 2, 2), [0.0, 0.0])
    with pytest.raises(ProtocolError):
        actuator_apply(9, 0, store, 2, 2)


def test_sensor_window():
    xs = [np.full(2, t) for t in range(6)]
    pkt = sensor_packet(4, xs, 0, 1)
    assert pkt.first == 3 and len(pkt.states) == 2
    assert sensor_packet(0, xs, 0, 1).first == 0


def test_actuator_packet_empty_before_first_arrival():
    d = [2, 2, 2, 2, 2]
    assert actuator_packet(1, None, d, 1, 3).empty
    pkt = actuator_packet(4, 2, d, 1, 3)
    assert (pkt.first, pkt.ages) == (2, (2, 2, 2))


def _drive(real, steps, n=1):
    xs = [np.array([float(t)]) for t in range(steps + 1)]
    K_d = next(k for k, v in enumerate(real.d_seq) if v <= k)
    sensors = {k: sensor_packet(k, xs, 0, 1) for k in range(steps)}
    acks = {k: actuator_packet(k, K_d if k >= K_d else None, real.d_seq, 1, 3) for k in range(steps)}
    inbox = ControllerInbox()
    return [inbox.receive(k, real.h_seq[k], real.s_seq[k], sensors, acks) and inbox.snapshot()
            for k in range(steps)]


def test_controller_knowledge():
    real = NetworkRealization((2,) * 10, (1,) * 10, (1,) * 10)
    snaps = _drive(real, 8)
    assert snaps[0].K_h is None and not snaps[0].states
    assert sorted(snaps[3].states) == [0, 1, 2]
    # K_s = 1, K_d = 2, K_sd = 3: at k = 2 only the empty acknowledgment is known
    assert snaps[2].kd_exceeds == 1 and not snaps[2].d_hist
    assert snaps[3].K_sd == 3 and snaps[3].d_hist == {2: 2}


def test_information_is_monotone():
    real = NetworkRealization((2, 1, 2, 0, 1, 2, 2, 1, 0, 1), (1, 0, 1, 1, 0, 1, 1, 0, 1, 1),
                              (3, 3, 1, 2, 3, 1, 2, 3, 3, 1))
    snaps = _drive(real, 9)
    for a, b in zip(snaps[:-1], snaps[1:]):
        assert set(a.states) <= set(b.states)
        assert set(a.d_hist.items()) <= set(b.d_hist.items())


def test_binary_round_trip():
    pkts = [SensorPacket(3, 2, (np.array([1.0, 2.0]), np.array([3.0, 4.0]))),
            ControllerPacket(3, np.arange(6.0)),
            ActuatorPacket(3, None, ()),
            ActuatorPacket(4, 2, (1, 0, 2))]
    blob = b"".join(encode_packet(p) for p in pkts)
    back = decode_packets(blob, 2)
    assert back[0].first == 2 and np.array_equal(back[0].states[1], [3.0, 4.0])
    assert np.array_equal(back[1].u_tilde, np.arange(6.0))
    assert back[2].empty and back[3] == pkts[3]
