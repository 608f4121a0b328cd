"""Packets exchanged by the sensor, controller and actuator nodes.

The sensor and actuator retransmit a short window of past data in every
packet so that the newest packet to arrive always completes the receiver's
history.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class ProtocolError(RuntimeError):
    pass


@dataclass(frozen=True)
class SensorPacket:
    timestamp: int
    first: int
    states: tuple  # x_first .. x_timestamp


@dataclass(frozen=True)
class ControllerPacket:
    timestamp: int
    u_tilde: np.ndarray  # [u^(d_max); ...; u^(d_min)]


@dataclass(frozen=True)
class ActuatorPacket:
    timestamp: int
    first: int | None
    ages: tuple  # D_first .. D_timestamp; empty before the first arrival

    @property
    def empty(self) -> bool:
        return not self.ages


def sensor_packet(k: int, states: Sequence[np.ndarray], h_min: int, h_max: int) -> SensorPacket:
    """Packet with ``x_t`` for ``t`` in ``[max(0, k - h_max + h_min), k]``."""
    first = max(0, k - h_max + h_min)
    return SensorPacket(k, first, tuple(np.array(states[t]) for t in range(first, k + 1)))


def actuator_packet(k: int, K_d: int | None, d_seq: Sequence[int], s_min: int, s_max: int) -> ActuatorPacket:
    """Acknowledgment with ``D_t`` for ``t`` in ``[max(K_d, k - s_max + s_min), k]``."""
    if K_d is None or k < K_d:
        return ActuatorPacket(k, None, ())
    first = max(K_d, k - s_max + s_min)
    return ActuatorPacket(k, first, tuple(int(d_seq[t]) for t in range(first, k + 1)))


def packet_block(u_tilde: np.ndarray, d: int, d_max: int, m: int) -> np.ndarray:
    """Component ``u^(d)`` of a stacked controller packet."""
    off = (d_max - d) * m
    return u_tilde[off:off + m]


def actuator_apply(k: int, D_k: int, store: Mapping[int, np.ndarray], d_max: int, m: int) -> np.ndarray:
    """Actuating value ``u_k``: block ``D_k`` of the packet sent at ``k - D_k``."""
    t = k - D_k
    if t < 0:
        return np.zeros(m)
    if t not in store:
        raise ProtocolError(f"actuator needs the packet sent at {t} but it is missing")
    return np.array(packet_block(np.asarray(store[t]), D_k, d_max, m))


@dataclass
class DeliveredData:
    """What the controller can know at step ``k``.

    ``states`` holds ``x_t`` for ``t <= k - H_k`` (empty before ``K_h``);
    ``d_hist`` holds ``D_t`` for ``K_d <= t <= k - S_k`` (empty before ``K_sd``);
    ``kd_exceeds`` is ``k - S_k`` while it is known that ``K_d > k - S_k`` and
    no age has been acknowledged yet.
    """

    k: int
    states: dict = field(default_factory=dict)
    h_hist: list = field(default_factory=list)
    s_hist: list = field(default_factory=list)
    K_h: int | None = None
    K_s: int | None = None
    K_sd: int | None = None
    K_d: int | None = None
    d_hist: dict = field(default_factory=dict)
    kd_exceeds: int | None = None

    @property
    def H(self) -> int:
        return self.h_hist[-1]

    @property
    def S(self) -> int:
        return self.s_hist[-1]


class ControllerInbox:
    """Accumulates sensor and acknowledgment packets on the controller side."""

    def __init__(self):
        self.data = DeliveredData(k=-1)

    def receive(self, k: int, H_k: int, S_k: int,
                sensor_log: Mapping[int, SensorPacket],
                ack_log: Mapping[int, ActuatorPacket]) -> DeliveredData:
        if k != self.data.k + 1:
            raise ProtocolError("controller steps must be consecutive")
        d = self.data
        d.k = k
        d.h_hist.append(int(H_k))
        d.s_hist.append(int(S_k))
        t = k - H_k
        if t >= 0:
            pkt = sensor_log[t]
            if d.K_h is None:
                d.K_h = k
            for j, x in enumerate(pkt.states):
                d.states.setdefault(pkt.first + j, x)
            newest = max(d.states)
            if sorted(d.states) != list(range(newest + 1)):
                raise ProtocolError("sensor history has a gap")
        t = k - S_k
        if t >= 0:
            if d.K_s is None:
                d.K_s = k
            ack = ack_log[t]
            if ack.empty:
                if d.K_d is None:
                    d.kd_exceeds = t if d.kd_exceeds is None else max(d.kd_exceeds, t)
            else:
                if d.K_sd is None:
                    d.K_sd = k
                    # the window argument guarantees the first non-empty packet reaches back to K_d
                    d.K_d = ack.first
                for j, a in enumerate(ack.ages):
                    d.d_hist.setdefault(ack.first + j, a)
                d.kd_exceeds = None
                if d.d_hist:
                    lo, hi = min(d.d_hist), max(d.d_hist)
                    if sorted(d.d_hist) != list(range(lo, hi + 1)):
                        raise ProtocolError("acknowledged age history has a gap")
        return d

    def snapshot(self) -> DeliveredData:
        d = self.data
        return DeliveredData(d.k, dict(d.states), list(d.h_hist), list(d.s_hist), d.K_h, d.K_s,
                             d.K_sd, d.K_d, dict(d.d_hist), d.kd_exceeds)


# Binary packet log: header <u16 type, u64 timestamp, u32 count> then count f64, little-endian.
_HEADER = struct.Struct("<HQI")
SENSOR, CONTROLLER, ACTUATOR = 1, 2, 3


def encode_packet(pkt) -> bytes:
    if isinstance(pkt, SensorPacket):
        kind = SENSOR
        payload = [float(pkt.first)] + [float(v) for x in pkt.states for v in np.ravel(x)]
    elif isinstance(pkt, ControllerPacket):
        kind = CONTROLLER
        payload = [float(v) for v in np.ravel(pkt.u_tilde)]
    elif isinstance(pkt, ActuatorPacket):
        kind = ACTUATOR
        payload = [] if pkt.empty else [float(pkt.first)] + [float(a) for a in pkt.ages]
    else:
        raise TypeError(f"not a packet: {pkt!r}")
    return _HEADER.pack(kind, pkt.timestamp, len(payload)) + struct.pack(f"<{len(payload)}d", *payload)


def decode_packets(blob: bytes, n: int):
    """Inverse of `encode_packet` for a concatenated log; ``n`` is the state dimension."""
    out = []
    pos = 0
    while pos < len(blob):
        kind, ts, count = _HEADER.unpack_from(blob, pos)
        pos += _HEADER.size
        vals = np.array(struct.unpack_from(f"<{count}d", blob, pos))
        pos += 8 * count
        if kind == SENSOR:
            first = int(vals[0])
            states = tuple(vals[1:].reshape(-1, n))
            out.append(SensorPacket(int(ts), first, states))
        elif kind == CONTROLLER:
            out.append(ControllerPacket(int(ts), vals))
        elif kind == ACTUATOR:
            if count == 0:
                out.append(ActuatorPacket(int(ts), None, ()))
            else:
                out.append(ActuatorPacket(int(ts), int(vals[0]), tuple(int(a) for a in vals[1:])))
        else:
            raise ProtocolError(f"unknown packet type {kind}")
    return out
