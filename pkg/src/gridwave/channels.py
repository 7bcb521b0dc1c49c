"""Delayed directed communication channels.

Each undirected comm edge ``(a, b)`` owns two directed channels: channel
``2e`` carries a -> b, channel ``2e + 1`` carries b -> a.  What travels on
the wire is the wave-encoded frame; the receiver applies the pairwise
rotation gain and decodes the neighbour values out of the wave using its
own output.  With both directions undelayed, the encode/decode coupling is
an algebraic loop whose explicit solution is used instead.

Transmitted frames are remembered on the integrator's uniform step grid;
delayed reads interpolate linearly, which is exact on affine histories and
second order on smooth ones.  Delays shorter than one step clamp to the
newest sample.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

SQRT2 = np.sqrt(2.0)


def rotate(frame: np.ndarray) -> np.ndarray:
    """Pairwise rotation (a, b) -> (-b, a) applied to each 2-slot block."""
    out = np.empty_like(frame)
    out[..., 0::2] = -frame[..., 1::2]
    out[..., 1::2] = frame[..., 0::2]
    return out


def channel_sign(d: int) -> float:
    """Wave-equation sign of a directed channel (tail-sent: -1, head-sent: +1)."""
    return -1.0 if d % 2 == 0 else 1.0


def encode_send(y_sender: np.ndarray, r_opposite: np.ndarray, d: int) -> np.ndarray:
    """Outgoing frame from the sender's output and its decoded inbound values."""
    if y_sender.shape != r_opposite.shape:
        raise ValueError("frame scheme mismatch")
    return channel_sign(d) / SQRT2 * (r_opposite - y_sender)


def decode_r(s_in: np.ndarray, y_receiver: np.ndarray, d: int) -> np.ndarray:
    """Neighbour values recovered from the received (rotated) frame."""
    return -channel_sign(d) * SQRT2 * s_in - y_receiver


class GridHistory:
    """Ring buffer of vector samples on the uniform step grid.

    Sample ``k`` corresponds to time ``k * h``.  Reads before t = 0 return
    the configured pre-history value; reads beyond the newest sample clamp.
    The capacity only needs to span the largest round-trip delay plus a
    small margin, anything older is unreachable.
    """

    def __init__(self, h: float, width: int, capacity: int,
                 pre_value: Optional[np.ndarray] = None):
        self.h = h
        self.width = width
        self.capacity = int(capacity)
        self.buf = np.zeros((self.capacity, width))
        self.count = 0
        self.pre_value = (
            np.zeros(width) if pre_value is None else np.asarray(pre_value, float)
        )

    def append(self, value: np.ndarray) -> None:
        self.buf[self.count % self.capacity] = value
        self.count += 1

    def read(self, t: float) -> np.ndarray:
        pos = t / self.h
        if pos <= 0.0:
            if self.count == 0 or pos < 0.0:
                return self.pre_value.copy()
        last = self.count - 1
        if pos >= last:
            if self.count == 0:
                return self.pre_value.copy()
            return self.buf[last % self.capacity].copy()
        i0 = int(np.floor(pos))
        w = pos - i0
        oldest = max(0, self.count - self.capacity)
        if i0 < oldest:
            raise IndexError("history underrun: buffer evicted too aggressively")
        a = self.buf[i0 % self.capacity]
        b = self.buf[(i0 + 1) % self.capacity]
        return (1.0 - w) * a + w * b


@dataclass
class Disturbance:
    """Additive per-channel disturbance on received values."""

    kind: str = "none"                 # none | decaying | gaussian
    e: Optional[np.ndarray] = None     # per directed channel, decaying offsets
    power: float = 0.0                 # per-step variance for gaussian

    def value(self, d: int, t: float, draw: float = 0.0) -> float:
        if self.kind == "none":
            return 0.0
        if self.kind == "decaying":
            return 1.0 / (self.e[d] + t)
        if self.kind == "gaussian":
            return draw
        raise ValueError(f"unknown disturbance kind {self.kind!r}")


def make_disturbance(kind: str, n_dir: int, rng: Optional[np.random.Generator],
                     power: float = 0.0) -> Disturbance:
    if kind == "none":
        return Disturbance()
    if kind == "decaying":
        if rng is None:
            raise ValueError("decaying disturbance needs a seeded generator")
        return Disturbance("decaying", e=rng.uniform(0.0, 1.0, size=n_dir))
    if kind == "gaussian":
        if power < 0:
            raise ValueError("noise power must be >= 0")
        return Disturbance("gaussian", power=power)
    raise ValueError(f"unknown disturbance kind {kind!r}")


class ChannelPair:
    """The two directed wave channels of one comm edge.

    Holds the transmitted-frame histories and evaluates, at any time, the
    decoded neighbour values ``r`` at both endpoints along with the frames
    both endpoints would send at that instant.
    """

    def __init__(self, edge_index: int, T_fwd: float, T_bwd: float,
                 h: float, n_slots: int = 2):
        self.e = edge_index
        self.T = (float(T_fwd), float(T_bwd))
        self.n_slots = n_slots
        window = max(self.T) + sum(self.T)
        cap = int(np.ceil(window / h)) + 4
        self.hist = [GridHistory(h, n_slots, cap) for _ in range(2)]

    def receive(self, direction: int, t: float, disturbance: float = 0.0) -> np.ndarray:
        """Delayed, rotated frame arriving at the receiver of a direction."""
        raw = self.hist[direction].read(t - self.T[direction])
        return rotate(raw) + disturbance

    def evaluate(self, t: float, y_tail: np.ndarray, y_head: np.ndarray,
                 dist: tuple[float, float] = (0.0, 0.0)):
        """Return (r_fwd, r_bwd, s_out_fwd, s_out_bwd) at time ``t``.

        ``r_fwd`` is what the head decodes about the tail; ``s_out_*`` are
        the frames each endpoint sends at this instant (what gets appended
        to the histories on commit).
        """
        T_fwd, T_bwd = self.T
        if T_fwd == 0.0 and T_bwd == 0.0:
            s_out_fwd = 0.5 * (rotate(np.full(self.n_slots, dist[0]))
                               + np.full(self.n_slots, dist[1])) \
                + (y_tail - rotate(y_head)) / SQRT2
            s_in_head = rotate(s_out_fwd) + dist[0]
            r_fwd = SQRT2 * s_in_head - y_head
            s_out_bwd = s_in_head - SQRT2 * y_head
            s_in_tail = rotate(s_out_bwd) + dist[1]
            r_bwd = -SQRT2 * s_in_tail - y_tail
        elif T_fwd == 0.0:
            s_in_tail = self.receive(1, t, dist[1])
            s_out_fwd = s_in_tail + SQRT2 * y_tail
            s_in_head = rotate(s_out_fwd) + dist[0]
            r_fwd = SQRT2 * s_in_head - y_head
            s_out_bwd = s_in_head - SQRT2 * y_head
            r_bwd = -SQRT2 * s_in_tail - y_tail
        elif T_bwd == 0.0:
            s_in_head = self.receive(0, t, dist[0])
            s_out_bwd = s_in_head - SQRT2 * y_head
            s_in_tail = rotate(s_out_bwd) + dist[1]
            r_bwd = -SQRT2 * s_in_tail - y_tail
            s_out_fwd = s_in_tail + SQRT2 * y_tail
            r_fwd = SQRT2 * s_in_head - y_head
        else:
            s_in_head = self.receive(0, t, dist[0])
            s_in_tail = self.receive(1, t, dist[1])
            r_fwd = SQRT2 * s_in_head - y_head
            r_bwd = -SQRT2 * s_in_tail - y_tail
            s_out_fwd = s_in_tail + SQRT2 * y_tail
            s_out_bwd = s_in_head - SQRT2 * y_head
        return r_fwd, r_bwd, s_out_fwd, s_out_bwd

    def commit(self, s_out_fwd: np.ndarray, s_out_bwd: np.ndarray) -> None:
        self.hist[0].append(s_out_fwd)
        self.hist[1].append(s_out_bwd)


def raw_delayed_lookup(history: GridHistory, t: float, T: float) -> np.ndarray:
    """Directly transmitted variable: interpolated value at t - T."""
    return history.read(t - T)
