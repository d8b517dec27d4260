"""Broadcast medium: unit-disk propagation and a simplified CSMA/CA MAC.

Each node owns a FIFO transmit queue. The head frame waits for the channel
to be idle, then DIFS plus a uniform backoff of ``[0, CW-1]`` slots. If the
channel is sensed busy when that timer expires the attempt counts against
``max_tx_attempts`` and the node defers again. Transmissions that overlap at
a receiver destroy each other there; a node cannot receive while sending.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, replace

import numpy as np

from .simkernel import NS_PER_S, seconds


@dataclass(frozen=True)
class RadioProfile:
    name: str
    range: float  # m
    bitrate: float  # bit/s
    slot: float  # s
    difs: float  # s
    contention_window: int  # slots
    queue_length: int
    max_tx_attempts: int
    phy_header: int  # bits
    mac_header: int  # bits
    tx_power_mw: float
    carrier_ghz: float
    sensitivity_dbm: float

    def airtime(self, frame_bits: int) -> float:
        return (self.phy_header + self.mac_header + frame_bits) / self.bitrate

    def with_overrides(self, **kw) -> "RadioProfile":
        return replace(self, **kw)


PROFILES = {
    "80211n": RadioProfile(
        name="80211n",
        range=200.0,
        bitrate=11.35e6,
        slot=0.0005,
        difs=0.00011,
        contention_window=20,
        queue_length=100,
        max_tx_attempts=14,
        phy_header=128,
        mac_header=256,
        tx_power_mw=158.48,
        carrier_ghz=5.0,
        sensitivity_dbm=-87.0,
    ),
    # queue length and attempt count are not given for 802.11p; reuse 802.11n's
    "80211p": RadioProfile(
        name="80211p",
        range=1000.0,
        bitrate=18e6,
        slot=0.00013,
        difs=0.00032,
        contention_window=15,
        queue_length=100,
        max_tx_attempts=14,
        phy_header=46,
        mac_header=256,
        tx_power_mw=200.0,
        carrier_ghz=5.89,
        sensitivity_dbm=-89.0,
    ),
}


def in_range(a, b, profile: RadioProfile) -> bool:
    ax, ay = (a.x, a.y) if hasattr(a, "longitude") else (a[0], a[1])
    bx, by = (b.x, b.y) if hasattr(b, "longitude") else (b[0], b[1])
    return math.hypot(ax - bx, ay - by) <= profile.range


class Frame:
    """A network-layer PDU handed to the MAC, plus simulator bookkeeping."""

    __slots__ = ("msg", "bits", "sender", "key", "hop", "origin", "enqueued", "meta")

    def __init__(self, msg, bits, sender, key=-1, hop=1, origin=None, meta=None):
        self.msg = msg
        self.bits = bits
        self.sender = sender
        self.key = key
        self.hop = hop
        self.origin = origin
        self.enqueued = 0
        self.meta = meta


class _Tx:
    __slots__ = ("frame", "start", "end", "receivers", "dists", "lost")

    def __init__(self, frame, start, end, receivers, dists):
        self.frame = frame
        self.start = start
        self.end = end
        self.receivers = receivers
        self.dists = dists
        self.lost = None


class _Mac:
    __slots__ = ("queue", "busy", "attempts", "timer")

    def __init__(self):
        self.queue = deque()
        self.busy = False
        self.attempts = 0
        self.timer = None


class Medium:
    """Shared channel for every node of one run.

    ``deliver(receiver_id, frame)`` is called at the end of each successful
    reception. Node positions live in a numpy array that mobility updates.
    """

    def __init__(self, kernel, profile: RadioProfile, rng, deliver=None, log=None, collisions=True, capacity=64):
        self.kernel = kernel
        self.profile = profile
        self.rng = rng
        self.deliver = deliver
        self.log = log
        self.collisions = collisions
        self.pos = np.zeros((capacity, 2))
        self.alive = np.zeros(capacity, dtype=bool)
        self.n = 0
        self._macs = []
        self._rx_until = []
        self._rx_tx = []
        self._tx_until = []
        self._sense_until = []
        self._sense_start = []
        self._r2 = profile.range ** 2
        self._difs = seconds(profile.difs)
        self._slot = seconds(profile.slot)
        self.stats = {"tx": 0, "rx": 0, "collisions": 0, "queue_overflow": 0, "attempts_exhausted": 0, "deferrals": 0}

    # -- node management -----------------------------------------------------

    def add_node(self, x: float, y: float) -> int:
        nid = self.n
        if nid >= len(self.alive):
            cap = 2 * len(self.alive)
            pos = np.zeros((cap, 2))
            pos[:nid] = self.pos[:nid]
            alive = np.zeros(cap, dtype=bool)
            alive[:nid] = self.alive[:nid]
            self.pos, self.alive = pos, alive
        self.pos[nid] = (x, y)
        self.alive[nid] = True
        self.n += 1
        self._macs.append(_Mac())
        self._rx_until.append(0)
        self._rx_tx.append(None)
        self._tx_until.append(0)
        self._sense_until.append(0)
        self._sense_start.append(0)
        return nid

    def move(self, nid: int, x: float, y: float) -> None:
        self.pos[nid, 0] = x
        self.pos[nid, 1] = y

    def remove_node(self, nid: int) -> None:
        self.alive[nid] = False
        mac = self._macs[nid]
        if mac.timer is not None:
            mac.timer.cancel()
            mac.timer = None
        mac.queue.clear()
        mac.busy = False

    def neighbors(self, nid: int):
        d2 = ((self.pos[: self.n] - self.pos[nid]) ** 2).sum(axis=1)
        mask = (d2 <= self._r2) & self.alive[: self.n]
        mask[nid] = False
        return np.nonzero(mask)[0]

    def channel_busy(self, nid: int, t: int = None) -> bool:
        """Carrier sense: a transmission that started before ``t`` is audible."""
        t = self.kernel.now if t is None else t
        return self._sense_until[nid] > t and self._sense_start[nid] < t

    # -- MAC -----------------------------------------------------------------

    def broadcast(self, sender: int, frame: Frame) -> bool:
        """Queue ``frame`` for transmission; False when the queue overflows."""
        if frame.bits <= 0:
            raise ValueError("frame must carry at least one bit")
        if not self.alive[sender]:
            return False
        mac = self._macs[sender]
        now = self.kernel.now
        frame.enqueued = now
        if len(mac.queue) >= self.profile.queue_length:
            self.stats["queue_overflow"] += 1
            if self.log is not None:
                self.log.drop(now, sender, frame.key, "queue_overflow")
            return False
        mac.queue.append(frame)
        if self.log is not None:
            self.log.net_tx(now, sender, frame.key)
        if not mac.busy:
            mac.busy = True
            mac.attempts = 0
            self._contend(sender)
        return True

    def _backoff(self) -> int:
        return self._difs + self.rng.randrange(self.profile.contention_window) * self._slot

    def _contend(self, nid: int):
        now = self.kernel.now
        start = now
        if self.collisions and self.channel_busy(nid, now):
            start = self._sense_until[nid]
        mac = self._macs[nid]
        mac.timer = self.kernel.schedule(start + self._backoff(), self._access, nid, target=nid)

    def _access(self, nid: int):
        mac = self._macs[nid]
        mac.timer = None
        if not self.alive[nid] or not mac.queue:
            mac.busy = False
            return
        now = self.kernel.now
        if self.collisions and self.channel_busy(nid, now):
            mac.attempts += 1
            self.stats["deferrals"] += 1
            if mac.attempts >= self.profile.max_tx_attempts:
                frame = mac.queue.popleft()
                self.stats["attempts_exhausted"] += 1
                if self.log is not None:
                    self.log.drop(now, nid, frame.key, "attempts_exhausted")
                self._next(nid)
                return
            mac.timer = self.kernel.schedule(self._sense_until[nid] + self._backoff(), self._access, nid, target=nid)
            return
        self._transmit(nid, mac.queue.popleft())

    def _next(self, nid: int):
        mac = self._macs[nid]
        mac.attempts = 0
        if mac.queue and self.alive[nid]:
            self._contend(nid)
        else:
            mac.busy = False

    def _transmit(self, nid: int, frame: Frame):
        now = self.kernel.now
        end = now + max(1, int(round(self.profile.airtime(frame.bits) * NS_PER_S)))
        n = self.n
        d2 = ((self.pos[:n] - self.pos[nid]) ** 2).sum(axis=1)
        mask = (d2 <= self._r2) & self.alive[:n]
        mask[nid] = False
        receivers = np.nonzero(mask)[0].tolist()
        dists = None
        if frame.origin is not None and receivers:
            ox, oy = frame.origin
            sub = self.pos[receivers]
            dists = np.hypot(sub[:, 0] - ox, sub[:, 1] - oy).tolist()
        tx = _Tx(frame, now, end, receivers, dists)
        self.stats["tx"] += 1
        sense_until = self._sense_until
        sense_start = self._sense_start
        if self.collisions:
            rx_until = self._rx_until
            rx_tx = self._rx_tx
            tx_until = self._tx_until
            # a node that starts sending loses whatever it was receiving
            if rx_until[nid] > now and rx_tx[nid] is not None:
                self._corrupt(rx_tx[nid], nid)
            tx_until[nid] = end
            for r in receivers:
                if tx_until[r] > now:
                    self._corrupt(tx, r)
                elif rx_until[r] > now:
                    self._corrupt(tx, r)
                    old = rx_tx[r]
                    if old is not None:
                        self._corrupt(old, r)
                if end > rx_until[r]:
                    rx_until[r] = end
                    rx_tx[r] = tx
        for r in receivers:
            if sense_until[r] <= now:
                sense_start[r] = now
            if end > sense_until[r]:
                sense_until[r] = end
        self.kernel.schedule(end, self._finish, nid, tx, target=nid)

    def _corrupt(self, tx: _Tx, r: int):
        if tx.lost is None:
            tx.lost = set()
        if r not in tx.lost:
            tx.lost.add(r)
            self.stats["collisions"] += 1

    def _finish(self, nid: int, tx: _Tx):
        now = self.kernel.now
        frame = tx.frame
        lost = tx.lost
        alive = self.alive
        log = self.log
        deliver = self.deliver
        lat = now - frame.enqueued
        dists = tx.dists
        for i, r in enumerate(tx.receivers):
            if lost is not None and r in lost:
                continue
            if not alive[r]:
                continue
            self.stats["rx"] += 1
            if log is not None:
                log.net_rx(now, r, frame.key, frame.hop, dists[i] if dists is not None else 0.0, lat)
            if deliver is not None:
                deliver(r, frame)
        self._next(nid)
