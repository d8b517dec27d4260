"""Deterministic discrete-event kernel.

Simulated time is an integer count of nanoseconds. Events fire in
``(time, sequence)`` order, where ``sequence`` is a global insertion counter,
so equal-time events run in the order they were scheduled.
"""
from __future__ import annotations

import hashlib
import heapq
import random

NS_PER_S = 1_000_000_000


def seconds(t: float) -> int:
    """Convert seconds to integer nanoseconds."""
    return int(round(t * NS_PER_S))


def to_seconds(t_ns: int) -> float:
    return t_ns / NS_PER_S


class SchedulingError(RuntimeError):
    pass


class Event:
    __slots__ = ("time", "sequence", "fn", "args", "target", "cancelled")

    def __init__(self, time, sequence, fn, args, target=None):
        self.time = time
        self.sequence = sequence
        self.fn = fn
        self.args = args
        self.target = target
        self.cancelled = False

    def cancel(self):
        self.cancelled = True

    @property
    def kind(self) -> str:
        return getattr(self.fn, "__qualname__", repr(self.fn))

    def __repr__(self):
        return f"Event(t={self.time}, seq={self.sequence}, kind={self.kind}, target={self.target})"


class RandomStreams:
    """Named, independently seeded ``random.Random`` substreams.

    Each stream's seed is derived from ``sha256(master_seed, name)`` so that
    drawing from one concern never perturbs another.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._streams = {}

    def __getitem__(self, name: str) -> random.Random:
        stream = self._streams.get(name)
        if stream is None:
            digest = hashlib.sha256(f"{self.seed}:{name}".encode()).digest()
            stream = random.Random(int.from_bytes(digest[:8], "big"))
            self._streams[name] = stream
        return stream

    get = __getitem__


class Kernel:
    def __init__(self, seed: int = 0, trace: bool = False):
        self.now = 0
        self.streams = RandomStreams(seed)
        self._queue = []
        self._seq = 0
        self.executed = 0
        self.trace = [] if trace else None

    def schedule(self, time: int, fn, *args, target=None) -> Event:
        """Run ``fn(*args)`` at absolute time ``time`` (ns)."""
        if time < self.now:
            raise SchedulingError(f"cannot schedule at {time} ns, clock is at {self.now} ns")
        ev = Event(time, self._seq, fn, args, target)
        self._seq += 1
        heapq.heappush(self._queue, (time, ev.sequence, ev))
        return ev

    def schedule_in(self, delay: int, fn, *args, target=None) -> Event:
        return self.schedule(self.now + delay, fn, *args, target=target)

    @staticmethod
    def cancel(ev: Event) -> None:
        ev.cancelled = True

    def pending(self) -> int:
        return sum(1 for _, _, ev in self._queue if not ev.cancelled)

    def run_until(self, t_end: int) -> None:
        """Execute every event with time <= ``t_end``; leave the clock at ``t_end``."""
        queue = self._queue
        pop = heapq.heappop
        trace = self.trace
        while queue and queue[0][0] <= t_end:
            time, _, ev = pop(queue)
            if ev.cancelled:
                continue
            self.now = time
            self.executed += 1
            if trace is not None:
                trace.append((time, ev.sequence, ev.kind, ev.target))
            ev.fn(*ev.args)
        if t_end > self.now:
            self.now = t_end
