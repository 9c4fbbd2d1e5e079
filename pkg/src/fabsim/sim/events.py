"""Deterministic event queue: events run in (time, insertion order)."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from fabsim.errors import FabricError


@dataclass(order=True)
class SimEvent:
    at: float
    seq: int
    kind: str = field(compare=False)
    payload: dict = field(compare=False, default_factory=dict)


class EventLoop:
    def __init__(self, now=0.0):
        self.now = now
        self._heap = []
        self._seq = 0

    def schedule(self, at, kind, **payload):
        if at < self.now:
            raise FabricError(f"cannot schedule {kind} in the past ({at} < {self.now})")
        self._seq += 1
        ev = SimEvent(float(at), self._seq, kind, payload)
        heapq.heappush(self._heap, ev)
        return ev

    def after(self, delay, kind, **payload):
        return self.schedule(self.now + delay, kind, **payload)

    def peek(self):
        return self._heap[0] if self._heap else None

    def pop(self):
        ev = heapq.heappop(self._heap)
        self.now = ev.at
        return ev

    def drop(self, kind):
        """Remove every queued event of ``kind``; returns how many went."""
        keep = [ev for ev in self._heap if ev.kind != kind]
        dropped = len(self._heap) - len(keep)
        heapq.heapify(keep)
        self._heap = keep
        return dropped

    def __len__(self):
        return len(self._heap)

    def run(self, handler, until=float("inf")):
        """Feed events to ``handler`` until the queue drains or passes ``until``."""
        count = 0
        while self._heap and self._heap[0].at <= until:
            handler(self.pop())
            count += 1
        return count
