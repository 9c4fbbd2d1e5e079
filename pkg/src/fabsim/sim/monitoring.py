"""Metric sink and operator alarms.

Alarms are records for a human to act on.  Nothing here changes node state.
"""

from __future__ import annotations

import operator
from dataclasses import dataclass

from fabsim.errors import FabricError, UnknownNodeError

_OPS = {">": operator.gt, ">=": operator.ge, "<": operator.lt, "<=": operator.le}


@dataclass(frozen=True)
class MetricSample:
    node: str
    metric: str
    value: float
    at: float


@dataclass
class Alarm:
    node: str
    condition: str
    raised_at: float
    acknowledged: bool = False


@dataclass(frozen=True)
class Threshold:
    metric: str
    op: str
    limit: float

    def __post_init__(self):
        if self.op not in _OPS:
            raise FabricError(f"unknown comparison {self.op!r}")

    def breached(self, value):
        return _OPS[self.op](value, self.limit)

    def __str__(self):
        return f"{self.metric}{self.op}{self.limit:g}"


class Monitoring:
    def __init__(self, nodes=(), thresholds=()):
        self.nodes = set(nodes)
        self.thresholds = list(thresholds)
        self.samples = []
        self.alarms = []
        self.suppressed = []
        self.muted = set()

    def add_node(self, node):
        self.nodes.add(node)

    def _check(self, node):
        if node not in self.nodes:
            raise UnknownNodeError(f"unknown node {node}")

    def mute(self, node):
        self._check(node)
        self.muted.add(node)

    def unmute(self, node):
        self.muted.discard(node)

    def record_metric(self, node, metric, value, at):
        """Append a sample; returns the alarms it raised (possibly none)."""
        self._check(node)
        self.samples.append(MetricSample(node, metric, value, at))
        raised = []
        for th in self.thresholds:
            if th.metric == metric and th.breached(value):
                alarm = self.raise_alarm(node, str(th), at)
                if alarm is not None:
                    raised.append(alarm)
        return raised

    def raise_alarm(self, node, condition, at):
        """Record an alarm, or return None if the node is muted."""
        self._check(node)
        if node in self.muted:
            self.suppressed.append((node, condition, at))
            return None
        alarm = Alarm(node, condition, at)
        self.alarms.append(alarm)
        return alarm

    def acknowledge(self, node=None):
        for a in self.alarms:
            if node is None or a.node == node:
                a.acknowledged = True

    def open_alarms(self):
        return [a for a in self.alarms if not a.acknowledged]
