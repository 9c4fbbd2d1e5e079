"""Intervention rundown: drain a node, then act on it.

A batch node is closed to new jobs and acted on once its last job ends.
An interactive node stops taking logins and is acted on when its users
are gone or the grace time runs out, whichever comes first.  Each node
runs down on its own, so one long job holds back only its own host and
not the whole cluster.

The coordinator does not own nodes, jobs or monitoring; it drives them
through a :class:`RundownHost` supplied by the caller (the fleet simulator,
or the small standalone model behind :func:`fleet_rundown`).
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field

from fabsim.errors import RundownError

BATCH, INTERACTIVE = "batch", "interactive"
REBOOT, REINSTALL, KERNEL_UPDATE = "reboot", "reinstall", "kernel_update"
ACTIONS = (REBOOT, REINSTALL, KERNEL_UPDATE)

REQUESTED, DRAINING, READY, ACTING, DONE, ABORTED = (
    "requested", "draining", "ready", "acting", "done", "aborted",
)
FINAL = (DONE, ABORTED)


@dataclass(frozen=True)
class RundownPlan:
    node: str
    node_kind: str
    action: str
    grace: float | None = None
    requested_at: float = 0.0

    def __post_init__(self):
        if self.node_kind not in (BATCH, INTERACTIVE):
            raise RundownError(f"unknown node kind {self.node_kind!r}")
        if self.action not in ACTIONS:
            raise RundownError(f"unknown action {self.action!r}")
        if (self.grace is not None) != (self.node_kind == INTERACTIVE):
            raise RundownError("grace is required for interactive nodes and only for them")

    def for_node(self, node, node_kind=None, requested_at=None, grace=None):
        kind = node_kind or self.node_kind
        if kind == INTERACTIVE:
            grace = self.grace if grace is None else grace
            grace = 0.0 if grace is None else grace
        else:
            grace = None
        return RundownPlan(
            node, kind, self.action, grace,
            self.requested_at if requested_at is None else requested_at,
        )


@dataclass
class DrainState:
    plan: RundownPlan
    phase: str = REQUESTED
    blocking_jobs: int = 0
    drained_at: float | None = None
    acting_at: float | None = None
    done_at: float | None = None
    forced_logout: bool = False
    history: list = field(default_factory=list)

    @property
    def node(self):
        return self.plan.node

    @property
    def deadline(self):
        if self.plan.node_kind == INTERACTIVE:
            return self.plan.requested_at + self.plan.grace
        return None


class RundownHost:
    """What the coordinator needs from the world it runs in."""

    def in_production(self, node) -> bool:
        raise NotImplementedError

    def close(self, node, kind):
        """Stop new work: close the batch host or disable logins."""
        raise NotImplementedError

    def reopen(self, node, kind):
        raise NotImplementedError

    def blocking(self, node, kind) -> int:
        """Running jobs (batch) or logged-in users (interactive)."""
        raise NotImplementedError

    def force_logout(self, node):
        pass

    def mute(self, node):
        pass

    def unmute(self, node):
        pass

    def notice(self, node, message, now):
        pass

    def enter_draining(self, node):
        pass

    def leave_draining(self, node):
        """Abort path: the node goes straight back to production."""

    def begin_action(self, node, action, now):
        """Start ``action``; the host calls ``action_done`` when it completes."""
        raise NotImplementedError


class RundownCoordinator:
    """Tracks every node's rundown and decides when actions may start.

    ``max_parallel`` caps simultaneous acting phases.  With
    ``barrier=True`` no node acts until every active rundown is drained,
    which is the wait-for-the-whole-cluster policy kept for comparison.
    """

    def __init__(self, host: RundownHost, max_parallel=None, barrier=False):
        if max_parallel is not None and max_parallel < 1:
            raise RundownError("max_parallel must be >= 1")
        self.host = host
        self.max_parallel = max_parallel
        self.barrier = barrier
        self.states = {}
        self._ready = []
        self._order = 0

    def active(self, node):
        st = self.states.get(node)
        return st if st is not None and st.phase not in FINAL else None

    def start_rundown(self, plan: RundownPlan, now) -> DrainState:
        if self.active(plan.node):
            raise RundownError(f"{plan.node} already has a rundown in progress")
        if not self.host.in_production(plan.node):
            raise RundownError(f"{plan.node} is not in production")
        st = DrainState(plan)
        self.states[plan.node] = st
        self.host.close(plan.node, plan.node_kind)
        self.host.mute(plan.node)
        self.host.enter_draining(plan.node)
        self.host.notice(plan.node, f"rundown requested: {plan.action}", now)
        self._set(st, DRAINING, now)
        self._check(st, now)
        return st

    def _set(self, st, phase, now):
        st.phase = phase
        st.history.append((now, phase))

    def _check(self, st, now):
        st.blocking_jobs = self.host.blocking(st.node, st.plan.node_kind)
        if st.blocking_jobs == 0:
            self._mark_drained(st, now)
        elif st.deadline is not None and now >= st.deadline:
            self.host.force_logout(st.node)
            st.forced_logout = True
            self._mark_drained(st, now)

    def _mark_drained(self, st, now):
        st.drained_at = now
        self._set(st, READY, now)
        self._order += 1
        self._ready.append((self._order, st.node))

    def on_drained(self, node, now) -> DrainState:
        st = self.active(node)
        if st is None or st.phase != DRAINING:
            raise RundownError(f"{node} has no rundown in draining")
        self._mark_drained(st, now)
        self.dispatch(now)
        return st

    def tick(self, now):
        """Re-check draining nodes, then start whatever actions may start."""
        for node in sorted(self.states):
            st = self.states[node]
            if st.phase == DRAINING:
                self._check(st, now)
        self.dispatch(now)

    def dispatch(self, now):
        if self.barrier and any(st.phase == DRAINING for st in self.states.values()):
            return []
        started = []
        acting = sum(1 for st in self.states.values() if st.phase == ACTING)
        while self._ready and (self.max_parallel is None or acting < self.max_parallel):
            _, node = self._ready.pop(0)
            st = self.states[node]
            if st.phase != READY:
                continue
            st.acting_at = now
            self._set(st, ACTING, now)
            acting += 1
            started.append(st)
            self.host.notice(node, f"intervention started: {st.plan.action}", now)
            self.host.begin_action(node, st.plan.action, now)
        return started

    def action_done(self, node, now):
        st = self.active(node)
        if st is None or st.phase != ACTING:
            raise RundownError(f"{node} is not acting")
        self.host.reopen(node, st.plan.node_kind)
        self.host.unmute(node)
        self.host.notice(node, f"intervention done: {st.plan.action}", now)
        st.done_at = now
        self._set(st, DONE, now)
        self.dispatch(now)
        return st

    def abort_rundown(self, node, now):
        st = self.active(node)
        if st is None:
            raise RundownError(f"{node} has no active rundown")
        if st.phase == ACTING:
            raise RundownError(f"{node} is already acting")
        self.host.reopen(node, st.plan.node_kind)
        self.host.unmute(node)
        self.host.leave_draining(node)
        self.host.notice(node, "rundown aborted", now)
        self._set(st, ABORTED, now)
        self._ready = [(o, n) for o, n in self._ready if n != node]
        self.dispatch(now)
        return st

    def cancel(self, node, now):
        """Drop the rundown of a node that failed; it is not reopened."""
        st = self.active(node)
        if st is None:
            return None
        self.host.unmute(node)
        self._set(st, ABORTED, now)
        self._ready = [(o, n) for o, n in self._ready if n != node]
        self.dispatch(now)
        return st

    def next_deadline(self):
        """Earliest grace expiry among draining interactive nodes."""
        times = [
            st.deadline for st in self.states.values()
            if st.phase == DRAINING and st.deadline is not None
        ]
        return min(times) if times else None

    def status_lines(self):
        lines = []
        for node in sorted(self.states):
            st = self.states[node]
            extra = f" blocking={st.blocking_jobs}" if st.phase == DRAINING else ""
            lines.append(f"{node} {st.plan.action} {st.phase}{extra}")
        return lines


# -- standalone drain model ---------------------------------------------------


@dataclass
class NodeRecord:
    node: str
    drained_at: float
    acting_at: float
    done_at: float

    @property
    def lost(self):
        """Node-seconds between going idle and returning to service."""
        return self.done_at - self.drained_at


@dataclass
class RundownSchedule:
    records: dict
    policy: str

    @property
    def finished_at(self):
        return max((r.done_at for r in self.records.values()), default=0.0)

    def lost_node_minutes(self):
        return sum(r.lost for r in self.records.values()) / 60.0


class _ModelHost(RundownHost):
    def __init__(self, drain_times, action_time):
        self.drain_times = drain_times
        self.action_time = action_time
        self.now = 0.0
        self.events = []
        self.closed = set()
        self.coordinator = None

    def in_production(self, node):
        return node not in self.closed

    def close(self, node, kind):
        self.closed.add(node)

    def reopen(self, node, kind):
        self.closed.discard(node)

    def blocking(self, node, kind):
        return 1 if self.now < self.drain_times[node] else 0

    def begin_action(self, node, action, now):
        heapq.heappush(self.events, (now + self.action_time, 1, node))


def fleet_rundown(nodes, plan_template: RundownPlan, max_parallel=None, drain_times=None,
                  action_time=600.0, barrier=False, now=0.0) -> RundownSchedule:
    """Run down ``nodes`` together and return when each was drained and acted on.

    ``drain_times`` maps each node to the time its last job ends (or last
    user leaves); nodes without an entry are idle.  Every node starts
    draining at ``now``; each acts as soon as it is drained unless
    ``barrier`` holds all of them until the slowest one is empty.
    """
    nodes = list(nodes)
    if not nodes:
        raise RundownError("no nodes to run down")
    if len(set(nodes)) != len(nodes):
        raise RundownError("nodes must be distinct")
    drain_times = {n: float((drain_times or {}).get(n, now)) for n in nodes}
    model = _ModelHost(drain_times, action_time)
    model.now = now
    coord = RundownCoordinator(model, max_parallel=max_parallel, barrier=barrier)
    model.coordinator = coord
    for node in nodes:
        st = coord.start_rundown(plan_template.for_node(node, requested_at=now), now)
        wake = drain_times[node]
        if st.deadline is not None:
            wake = min(wake, st.deadline)
        if wake > now:
            heapq.heappush(model.events, (wake, 0, node))
    coord.tick(now)
    while model.events:
        t, kind, node = heapq.heappop(model.events)
        model.now = t
        if kind == 0:
            coord.tick(t)
        else:
            coord.action_done(node, t)
    records = {
        n: NodeRecord(n, st.drained_at, st.acting_at, st.done_at)
        for n, st in coord.states.items()
    }
    return RundownSchedule(records, "barrier" if barrier else "per-node")
