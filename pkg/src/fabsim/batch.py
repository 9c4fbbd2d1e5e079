"""Single-cluster batch scheduler with fairshare groups.

Group priority is ``share / (1 + decayed_usage)``.  Usage accrues one unit
per cpu-second a group's running jobs consume and halves every
``half_life`` seconds.  Each tick hands free slots on open hosts to the
highest-priority group that has pending work (FIFO within a group, ties
broken by group name), so capacity is never left idle while work waits,
and groups that are busy converge on their shares.
"""

from __future__ import annotations

import heapq
import math
from collections import Counter, deque
from dataclasses import dataclass, field

from fabsim.errors import BatchError, JobNotPendingError, UnknownGroupError

PENDING, RUNNING, DONE = "pending", "running", "done"

NEW = "new"
NO_OPEN_SLOTS = "no_open_slots"
HOST_CLOSED = "host_closed_for_intervention"
PRIORITY_BELOW = "group_priority_below_others"

DEFAULT_HALF_LIFE = 86400.0
SHARE_TOLERANCE = 1e-9


@dataclass
class ShareGroup:
    name: str
    share: float
    decayed_usage: float = 0.0
    consumed: float = 0.0
    running: int = 0

    def __post_init__(self):
        if not 0 < self.share <= 1:
            raise BatchError(f"share of {self.name} must be in (0, 1]")


@dataclass
class Job:
    id: int
    group: str
    submit_time: float
    runtime: float
    state: str = PENDING
    pending_reason: str = NEW
    host: str | None = None
    start_time: float | None = None
    end_time: float | None = None
    dispatch_tick: int = -1


@dataclass
class HostSlot:
    host: str
    slots: int = 1
    open: bool = True
    up: bool = True
    running: set = field(default_factory=set)

    def __post_init__(self):
        if self.slots < 1:
            raise BatchError(f"{self.host}: slots must be >= 1")

    @property
    def free(self):
        return self.slots - len(self.running)

    @property
    def accepting(self):
        return self.open and self.up and self.free > 0


class Scheduler:
    def __init__(self, shares, half_life=DEFAULT_HALF_LIFE, max_runtime=None, now=0.0):
        """``shares`` maps group name to its fraction; fractions must sum to 1."""
        total = sum(shares.values())
        if abs(total - 1.0) > SHARE_TOLERANCE:
            raise BatchError(f"shares sum to {total}, not 1")
        self.groups = {name: ShareGroup(name, float(s)) for name, s in sorted(shares.items())}
        self.half_life = float(half_life)
        self.max_runtime = max_runtime
        self.hosts = {}
        self.jobs = {}
        self._pending = {name: deque() for name in self.groups}
        self._ends = []
        self._next_id = 1
        self.clock = now
        self.ticks = 0
        self.assignments = []
        self.last_finished = []

    @classmethod
    def normalized(cls, weights, **kwargs):
        total = float(sum(weights.values()))
        return cls({k: v / total for k, v in weights.items()}, **kwargs)

    # -- hosts -------------------------------------------------------------

    def add_host(self, host, slots=1, open=True):
        if host in self.hosts:
            raise BatchError(f"host {host} already exists")
        self.hosts[host] = HostSlot(host, slots, open)
        return self.hosts[host]

    def close_host(self, host):
        """No new jobs land on ``host``; running jobs continue."""
        self._host(host).open = False

    def open_host(self, host):
        self._host(host).open = True

    def host_down(self, host, now):
        """Mark ``host`` failed; its running jobs go back to pending."""
        self.advance(now)
        h = self._host(host)
        h.up = False
        lost = []
        for job_id in sorted(h.running):
            job = self.jobs[job_id]
            self.groups[job.group].running -= 1
            job.state, job.pending_reason = PENDING, NEW
            job.host = job.start_time = job.end_time = None
            self._requeue(job)
            lost.append(job)
        h.running.clear()
        return lost

    def host_up(self, host):
        self._host(host).up = True

    def running_jobs(self, host):
        return len(self._host(host).running)

    def _host(self, host):
        try:
            return self.hosts[host]
        except KeyError:
            raise BatchError(f"unknown host {host}") from None

    def _requeue(self, job):
        q = self._pending[job.group]
        idx = 0
        for idx, other in enumerate(q):
            if other.id > job.id:
                break
        else:
            idx = len(q)
        q.insert(idx, job)

    # -- jobs --------------------------------------------------------------

    def submit(self, group, runtime, now=None, job_id=None):
        if group not in self.groups:
            raise UnknownGroupError(f"unknown group {group!r}")
        if runtime < 0:
            raise BatchError("runtime must be >= 0")
        if self.max_runtime is not None and runtime > self.max_runtime:
            raise BatchError(f"runtime {runtime} exceeds the limit {self.max_runtime}")
        now = self.clock if now is None else now
        if job_id is None:
            job_id = self._next_id
        if job_id in self.jobs:
            raise BatchError(f"duplicate job id {job_id}")
        self._next_id = max(self._next_id, job_id + 1)
        job = Job(job_id, group, now, runtime)
        self.jobs[job_id] = job
        self._pending[group].append(job)
        return job_id

    def pending_reason(self, job_id):
        job = self.jobs[job_id]
        if job.state != PENDING:
            raise JobNotPendingError(f"job {job_id} is {job.state}")
        return job.pending_reason

    def counts(self):
        c = Counter(j.state for j in self.jobs.values())
        return {PENDING: c[PENDING], RUNNING: c[RUNNING], DONE: c[DONE]}

    # -- fairshare ---------------------------------------------------------

    def advance(self, now):
        """Decay and accrue group usage up to ``now``."""
        dt = now - self.clock
        if dt < 0:
            raise BatchError(f"time went backwards: {now} < {self.clock}")
        if dt == 0:
            return
        decay = 2.0 ** (-dt / self.half_life)
        accrual = self.half_life / math.log(2) * (1.0 - decay)
        for g in self.groups.values():
            g.decayed_usage = g.decayed_usage * decay + g.running * accrual
            g.consumed += g.running * dt
        self.clock = now

    def priority(self, group, now=None):
        if group not in self.groups:
            raise UnknownGroupError(f"unknown group {group!r}")
        if now is not None and now != self.clock:
            self.advance(now)
        g = self.groups[group]
        return g.share / (1.0 + g.decayed_usage)

    def _ranked(self, names):
        return sorted(names, key=lambda n: (-self.priority(n), n))

    # -- ticks -------------------------------------------------------------

    def schedule_tick(self, now):
        """Finish due jobs, then fill free open slots by group priority."""
        self.advance(now)
        self.ticks += 1
        self.last_finished = []
        while self._ends and self._ends[0][0] <= now:
            end, job_id = self._ends[0]
            job = self.jobs[job_id]
            if job.state != RUNNING or job.end_time != end:
                heapq.heappop(self._ends)
                continue
            heapq.heappop(self._ends)
            self._finish(job)

        waiting = [n for n in self.groups if self._pending[n]]
        if not waiting:
            return []
        ranking = self._ranked(waiting)
        free_hosts = [h for h in sorted(self.hosts.values(), key=lambda h: h.host) if h.accepting]
        out = []
        for name in ranking:
            q = self._pending[name]
            while q and free_hosts:
                host = free_hosts[0]
                job = q.popleft()
                self._start(job, host, now)
                out.append((job, host.host))
                if not host.accepting:
                    free_hosts.pop(0)
            if not free_hosts:
                break
        self._explain(ranking)
        self.assignments.extend((now, job.id, host) for job, host in out)
        return out

    def _start(self, job, host, now):
        job.state = RUNNING
        job.host = host.host
        job.start_time = now
        job.end_time = now + job.runtime
        job.dispatch_tick = self.ticks
        host.running.add(job.id)
        self.groups[job.group].running += 1
        heapq.heappush(self._ends, (job.end_time, job.id))

    def _finish(self, job):
        self.last_finished.append(job)
        job.state = DONE
        self.hosts[job.host].running.discard(job.id)
        self.groups[job.group].running -= 1

    def _explain(self, ranking):
        live = [h for h in self.hosts.values() if h.up]
        if not any(h.open for h in live):
            top_reason = HOST_CLOSED if self.hosts else NO_OPEN_SLOTS
            for name in ranking:
                for job in self._pending[name]:
                    job.pending_reason = top_reason
            return
        closed_idle = any(not h.open and h.free > 0 for h in live)
        top_reason = HOST_CLOSED if closed_idle else NO_OPEN_SLOTS
        for i, name in enumerate(ranking):
            reason = top_reason if i == 0 else PRIORITY_BELOW
            for job in self._pending[name]:
                job.pending_reason = reason

    def next_completion(self):
        """Earliest end time of a running job, or None."""
        while self._ends:
            end, job_id = self._ends[0]
            job = self.jobs[job_id]
            if job.state == RUNNING and job.end_time == end:
                return end
            heapq.heappop(self._ends)
        return None

    def idle_with_pending(self):
        """True if a free open slot coexists with a pending job."""
        has_pending = any(self._pending[n] for n in self.groups)
        return has_pending and any(h.accepting for h in self.hosts.values())

    # -- reporting ---------------------------------------------------------

    def usage_fractions(self):
        total = sum(g.consumed for g in self.groups.values())
        if total == 0:
            return {n: 0.0 for n in self.groups}
        return {n: g.consumed / total for n, g in self.groups.items()}

    def report(self):
        """Per-group cpu-time shares and pending-reason histogram as text."""
        fractions = self.usage_fractions()
        lines = [f"{'group':<12} {'share':>7} {'cpu_seconds':>14} {'fraction':>9} {'pending':>8} {'running':>8}"]
        for name, g in self.groups.items():
            pending = len(self._pending[name])
            lines.append(
                f"{name:<12} {g.share:>7.3f} {g.consumed:>14.1f} {fractions[name]:>9.4f} {pending:>8d} {g.running:>8d}"
            )
        hist = Counter(j.pending_reason for j in self.jobs.values() if j.state == PENDING)
        lines.append("")
        lines.append(f"{'pending_reason':<32} {'jobs':>6}")
        for reason in sorted(hist):
            lines.append(f"{reason:<32} {hist[reason]:>6d}")
        return "\n".join(lines) + "\n"


def parse_workload(text):
    """Workload lines ``submit <t> <group> <runtime>`` -> list of tuples."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4 or parts[0] != "submit":
            raise BatchError(f"line {lineno}: expected 'submit <t> <group> <runtime>'")
        try:
            out.append((float(parts[1]), parts[2], float(parts[3])))
        except ValueError:
            raise BatchError(f"line {lineno}: bad number") from None
    return sorted(out, key=lambda s: s[0])


def simulate(scheduler, submissions, until, on_tick=None):
    """Drive ``scheduler`` through ``submissions`` up to time ``until``.

    Ticks happen at every submission time and every job end.  ``on_tick``
    is called as ``on_tick(now, assignments)`` after each tick.
    """
    subs = deque(sorted(submissions, key=lambda s: s[0]))
    now = scheduler.clock
    while True:
        candidates = []
        if subs:
            candidates.append(subs[0][0])
        nxt = scheduler.next_completion()
        if nxt is not None:
            candidates.append(nxt)
        if not candidates:
            break
        now = max(min(candidates), now)
        if now > until:
            break
        while subs and subs[0][0] <= now:
            t, group, runtime = subs.popleft()
            scheduler.submit(group, runtime, now)
        assigned = scheduler.schedule_tick(now)
        if on_tick is not None:
            on_tick(now, assigned)
    if math.isfinite(until):
        scheduler.advance(max(until, scheduler.clock))
    return scheduler
