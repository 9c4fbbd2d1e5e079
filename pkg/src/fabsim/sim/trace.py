"""Simulation traces and the invariant checks run over them."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

# causes a reconcile may legitimately have; anything else is a violation.
# "operator" is an explicit `fab apply`, never a timer.
RECONCILE_CAUSES = ("install", "rpmupdate", "operator")


def parse_line(line):
    """``t=1.000 ev=assign job=3 host=a`` -> ``{"t": 1.0, "ev": "assign", ...}``."""
    rec = {}
    for part in line.split():
        key, _, value = part.partition("=")
        rec[key] = value
    rec["t"] = float(rec["t"])
    return rec


def check_trace(lines):
    """Return a list of invariant violations found in ``lines``.

    Checked: no assignment to a closed host, no state change caused by an
    alarm, reconciles only from an install, an rpmupdate or an operator, no failed
    reinstall-equivalence checkpoint, no failed request while at most one
    replica of the service is down, and every finished job was running.
    """
    violations = []
    closed = set()
    running = {}
    for lineno, line in enumerate(lines, start=1):
        rec = parse_line(line)
        ev = rec["ev"]
        where = f"line {lineno} (t={rec['t']:.3f})"
        if ev == "host_close":
            closed.add(rec["host"])
        elif ev == "host_open":
            closed.discard(rec["host"])
        elif ev == "assign":
            if rec["host"] in closed:
                violations.append(f"{where}: job {rec['job']} assigned to closed host {rec['host']}")
            if rec["job"] in running:
                violations.append(f"{where}: job {rec['job']} assigned twice")
            running[rec["job"]] = rec["host"]
        elif ev == "job_done":
            if running.pop(rec["job"], None) != rec["host"]:
                violations.append(f"{where}: job {rec['job']} finished on {rec['host']} without running there")
        elif ev == "job_lost":
            running.pop(rec["job"], None)
        elif ev == "phase" and rec.get("cause") == "alarm":
            violations.append(f"{where}: {rec['node']} changed phase because of an alarm")
        elif ev == "reconcile" and rec.get("cause") not in RECONCILE_CAUSES:
            violations.append(f"{where}: reconcile on {rec['node']} with cause {rec.get('cause')}")
        elif ev == "checkpoint" and rec.get("equiv") == "FAIL":
            violations.append(f"{where}: reinstall of {rec['node']} does not reproduce its state")
        elif ev == "request_failed":
            total, up = int(rec["total"]), int(rec["up"])
            if total >= 2 and total - up <= 1:
                violations.append(f"{where}: {rec['service']} request failed with one replica down")
    return violations


@dataclass
class SimTrace:
    lines: list
    violations: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)

    @property
    def ok(self):
        return not self.violations

    def text(self):
        return "".join(line + "\n" for line in self.lines)

    def digest(self):
        return hashlib.sha256(self.text().encode()).hexdigest()

    def events(self, kind=None):
        recs = (parse_line(line) for line in self.lines)
        return [r for r in recs if kind is None or r["ev"] == kind]

    def write(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.text())
