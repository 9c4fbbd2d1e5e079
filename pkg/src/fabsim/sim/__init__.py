"""Discrete-event fleet simulation."""

from fabsim.sim.events import EventLoop, SimEvent
from fabsim.sim.fleet import FleetSimulator, run
from fabsim.sim.monitoring import Alarm, MetricSample, Monitoring, Threshold
from fabsim.sim.replicas import ReplicaPool, ServerReplica
from fabsim.sim.scenario import Scenario, load_scenario, parse_scenario
from fabsim.sim.trace import SimTrace, check_trace, parse_line

__all__ = [
    "Alarm",
    "EventLoop",
    "FleetSimulator",
    "MetricSample",
    "Monitoring",
    "ReplicaPool",
    "Scenario",
    "ServerReplica",
    "SimEvent",
    "SimTrace",
    "Threshold",
    "check_trace",
    "load_scenario",
    "parse_line",
    "parse_scenario",
    "run",
]
