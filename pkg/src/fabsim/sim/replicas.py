"""Replicated server cluster reached through round-robin name switching."""

from __future__ import annotations

from dataclasses import dataclass, field

from fabsim.errors import AllReplicasDownError, FabricError

SERVICES = ("profiles", "packages", "keys", "notify")


@dataclass
class ServerReplica:
    """One server-cluster node.

    ``alive`` is what the name switch believes; ``up`` is the truth.  They
    differ between a crash and its detection, which is when clients see
    failed requests and retry.
    """

    name: str
    serves: frozenset = frozenset(SERVICES)
    alive: bool = True
    up: bool = True
    handled: int = 0


class ReplicaPool:
    def __init__(self, replicas):
        replicas = list(replicas)
        if not replicas:
            raise FabricError("at least one replica is required")
        self.replicas = {r.name: r for r in replicas}
        self._counters = {}
        self.retries = 0
        self.failures = 0

    def select_replica(self, service, request_index):
        """Round-robin over live replicas that serve ``service``."""
        live = [r for r in self.replicas.values() if service in r.serves and r.alive]
        if not live:
            raise AllReplicasDownError(f"no live replica serves {service}")
        return live[request_index % len(live)]

    def fail(self, name):
        self.replicas[name].up = False

    def mark_dead(self, name):
        self.replicas[name].alive = False

    def restore(self, name):
        r = self.replicas[name]
        r.up = r.alive = True

    def request(self, service, handler, on_retry=None):
        """Call ``handler(replica)`` on the next replica, retrying the others.

        A request that lands on a crashed replica is retried once on each of
        the remaining replicas serving the service.
        """
        total = sum(1 for r in self.replicas.values() if service in r.serves)
        for attempt in range(max(total, 1)):
            index = self._counters.get(service, 0)
            self._counters[service] = index + 1
            try:
                replica = self.select_replica(service, index)
            except AllReplicasDownError:
                self.failures += 1
                raise
            if replica.up:
                replica.handled += 1
                return handler(replica)
            self.retries += 1
            if on_retry is not None:
                on_retry(service, replica.name, attempt)
        self.failures += 1
        raise AllReplicasDownError(f"every replica serving {service} failed")
