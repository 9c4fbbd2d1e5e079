"""Tag-based publish/subscribe.

Clients subscribe to tags such as ``rpmupdate``; ``notify(tag)`` fans an
event out to every client subscribed at that moment.  Delivery is
at-least-once: events stay queued per client until acknowledged, and are
sent again after a reconnect.  Clients drop duplicates by sequence number.
"""

from __future__ import annotations

import re
import threading
from collections import OrderedDict
from dataclasses import dataclass

from fabsim.errors import FabricError, MalformedTagError, NotifyError, UnknownClientError

_TAG_RE = re.compile(r"\S+\Z")


def check_tag(tag):
    if not isinstance(tag, str) or not _TAG_RE.match(tag):
        raise MalformedTagError(f"malformed tag {tag!r}")
    return tag


@dataclass(frozen=True)
class Subscription:
    client: str
    tag: str
    since: float


@dataclass(frozen=True)
class NotifyEvent:
    tag: str
    seq: int
    issued_at: float


class _ClientQueue:
    def __init__(self):
        self.connected = True
        # (tag, seq) -> event, in issue order; entries stay until acked
        self.unacked = OrderedDict()
        self.sent = set()


class NotifyServer:
    def __init__(self):
        self._subs = {}
        self._seq = {}
        self._queues = {}
        self._lock = threading.Lock()
        self.log = []

    def _queue(self, client):
        q = self._queues.get(client)
        if q is None:
            q = self._queues[client] = _ClientQueue()
        return q

    def subscribe(self, client, tag, now=0.0) -> Subscription:
        check_tag(tag)
        with self._lock:
            sub = self._subs.get((client, tag))
            if sub is None:
                sub = self._subs[(client, tag)] = Subscription(client, tag, now)
            self._queue(client)
            return sub

    def unsubscribe(self, client, tag):
        check_tag(tag)
        with self._lock:
            self._subs.pop((client, tag), None)
            q = self._queues.get(client)
            if q is not None:
                for key in [k for k in q.unacked if k[0] == tag]:
                    del q.unacked[key]
                    q.sent.discard(key)

    def subscriptions(self, client=None):
        return sorted(
            (s for s in self._subs.values() if client is None or s.client == client),
            key=lambda s: (s.client, s.tag),
        )

    def subscribers(self, tag):
        return sorted(c for (c, t) in self._subs if t == tag)

    def notify(self, tag, now=0.0) -> NotifyEvent:
        """Issue the next event for ``tag`` to the current subscribers."""
        check_tag(tag)
        with self._lock:
            seq = self._seq.get(tag, 0) + 1
            self._seq[tag] = seq
            event = NotifyEvent(tag, seq, now)
            targets = sorted(c for (c, t) in self._subs if t == tag)
            for client in targets:
                self._queues[client].unacked[(tag, seq)] = event
            self.log.append((event, tuple(targets)))
            return event

    def last_seq(self, tag):
        return self._seq.get(tag, 0)

    def connect(self, client):
        with self._lock:
            q = self._queue(client)
            q.connected = True
            q.sent.clear()

    def disconnect(self, client):
        with self._lock:
            q = self._queues.get(client)
            if q is None:
                raise UnknownClientError(f"unknown client {client}")
            q.connected = False
            q.sent.clear()

    def is_connected(self, client):
        q = self._queues.get(client)
        return q is not None and q.connected

    def deliver(self, client):
        """Events not yet sent on the current connection, in issue order."""
        with self._lock:
            q = self._queues.get(client)
            if q is None:
                raise UnknownClientError(f"unknown client {client}")
            if not q.connected:
                raise NotifyError(f"{client} is not connected")
            out = [ev for key, ev in q.unacked.items() if key not in q.sent]
            q.sent.update((ev.tag, ev.seq) for ev in out)
            return out

    def ack(self, client, tag, seq):
        """Acknowledge every event on ``tag`` up to and including ``seq``."""
        check_tag(tag)
        with self._lock:
            q = self._queues.get(client)
            if q is None:
                raise UnknownClientError(f"unknown client {client}")
            for key in [k for k in q.unacked if k[0] == tag and k[1] <= seq]:
                del q.unacked[key]
                q.sent.discard(key)

    def pending(self, client):
        q = self._queues.get(client)
        return list(q.unacked.values()) if q else []


class NotifyClient:
    """Client-side duplicate filter: remembers the last seq seen per tag."""

    def __init__(self, name):
        self.name = name
        self.last_seen = {}

    def accept(self, events):
        fresh = []
        for ev in events:
            if ev.seq > self.last_seen.get(ev.tag, 0):
                self.last_seen[ev.tag] = ev.seq
                fresh.append(ev)
        return fresh


class NotifySession:
    """One client's line-protocol session with a NotifyServer.

    Client lines: ``SUB <tag>``, ``UNSUB <tag>``, ``NOTIFY <tag>``,
    ``ACK <tag> <seq>``.  :meth:`push` yields the server's ``EVT <tag> <seq>``
    lines.
    """

    def __init__(self, server: NotifyServer, client: str):
        self.server = server
        self.client = client
        server.connect(client)

    def handle(self, line, now=0.0):
        parts = line.strip().split()
        try:
            if len(parts) == 2 and parts[0] == "SUB":
                self.server.subscribe(self.client, parts[1], now)
                return "OK"
            if len(parts) == 2 and parts[0] == "UNSUB":
                self.server.unsubscribe(self.client, parts[1])
                return "OK"
            if len(parts) == 2 and parts[0] == "NOTIFY":
                ev = self.server.notify(parts[1], now)
                return f"OK {ev.seq}"
            if len(parts) == 3 and parts[0] == "ACK":
                self.server.ack(self.client, parts[1], int(parts[2]))
                return "OK"
        except FabricError as exc:
            return f"ERR {exc.code}"
        except ValueError:
            pass
        return "ERR syntax"

    def push(self):
        return [f"EVT {ev.tag} {ev.seq}" for ev in self.server.deliver(self.client)]

    def close(self):
        self.server.disconnect(self.client)
