"""Randomized operation schedules checked against small independent models.

Each runner takes a ``random.Random`` and returns a list of violation
strings (empty when the schedule behaved).  Unit tests drive them through
hypothesis; the acceptance suite runs them over many seeds.
"""

from fabsim.bootstrap import KeyServer, decrypt_secret
from fabsim.errors import BootstrapError, FabricError
from fabsim.notify import NotifyClient, NotifyServer, NotifySession


def run_key_schedule(rng, nodes=("n1", "n2"), steps=60):
    server = KeyServer()
    now = 0.0
    epoch = {n: 0 for n in nodes}
    windows = {n: None for n in nodes}  # model: [opens, closes, used, id]
    fetched = []  # (node, key) from every successful fetch
    blobs = []
    out = []
    fetch_ok_per_window = {}

    for step in range(steps):
        now += rng.choice([0.0, 0.5, 1.0, 5.0, 29.999, 30.0, 61.0])
        node = rng.choice(nodes)
        op = rng.choice(["key", "key", "stale", "open", "open", "fetch", "fetch", "fetch", "secret", "decrypt"])
        if op == "key":
            epoch[node] += 1
            server.generate_node_key(node, epoch[node], now)
        elif op == "stale" and epoch[node] > 0:
            try:
                server.generate_node_key(node, epoch[node], now)
                out.append(f"step {step}: epoch {epoch[node]} reused for {node}")
            except BootstrapError:
                pass
        elif op == "open":
            duration = rng.choice([1.0, 30.0, 60.0])
            w = windows[node]
            model_open = w is not None and not w[2] and w[0] <= now < w[1]
            try:
                server.open_window(node, now, duration)
                if model_open:
                    out.append(f"step {step}: second window opened for {node}")
                windows[node] = [now, now + duration, False, step]
            except BootstrapError:
                if not model_open:
                    out.append(f"step {step}: open refused for {node} with no open window")
        elif op == "fetch":
            w = windows[node]
            model_ok = w is not None and not w[2] and w[0] <= now < w[1] and epoch[node] > 0
            try:
                key = server.fetch_private_key(node, now)
            except FabricError:
                if model_ok:
                    out.append(f"step {step}: fetch refused inside window for {node}")
                continue
            if not model_ok:
                out.append(f"step {step}: fetch succeeded outside a window for {node} at {now}")
                continue
            ident = (node, w[3])
            fetch_ok_per_window[ident] = fetch_ok_per_window.get(ident, 0) + 1
            if fetch_ok_per_window[ident] > 1:
                out.append(f"step {step}: two fetches from one window for {node}")
            w[2] = True
            if key.epoch != epoch[node]:
                out.append(f"step {step}: fetched epoch {key.epoch}, current {epoch[node]}")
            fetched.append(key)
        elif op == "secret" and epoch[node] > 0:
            payload = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 12)))
            blobs.append((server.encrypt_secret(node, f"s{step}", payload), payload))
        elif op == "decrypt":
            for key in fetched:
                for blob, payload in blobs:
                    same = key.node == blob.node and key.epoch == blob.key_epoch
                    try:
                        got = decrypt_secret(key, blob, server.provider)
                    except BootstrapError:
                        if same:
                            out.append(f"step {step}: matching key failed to decrypt")
                        continue
                    if not same:
                        out.append(f"step {step}: epoch {key.epoch} key opened an epoch {blob.key_epoch} secret")
                    elif got != payload:
                        out.append(f"step {step}: decrypt returned wrong bytes")
    return out


def run_notify_schedule(rng, clients=("c1", "c2", "c3"), tags=("rpmupdate", "confupdate"), steps=80):
    """Subscribe, notify, disconnect and reconnect at random, then drain.

    Expected deliveries come from a model: every event a client was
    subscribed to at issue time must eventually be acted on exactly once
    (after seq dedup), in per-tag seq order.
    """
    server = NotifyServer()
    dedup = {c: NotifyClient(c) for c in clients}
    sessions = {c: None for c in clients}
    subscribed = {c: set() for c in clients}
    expected = {c: [] for c in clients}
    acted = {c: [] for c in clients}
    raw = {c: [[]] for c in clients}  # one list per connection
    now = 0.0
    out = []

    def pump(c, ack=True):
        events = []
        for line in sessions[c].push():
            word, tag, seq = line.split()
            assert word == "EVT"
            events.append((tag, int(seq)))
        raw[c][-1].extend(events)
        fresh = dedup[c].accept([_Ev(tag, seq) for tag, seq in events])
        acted[c].extend((ev.tag, ev.seq) for ev in fresh)
        if not ack:
            return
        for tag in sorted({t for t, _ in events}):
            top = max(seq for t, seq in events if t == tag)
            if sessions[c].handle(f"ACK {tag} {top}", now) != "OK":
                out.append(f"{c}: ACK refused")

    for _ in range(steps):
        now += rng.choice([0.0, 1.0, 2.5])
        c = rng.choice(clients)
        op = rng.choice(["sub", "notify", "notify", "drop", "connect", "pump", "pump"])
        if op == "sub":
            tag = rng.choice(tags)
            if sessions[c] is None:
                sessions[c] = NotifySession(server, c)
            if sessions[c].handle(f"SUB {tag}", now) != "OK":
                out.append(f"{c}: SUB refused")
            subscribed[c].add(tag)
        elif op == "notify":
            tag = rng.choice(tags)
            ev = server.notify(tag, now)
            for other in clients:
                if tag in subscribed[other]:
                    expected[other].append((tag, ev.seq))
        elif op == "drop" and sessions[c] is not None:
            mode = rng.choice(["clean", "lost", "unacked"])
            if mode == "lost":
                # pushed, then the connection dies before the client reads it
                sessions[c].push()
            elif mode == "unacked":
                # acted on, but the ACK never made it back
                pump(c, ack=False)
            sessions[c].close()
            sessions[c] = None
            raw[c].append([])
        elif op == "connect" and sessions[c] is None:
            sessions[c] = NotifySession(server, c)
        elif op == "pump" and sessions[c] is not None:
            pump(c)

    for c in clients:
        if sessions[c] is None:
            sessions[c] = NotifySession(server, c)
        pump(c)
        if server.pending(c):
            out.append(f"{c}: unacknowledged events after drain")
        for tag in tags:
            want = [e for e in expected[c] if e[0] == tag]
            have = [e for e in acted[c] if e[0] == tag]
            if have != want:
                out.append(f"{c} {tag}: expected {want}, acted on {have}")
            for conn in raw[c]:
                seqs = [s for t, s in conn if t == tag]
                if any(a >= b for a, b in zip(seqs, seqs[1:])):
                    out.append(f"{c} {tag}: out of order on one connection {seqs}")
    return out


class _Ev:
    def __init__(self, tag, seq):
        self.tag, self.seq = tag, seq
