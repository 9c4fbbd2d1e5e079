import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fabsim.errors import MalformedTagError, NotifyError, UnknownClientError
from fabsim.notify import NotifyClient, NotifyServer, NotifySession
from schedules import run_notify_schedule


def test_subscribe_idempotent():
    s = NotifyServer()
    a = s.subscribe("n001", "rpmupdate", 1.0)
    b = s.subscribe("n001", "rpmupdate", 5.0)
    assert a == b and a.since == 1.0
    assert len(s.subscriptions("n001")) == 1


@pytest.mark.parametrize("tag", ["a b", "", " x", "x\n", None])
def test_malformed_tag(tag):
    with pytest.raises(MalformedTagError):
        NotifyServer().subscribe("n001", tag)
    with pytest.raises(MalformedTagError):
        NotifyServer().notify(tag)


def test_independent_subscriptions():
    s = NotifyServer()
    s.subscribe("n001", "rpmupdate")
    s.subscribe("n001", "confupdate")
    assert [x.tag for x in s.subscriptions("n001")] == ["confupdate", "rpmupdate"]
    s.notify("confupdate")
    assert [e.tag for e in s.deliver("n001")] == ["confupdate"]


def test_seq_gapless_per_tag():
    s = NotifyServer()
    assert [s.notify("rpmupdate").seq for _ in range(3)] == [1, 2, 3]
    assert s.notify("confupdate").seq == 1
    assert s.last_seq("rpmupdate") == 3


def test_notify_without_subscribers():
    s = NotifyServer()
    ev = s.notify("rpmupdate")
    assert ev.seq == 1
    assert s.log == [(ev, ())]


def test_snapshot_fan_out():
    s = NotifyServer()
    for c in ("a", "b", "c"):
        s.subscribe(c, "rpmupdate")
    ev = s.notify("rpmupdate")
    s.subscribe("late", "rpmupdate")
    assert s.log[-1] == (ev, ("a", "b", "c"))
    assert s.deliver("late") == []
    assert sum(len(s.deliver(c)) for c in ("a", "b", "c")) == 3


def test_deliver_in_order_and_not_repeated_on_same_connection():
    s = NotifyServer()
    s.subscribe("n", "t")
    e1, e2 = s.notify("t"), s.notify("t")
    assert s.deliver("n") == [e1, e2]
    assert s.deliver("n") == []


def test_reconnect_redelivers_unacked():
    s = NotifyServer()
    s.subscribe("n", "t")
    e1 = s.notify("t")
    assert s.deliver("n") == [e1]
    s.disconnect("n")
    with pytest.raises(NotifyError):
        s.deliver("n")
    s.connect("n")
    assert s.deliver("n") == [e1]
    s.ack("n", "t", 1)
    s.disconnect("n")
    s.connect("n")
    assert s.deliver("n") == []


def test_cumulative_ack():
    s = NotifyServer()
    s.subscribe("n", "t")
    s.subscribe("n", "u")
    for _ in range(3):
        s.notify("t")
    u1 = s.notify("u")
    s.ack("n", "t", 2)
    assert [(e.tag, e.seq) for e in s.pending("n")] == [("t", 3), ("u", 1)]
    assert u1 in s.pending("n")


def test_per_tag_order_with_interleaving():
    s = NotifyServer()
    s.subscribe("n", "a")
    s.subscribe("n", "b")
    for tag in "abbab":
        s.notify(tag)
    got = s.deliver("n")
    for tag in "ab":
        seqs = [e.seq for e in got if e.tag == tag]
        assert seqs == sorted(seqs)


def test_unknown_client():
    s = NotifyServer()
    with pytest.raises(UnknownClientError):
        s.deliver("ghost")
    with pytest.raises(UnknownClientError):
        s.disconnect("ghost")


def test_unsubscribe_drops_pending():
    s = NotifyServer()
    s.subscribe("n", "t")
    s.notify("t")
    s.unsubscribe("n", "t")
    assert s.pending("n") == []
    s.notify("t")
    assert s.deliver("n") == []


def test_client_dedup():
    s = NotifyServer()
    s.subscribe("n", "t")
    c = NotifyClient("n")
    e1 = s.notify("t")
    assert c.accept(s.deliver("n")) == [e1]
    s.disconnect("n")
    s.connect("n")
    e2 = s.notify("t")
    assert c.accept(s.deliver("n")) == [e2]


def test_line_protocol():
    s = NotifyServer()
    a = NotifySession(s, "n001")
    b = NotifySession(s, "n002")
    assert a.handle("SUB rpmupdate") == "OK"
    assert a.handle("SUB a b") == "ERR syntax"
    assert a.handle("SUB") == "ERR syntax"
    assert b.handle("NOTIFY rpmupdate", 3.0) == "OK 1"
    assert b.handle("NOTIFY rpmupdate") == "OK 2"
    assert a.push() == ["EVT rpmupdate 1", "EVT rpmupdate 2"]
    assert a.handle("ACK rpmupdate 2") == "OK"
    assert a.handle("ACK rpmupdate two") == "ERR syntax"
    assert a.handle("UNSUB rpmupdate") == "OK"
    assert b.push() == []
    a.close()
    assert not s.is_connected("n001")


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_notify_schedules(seed):
    assert run_notify_schedule(random.Random(seed)) == []
