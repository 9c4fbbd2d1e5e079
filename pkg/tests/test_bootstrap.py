import base64
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fabsim.bootstrap import (
    DEFAULT_WINDOW,
    KeyServer,
    PrivateKey,
    decrypt_secret,
    parse_key_reply,
    parse_secret_reply,
)
from fabsim.errors import (
    AlreadyFetchedError,
    BootstrapError,
    EpochError,
    EpochMismatchError,
    NoWindowError,
    ProviderError,
    UnknownNodeError,
    WindowExpiredError,
    WindowOpenError,
)
from schedules import run_key_schedule


@pytest.fixture
def server():
    s = KeyServer()
    s.generate_node_key("n1", 1)
    return s


def test_first_epoch_key_usable(server):
    server.open_window("n1", 0)
    key = server.fetch_private_key("n1", 1)
    blob = server.encrypt_secret("n1", "root_password", b"s3cret")
    assert key.epoch == 1
    assert decrypt_secret(key, blob, server.provider) == b"s3cret"


def test_reinstall_epoch_invalidates_old_secrets(server):
    server.open_window("n1", 0)
    old_key = server.fetch_private_key("n1", 1)
    old_blob = server.encrypt_secret("n1", "root_password", b"pw1")
    server.generate_node_key("n1", 2)
    server.open_window("n1", 100)
    new_key = server.fetch_private_key("n1", 101)
    with pytest.raises(EpochMismatchError):
        decrypt_secret(new_key, old_blob, server.provider)
    # the old key is refused by the server once superseded
    with pytest.raises(EpochMismatchError):
        server.decrypt_secret(old_key, old_blob)
    new_blob = server.encrypt_secret("n1", "root_password", b"pw2")
    with pytest.raises(EpochMismatchError):
        decrypt_secret(old_key, new_blob, server.provider)


def test_repeated_epoch_rejected(server):
    server.generate_node_key("n1", 2)
    with pytest.raises(EpochError):
        server.generate_node_key("n1", 2)
    with pytest.raises(EpochError):
        server.generate_node_key("n1", 1)


def test_open_window_bounds(server):
    w = server.open_window("n1", 100, 30)
    assert (w.opens_at, w.closes_at) == (100, 130)
    assert server.open_window("n2", 0).closes_at == DEFAULT_WINDOW


def test_second_open_before_close_rejected(server):
    server.open_window("n1", 100, 30)
    with pytest.raises(WindowOpenError):
        server.open_window("n1", 129.5, 30)


def test_reopen_after_close_allowed(server):
    server.open_window("n1", 100, 30)
    assert server.open_window("n1", 130, 30).opens_at == 130


def test_reopen_after_fetch_allowed(server):
    server.open_window("n1", 100, 30)
    server.fetch_private_key("n1", 105)
    server.open_window("n1", 106, 30)
    assert server.fetch_private_key("n1", 107).epoch == 1


def test_zero_length_window_rejected(server):
    with pytest.raises(BootstrapError):
        server.open_window("n1", 5, 0)


def test_fetch_single_use(server):
    server.open_window("n1", 100, 30)
    server.fetch_private_key("n1", 110)
    with pytest.raises(AlreadyFetchedError):
        server.fetch_private_key("n1", 111)


def test_fetch_at_boundary_expired(server):
    server.open_window("n1", 100, 30)
    with pytest.raises(WindowExpiredError):
        server.fetch_private_key("n1", 130)


def test_fetch_before_window_opens_or_never_opened(server):
    with pytest.raises(NoWindowError):
        server.fetch_private_key("n1", 0)


def test_fetch_without_key():
    s = KeyServer()
    s.open_window("ghost", 0)
    with pytest.raises(UnknownNodeError):
        s.fetch_private_key("ghost", 1)


def test_encrypt_for_unknown_node():
    with pytest.raises(UnknownNodeError):
        KeyServer().encrypt_secret("nobody", "x", b"")


def test_empty_payload_round_trip(server):
    server.open_window("n1", 0)
    key = server.fetch_private_key("n1", 0)
    assert decrypt_secret(key, server.encrypt_secret("n1", "empty", b""), server.provider) == b""


def test_other_nodes_key_cannot_decrypt(server):
    server.generate_node_key("n2", 1)
    server.open_window("n2", 0)
    k2 = server.fetch_private_key("n2", 0)
    blob = server.encrypt_secret("n1", "ssh_host_key", b"key")
    with pytest.raises(EpochMismatchError):
        decrypt_secret(k2, blob, server.provider)


def test_forged_key_fails_closed(server):
    blob = server.encrypt_secret("n1", "root_password", b"pw")
    forged = PrivateKey("n1", 1, b"\0" * 32)
    with pytest.raises(ProviderError):
        decrypt_secret(forged, blob, server.provider)


def test_private_key_repr_hides_material(server):
    server.open_window("n1", 0)
    key = server.fetch_private_key("n1", 0)
    assert base64.b64encode(key.material).decode() not in repr(key)
    assert key.material.hex() not in repr(key)


@settings(max_examples=200, deadline=None)
@given(st.binary(min_size=8, max_size=64))
def test_public_store_reveals_no_payload(payload):
    s = KeyServer()
    s.generate_node_key("n1", 1)
    s.encrypt_secret("n1", "a", payload)
    s.encrypt_secret("n1", "b", payload)
    dump = s.dump_store()
    assert [b.label for b in dump] == ["a", "b"]
    # fresh nonce per secret, so equal payloads give unrelated ciphertexts
    assert dump[0].ciphertext != dump[1].ciphertext
    for blob in dump:
        # the cleartext nonce and tag prefix is 24 bytes; the rest is the body
        assert payload not in blob.ciphertext[24:]
    # everything public together is still not enough to decrypt
    pub = s.public_key("n1")
    guess = PrivateKey("n1", 1, bytes.fromhex(pub.fingerprint) * 4)
    with pytest.raises(ProviderError):
        decrypt_secret(guess, dump[0], s.provider)


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=200), st.integers(1, 5))
def test_round_trip_any_payload(payload, epoch):
    s = KeyServer()
    s.generate_node_key("n", epoch)
    s.open_window("n", 0)
    key = s.fetch_private_key("n", 0)
    assert s.decrypt_secret(key, s.encrypt_secret("n", "x", payload)) == payload


# -- line protocol -----------------------------------------------------------

def test_line_protocol_flow():
    s = KeyServer()
    s.generate_node_key("n1", 3)
    payload = base64.b64encode(b"hunter2").decode()
    assert s.handle(f"PUTSECRET n1 root_password {payload}", 0) == "OK 3"
    assert s.handle("FETCHKEY n1", 0) == "ERR no-window"
    assert s.handle("OPENWIN n1 30", 10) == "OK 10 40"
    assert s.handle("OPENWIN n1 30", 11) == "ERR window-open"
    reply = s.handle("FETCHKEY n1", 12)
    assert reply.startswith("OK 3 ")
    key = parse_key_reply("n1", reply)
    assert s.handle("FETCHKEY n1", 13) == "ERR already-fetched"
    blob = parse_secret_reply("n1", "root_password", s.handle("GETSECRET n1 root_password", 14))
    assert decrypt_secret(key, blob, s.provider) == b"hunter2"
    assert s.handle("GETSECRET n1 nothing", 14) == "ERR unknown-node"


@pytest.mark.parametrize("line", ["", "FETCHKEY", "OPENWIN n1 soon", "PUTSECRET n1 x !!!", "HELLO n1"])
def test_line_protocol_syntax_errors(line):
    assert KeyServer().handle(line, 0) == "ERR syntax"


# -- randomized schedules ----------------------------------------------------

@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_key_schedules(seed):
    assert run_key_schedule(random.Random(seed)) == []
