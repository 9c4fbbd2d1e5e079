"""Per-node keys and time-windowed private key delivery.

Every install of a node gets a fresh key pair (one per install epoch).
Secrets such as the root password are stored on the server only in
encrypted form.  The private half reaches the node through a short window
opened just before install, and that window serves a single fetch.

Cryptography sits behind :class:`CryptoProvider`; the default
:class:`MockProvider` is a deterministic keyed stream transform with an
integrity tag, which is enough to exercise the protocol.
"""

from __future__ import annotations

import base64
import binascii
import hashlib
import hmac
import threading
from dataclasses import dataclass

from fabsim.errors import (
    AlreadyFetchedError,
    BootstrapError,
    EpochError,
    EpochMismatchError,
    FabricError,
    NoWindowError,
    ProviderError,
    UnknownNodeError,
    WindowExpiredError,
    WindowOpenError,
)

DEFAULT_WINDOW = 60.0


@dataclass(frozen=True)
class PublicKey:
    node: str
    epoch: int
    fingerprint: str


@dataclass(frozen=True, repr=False)
class PrivateKey:
    node: str
    epoch: int
    material: bytes

    def __repr__(self):
        return f"PrivateKey(node={self.node!r}, epoch={self.epoch})"


@dataclass(frozen=True)
class NodeKeyPair:
    node: str
    public_part: PublicKey
    private_part: PrivateKey
    created_at: float
    install_epoch: int


@dataclass
class KeyWindow:
    node: str
    opens_at: float
    closes_at: float
    used: bool = False

    def __post_init__(self):
        if not self.closes_at > self.opens_at:
            raise BootstrapError("window must close after it opens")

    def is_open(self, now):
        return not self.used and self.opens_at <= now < self.closes_at


@dataclass(frozen=True)
class EncryptedSecret:
    node: str
    label: str
    ciphertext: bytes
    key_epoch: int


class CryptoProvider:
    """Key generation and public-key encryption, as the protocol needs them."""

    def keygen(self, node, epoch):
        raise NotImplementedError

    def encrypt(self, public: PublicKey, payload: bytes) -> bytes:
        raise NotImplementedError

    def decrypt(self, private: PrivateKey, ciphertext: bytes) -> bytes:
        raise NotImplementedError


_TAG = 16


def _keystream(key, n):
    out = bytearray()
    counter = 0
    while len(out) < n:
        out += hashlib.sha256(key + counter.to_bytes(8, "big")).digest()
        counter += 1
    return bytes(out[:n])


class MockProvider(CryptoProvider):
    """Deterministic stand-in for a real public-key system.

    The private material is derived from a provider secret, the node name
    and the epoch; the provider remembers which public fingerprint belongs to
    which material so it can "encrypt to" a public key.  Ciphertext is the
    payload XORed with a SHA-256 keystream plus a 16 byte HMAC tag, so a
    wrong key fails closed instead of returning garbage.
    """

    def __init__(self, secret=b"fabsim-mock-provider"):
        self._secret = secret
        self._by_fingerprint = {}
        self._nonce = 0

    def keygen(self, node, epoch):
        material = hmac.new(self._secret, f"{node}\0{epoch}".encode(), hashlib.sha256).digest()
        fingerprint = hashlib.sha256(b"pub" + material).hexdigest()[:16]
        self._by_fingerprint[fingerprint] = material
        return PublicKey(node, epoch, fingerprint), PrivateKey(node, epoch, material)

    def encrypt(self, public, payload):
        material = self._by_fingerprint.get(public.fingerprint)
        if material is None:
            raise ProviderError(f"unknown public key {public.fingerprint}")
        self._nonce += 1
        nonce = self._nonce.to_bytes(8, "big")
        body = bytes(a ^ b for a, b in zip(payload, _keystream(material + nonce, len(payload))))
        tag = hmac.new(material, nonce + body, hashlib.sha256).digest()[:_TAG]
        return nonce + tag + body

    def decrypt(self, private, ciphertext):
        if len(ciphertext) < 8 + _TAG:
            raise ProviderError("ciphertext too short")
        nonce, tag, body = ciphertext[:8], ciphertext[8 : 8 + _TAG], ciphertext[8 + _TAG :]
        want = hmac.new(private.material, nonce + body, hashlib.sha256).digest()[:_TAG]
        if not hmac.compare_digest(tag, want):
            raise ProviderError("integrity check failed")
        return bytes(a ^ b for a, b in zip(body, _keystream(private.material + nonce, len(body))))


def decrypt_secret(node_key: PrivateKey, blob: EncryptedSecret, provider: CryptoProvider) -> bytes:
    if node_key.node != blob.node:
        raise EpochMismatchError(f"key for {node_key.node} cannot open a secret for {blob.node}")
    if node_key.epoch != blob.key_epoch:
        raise EpochMismatchError(
            f"secret {blob.label} is for epoch {blob.key_epoch}, key is epoch {node_key.epoch}"
        )
    return provider.decrypt(node_key, blob.ciphertext)


class KeyServer:
    """Holds node key pairs, delivery windows and the encrypted secret store.

    All operations for a node are serialized by one lock.
    """

    def __init__(self, provider=None, default_window=DEFAULT_WINDOW):
        self.provider = provider or MockProvider()
        self.default_window = default_window
        self._keys = {}
        self._windows = {}
        self._secrets = {}
        self._lock = threading.RLock()

    def generate_node_key(self, node, install_epoch, now=0.0) -> NodeKeyPair:
        with self._lock:
            old = self._keys.get(node)
            if old is not None and install_epoch <= old.install_epoch:
                raise EpochError(
                    f"{node}: epoch {install_epoch} is not above current epoch {old.install_epoch}"
                )
            public, private = self.provider.keygen(node, install_epoch)
            pair = NodeKeyPair(node, public, private, now, install_epoch)
            self._keys[node] = pair
            return pair

    def current_epoch(self, node):
        pair = self._keys.get(node)
        return pair.install_epoch if pair else 0

    def public_key(self, node) -> PublicKey:
        pair = self._keys.get(node)
        if pair is None:
            raise UnknownNodeError(f"no key for {node}")
        return pair.public_part

    def open_window(self, node, now, duration=None) -> KeyWindow:
        duration = self.default_window if duration is None else duration
        with self._lock:
            win = self._windows.get(node)
            if win is not None and win.is_open(now):
                raise WindowOpenError(f"{node} already has a window open until {win.closes_at}")
            win = KeyWindow(node, now, now + duration)
            self._windows[node] = win
            return win

    def fetch_private_key(self, node, now) -> PrivateKey:
        with self._lock:
            win = self._windows.get(node)
            if win is None or now < win.opens_at:
                raise NoWindowError(f"no key window for {node}")
            if win.used:
                raise AlreadyFetchedError(f"key for {node} was already fetched")
            if now >= win.closes_at:
                raise WindowExpiredError(f"key window for {node} closed at {win.closes_at}")
            pair = self._keys.get(node)
            if pair is None:
                raise UnknownNodeError(f"no key for {node}")
            win.used = True
            return pair.private_part

    def encrypt_secret(self, node, label, payload: bytes) -> EncryptedSecret:
        """Encrypt ``payload`` to the node's current key and store it."""
        with self._lock:
            pair = self._keys.get(node)
            if pair is None:
                raise UnknownNodeError(f"no key for {node}")
            ciphertext = self.provider.encrypt(pair.public_part, bytes(payload))
            blob = EncryptedSecret(node, label, ciphertext, pair.install_epoch)
            self._secrets[(node, label)] = blob
            return blob

    def get_secret(self, node, label) -> EncryptedSecret:
        blob = self._secrets.get((node, label))
        if blob is None:
            raise UnknownNodeError(f"no secret {label!r} for {node}")
        return blob

    def secret_labels(self, node):
        return sorted(label for (n, label) in self._secrets if n == node)

    def dump_store(self):
        """Every stored ciphertext; safe to publish."""
        return [self._secrets[k] for k in sorted(self._secrets)]

    def decrypt_secret(self, node_key, blob):
        """Server-side decrypt; keys from superseded epochs are refused."""
        current = self.current_epoch(node_key.node)
        if node_key.epoch != current:
            raise EpochMismatchError(f"{node_key.node}: epoch {node_key.epoch} key was superseded by {current}")
        return decrypt_secret(node_key, blob, self.provider)

    # -- line protocol -----------------------------------------------------

    def handle(self, line, now):
        """Answer one request line with ``OK <payload>`` or ``ERR <code>``.

        ``OPENWIN <node> <duration>``, ``FETCHKEY <node>``,
        ``PUTSECRET <node> <label> <base64>``, ``GETSECRET <node> <label>``.
        """
        parts = line.strip().split()
        if not parts:
            return "ERR syntax"
        cmd, args = parts[0], parts[1:]
        try:
            if cmd == "OPENWIN" and len(args) in (1, 2):
                duration = float(args[1]) if len(args) == 2 else None
                win = self.open_window(args[0], now, duration)
                return f"OK {win.opens_at:g} {win.closes_at:g}"
            if cmd == "FETCHKEY" and len(args) == 1:
                key = self.fetch_private_key(args[0], now)
                return f"OK {key.epoch} {base64.b64encode(key.material).decode()}"
            if cmd == "PUTSECRET" and len(args) == 3:
                payload = base64.b64decode(args[2], validate=True)
                blob = self.encrypt_secret(args[0], args[1], payload)
                return f"OK {blob.key_epoch}"
            if cmd == "GETSECRET" and len(args) == 2:
                blob = self.get_secret(args[0], args[1])
                return f"OK {blob.key_epoch} {base64.b64encode(blob.ciphertext).decode()}"
        except FabricError as exc:
            return f"ERR {exc.code}"
        except (ValueError, binascii.Error):
            return "ERR syntax"
        return "ERR syntax"


def parse_key_reply(node, reply) -> PrivateKey:
    """Turn a FETCHKEY ``OK`` reply back into a PrivateKey."""
    _, epoch, material = reply.split()
    return PrivateKey(node, int(epoch), base64.b64decode(material))


def parse_secret_reply(node, label, reply) -> EncryptedSecret:
    _, epoch, ciphertext = reply.split()
    return EncryptedSecret(node, label, base64.b64decode(ciphertext), int(epoch))
