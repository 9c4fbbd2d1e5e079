"""Compiled node profiles: paths, values, canonical text form and queries.

Config values are plain Python objects: ``str``, ``int``, ``bool``, ``list``
and ``dict``.  ``bool`` is kept distinct from ``int`` everywhere (``True``
and ``1`` are different values in a profile).
"""

from __future__ import annotations

import copy
import hashlib
import json
import re
from dataclasses import dataclass, field

from fabsim.errors import (
    MalformedPathError,
    PathNotFoundError,
    ProfileFormatError,
    UnknownKindError,
)

SEGMENT_RE = re.compile(r"[a-z0-9_-]+\Z")
NAME_RE = re.compile(r"[A-Za-z0-9_][A-Za-z0-9_.-]*\Z")

SCALAR_KINDS = ("string", "integer", "boolean")
KINDS = SCALAR_KINDS + ("list", "record")


@dataclass(frozen=True, order=True)
class ConfigPath:
    segments: tuple

    def __post_init__(self):
        if not self.segments:
            raise MalformedPathError("empty path")
        for seg in self.segments:
            if not isinstance(seg, str) or not SEGMENT_RE.match(seg):
                raise MalformedPathError(f"bad path segment {seg!r}")

    @classmethod
    def parse(cls, text):
        if isinstance(text, ConfigPath):
            return text
        if not isinstance(text, str) or not text.startswith("/"):
            raise MalformedPathError(f"path must be absolute: {text!r}")
        parts = text[1:].split("/")
        if any(p == "" for p in parts):
            raise MalformedPathError(f"empty segment in {text!r}")
        return cls(tuple(parts))

    @property
    def parent(self):
        return ConfigPath(self.segments[:-1]) if len(self.segments) > 1 else None

    def child(self, segment):
        return ConfigPath(self.segments + (segment,))

    def __str__(self):
        return "/" + "/".join(self.segments)


def kind_of(value):
    """Return the profile kind name of a Python config value."""
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, str):
        return "string"
    if isinstance(value, list):
        return "list"
    if isinstance(value, dict):
        return "record"
    raise TypeError(f"not a config value: {value!r}")


def values_equal(a, b):
    """Structural equality that keeps booleans and integers apart."""
    ka, kb = kind_of(a), kind_of(b)
    if ka != kb:
        return False
    if ka == "list":
        return len(a) == len(b) and all(values_equal(x, y) for x, y in zip(a, b))
    if ka == "record":
        return a.keys() == b.keys() and all(values_equal(a[k], b[k]) for k in a)
    return a == b


@dataclass(frozen=True, eq=False)
class ProfileTree:
    """A compiled per-node configuration.

    Equality and hashing go through the canonical serialization, so two
    trees are equal exactly when they serialize to the same bytes.  Trees
    are treated as immutable once built; the rendered body is memoized.
    """

    node_name: str
    root: dict = field(default_factory=dict)
    generation: int = 1
    _body: bytes | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if not isinstance(self.root, dict):
            raise TypeError("profile root must be a record")

    def body(self):
        if self._body is None:
            object.__setattr__(self, "_body", _render_body(self.root))
        return self._body

    def __eq__(self, other):
        if not isinstance(other, ProfileTree):
            return NotImplemented
        return serialize_profile(self) == serialize_profile(other)

    def __hash__(self):
        return hash(serialize_profile(self))

    @property
    def content_hash(self):
        """SHA-256 over the tree body only (node name and generation excluded)."""
        return hashlib.sha256(self.body()).hexdigest()

    def query(self, path):
        return query(self, path)

    def get(self, path, default=None):
        try:
            return query(self, path)
        except PathNotFoundError:
            return default


def _lookup(root, path):
    cur = root
    for seg in path.segments:
        if isinstance(cur, dict):
            if seg not in cur:
                raise PathNotFoundError(str(path))
            cur = cur[seg]
        elif isinstance(cur, list):
            if not seg.isdigit() or int(seg) >= len(cur):
                raise PathNotFoundError(str(path))
            cur = cur[int(seg)]
        else:
            raise PathNotFoundError(str(path))
    return cur


def query(profile, path):
    """Return a copy of the value at ``path``.

    Raises PathNotFoundError when nothing is there; an empty record or list
    that is present is returned as such.
    """
    path = ConfigPath.parse(path)
    return copy.deepcopy(_lookup(profile.root, path))


# -- canonical text form ----------------------------------------------------

INDENT = "  "


def _scalar_text(value):
    kind = kind_of(value)
    if kind == "boolean":
        return "true" if value else "false"
    if kind == "integer":
        return str(value)
    return json.dumps(value, ensure_ascii=False)


def _render(key, value, depth, out):
    pad = INDENT * depth
    kind = kind_of(value)
    if kind in ("list", "record"):
        out.append(f"{pad}{key} {kind} {{")
        if kind == "record":
            for k in value:
                if not isinstance(k, str) or not SEGMENT_RE.match(k):
                    raise ValueError(f"bad record key {k!r}")
            items = sorted(value.items(), key=lambda kv: kv[0].encode("utf-8"))
        else:
            items = [(str(i), v) for i, v in enumerate(value)]
        for k, v in items:
            _render(k, v, depth + 1, out)
        out.append(f"{pad}}}")
    else:
        out.append(f"{pad}{key} {kind} {_scalar_text(value)}")


def _render_body(root):
    out = []
    _render("root", root, 0, out)
    return ("\n".join(out) + "\n").encode("utf-8")


def serialize_profile(profile):
    """Render ``profile`` in the canonical, byte-stable text format."""
    header = f"profile {profile.node_name} generation {profile.generation}\n".encode("utf-8")
    return header + profile.body()


def parse_profile(data):
    """Inverse of serialize_profile."""
    if isinstance(data, (bytes, bytearray)):
        try:
            text = bytes(data).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProfileFormatError(f"not UTF-8: {exc}") from None
    else:
        text = data
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if not lines:
        raise ProfileFormatError("empty document")
    head = lines[0].split(" ")
    if len(head) != 4 or head[0] != "profile" or head[2] != "generation":
        raise ProfileFormatError(f"line 1: bad header {lines[0]!r}")
    node_name = head[1]
    try:
        generation = int(head[3])
    except ValueError:
        raise ProfileFormatError(f"line 1: bad generation {head[3]!r}") from None

    # open containers as (value, kind)
    stack = []
    root = None
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            raise ProfileFormatError(f"line {lineno}: blank line")
        if line == "}":
            if not stack:
                raise ProfileFormatError(f"line {lineno}: unbalanced '}}'")
            stack.pop()
            continue
        if root is not None and not stack:
            raise ProfileFormatError(f"line {lineno}: content after root")
        parts = line.split(" ", 2)
        if len(parts) != 3:
            raise ProfileFormatError(f"line {lineno}: expected '<key> <kind> <value>'")
        key, kind, rest = parts
        if kind not in KINDS:
            raise UnknownKindError(f"line {lineno}: unknown value kind {kind!r}")
        if kind in ("list", "record"):
            if rest != "{":
                raise ProfileFormatError(f"line {lineno}: expected '{{' after {kind}")
            value = {} if kind == "record" else []
        else:
            value = _parse_scalar(kind, rest, lineno)

        if not stack:
            if root is not None or key != "root" or kind != "record":
                raise ProfileFormatError(f"line {lineno}: document must start with 'root record {{'")
            root = value
        else:
            parent, pkind = stack[-1]
            if pkind == "record":
                if not SEGMENT_RE.match(key):
                    raise ProfileFormatError(f"line {lineno}: bad key {key!r}")
                if key in parent:
                    raise ProfileFormatError(f"line {lineno}: duplicate key {key!r}")
                parent[key] = value
            else:
                if key != str(len(parent)):
                    raise ProfileFormatError(f"line {lineno}: list index {key!r} out of sequence")
                parent.append(value)
        if kind in ("list", "record"):
            stack.append((value, kind))
    if root is None:
        raise ProfileFormatError("missing root record")
    if stack:
        raise ProfileFormatError("unterminated record or list")
    return ProfileTree(node_name=node_name, root=root, generation=generation)


def _parse_scalar(kind, text, lineno):
    if kind == "boolean":
        if text not in ("true", "false"):
            raise ProfileFormatError(f"line {lineno}: bad boolean {text!r}")
        return text == "true"
    if kind == "integer":
        if not re.fullmatch(r"-?[0-9]+", text):
            raise ProfileFormatError(f"line {lineno}: bad integer {text!r}")
        return int(text)
    try:
        value = json.loads(text)
    except json.JSONDecodeError:
        value = None
    if not isinstance(value, str):
        raise ProfileFormatError(f"line {lineno}: bad string {text!r}")
    return value
