"""Global schema: required paths, their kinds, optional enumerations."""

from __future__ import annotations

from dataclasses import dataclass

from fabsim.config.profile import ConfigPath, _lookup, kind_of
from fabsim.errors import ConfigSyntaxError, PathNotFoundError

# "scalar" accepts any of the three scalar kinds
SCHEMA_KINDS = ("scalar", "string", "integer", "boolean", "list", "record")


@dataclass(frozen=True)
class SchemaEntry:
    path: ConfigPath
    kind: str
    enum: tuple | None = None

    def __post_init__(self):
        if self.kind not in SCHEMA_KINDS:
            raise ValueError(f"unknown schema kind {self.kind!r}")


@dataclass(frozen=True)
class Violation:
    path: str
    reason: str

    def __str__(self):
        return f"{self.path}: {self.reason}"


class GlobalSchema:
    def __init__(self, entries=()):
        self.entries = []
        for entry in entries:
            self.require(entry.path, entry.kind, entry.enum)

    def require(self, path, kind, enum=None):
        entry = SchemaEntry(ConfigPath.parse(path), kind, tuple(enum) if enum is not None else None)
        self.entries.append(entry)
        return entry

    def __len__(self):
        return len(self.entries)

    @classmethod
    def from_text(cls, text):
        """Build a schema from lines of ``<path> <kind> [v1|v2|...]``.

        Enumerated integers are written bare, strings as-is.
        """
        schema = cls()
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) not in (2, 3):
                raise ConfigSyntaxError("expected '<path> <kind> [enum]'", lineno, 1)
            enum = None
            if len(parts) == 3:
                enum = [int(v) if parts[1] == "integer" else v for v in parts[2].split("|")]
            try:
                schema.require(parts[0], parts[1], enum)
            except ValueError as exc:
                raise ConfigSyntaxError(str(exc), lineno, 1) from None
        return schema

    def validate(self, profile):
        return validate_schema(profile, self)


def _kind_ok(expected, actual):
    if expected == "scalar":
        return actual in ("string", "integer", "boolean")
    return expected == actual


def validate_schema(profile, schema):
    """Return every violation of ``schema`` in ``profile`` (empty when valid)."""
    root = profile.root if hasattr(profile, "root") else profile
    violations = []
    for entry in schema.entries:
        try:
            value = _lookup(root, entry.path)
        except PathNotFoundError:
            violations.append(Violation(str(entry.path), "required path missing"))
            continue
        actual = kind_of(value)
        if not _kind_ok(entry.kind, actual):
            violations.append(
                Violation(str(entry.path), f"kind mismatch: expected {entry.kind}, found {actual}")
            )
            continue
        if entry.enum is not None and not any(
            kind_of(value) == kind_of(e) and value == e for e in entry.enum
        ):
            allowed = ", ".join(repr(e) for e in entry.enum)
            violations.append(Violation(str(entry.path), f"value {value!r} not in [{allowed}]"))
    return violations
