"""Package state reconciliation.

A node's installed package set is driven to exactly the configured list:
missing packages are installed, version differences are upgraded or
downgraded, and anything not configured is removed.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

from fabsim.config.profile import ConfigPath, _lookup
from fabsim.errors import IdentityMismatchError, PackageError, PathNotFoundError, StalePlanError

_DIGITS = "0123456789"
_ALNUM = frozenset(_DIGITS + "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ")


class Ordering(IntEnum):
    LESS = -1
    EQUAL = 0
    GREATER = 1


def _check_field(name, value):
    if not isinstance(value, str) or not value or any(c.isspace() for c in value):
        raise PackageError(f"bad package {name}: {value!r}")


@dataclass(frozen=True, order=True)
class PackageSpec:
    name: str
    version: str
    release: str
    arch: str = "noarch"

    def __post_init__(self):
        for f in ("name", "version", "release", "arch"):
            _check_field(f, getattr(self, f))

    @property
    def key(self):
        return (self.name, self.arch)

    @property
    def evr(self):
        return f"{self.version}-{self.release}"

    def __str__(self):
        return f"{self.name}-{self.version}-{self.release}.{self.arch}"


def compare_segments(a: str, b: str) -> int:
    """Segment-wise comparison of two version strings; returns -1, 0 or 1.

    Segments are maximal runs of ASCII digits or ASCII letters; anything
    else separates them.  Numbers compare numerically, letters bytewise, a
    numeric segment beats an alphabetic one, and with a shared prefix the
    string with more segments wins.
    """
    i = j = 0
    la, lb = len(a), len(b)
    while True:
        while i < la and a[i] not in _ALNUM:
            i += 1
        while j < lb and b[j] not in _ALNUM:
            j += 1
        if i >= la or j >= lb:
            break
        a_num = a[i] in _DIGITS
        b_num = b[j] in _DIGITS
        if a_num != b_num:
            return 1 if a_num else -1
        si, sj = i, j
        if a_num:
            while i < la and a[i] in _DIGITS:
                i += 1
            while j < lb and b[j] in _DIGITS:
                j += 1
            x = a[si:i].lstrip("0")
            y = b[sj:j].lstrip("0")
            if len(x) != len(y):
                return 1 if len(x) > len(y) else -1
        else:
            while i < la and a[i] in _ALNUM and a[i] not in _DIGITS:
                i += 1
            while j < lb and b[j] in _ALNUM and b[j] not in _DIGITS:
                j += 1
            x = a[si:i].encode()
            y = b[sj:j].encode()
        if x != y:
            return 1 if x > y else -1
    if i < la:
        return 1
    if j < lb:
        return -1
    return 0


def compare_versions(a: PackageSpec, b: PackageSpec) -> Ordering:
    if a.key != b.key:
        raise IdentityMismatchError(f"cannot compare {a} with {b}")
    r = compare_segments(a.version, b.version) or compare_segments(a.release, b.release)
    return Ordering(r)


class _KeyedSet:
    def __init__(self, specs=()):
        self._by_key = {}
        for spec in specs:
            if spec.key in self._by_key:
                raise PackageError(f"duplicate package {spec.name}.{spec.arch}")
            self._by_key[spec.key] = spec

    def __iter__(self):
        return iter(sorted(self._by_key.values()))

    def __len__(self):
        return len(self._by_key)

    def __contains__(self, spec):
        return self._by_key.get(spec.key) == spec

    def get(self, name, arch):
        return self._by_key.get((name, arch))

    def keys(self):
        return self._by_key.keys()

    def as_set(self):
        return frozenset(self._by_key.values())


class InstalledSet(_KeyedSet):
    def __eq__(self, other):
        if isinstance(other, _KeyedSet):
            return self.as_set() == other.as_set()
        return NotImplemented

    __hash__ = None

    def copy(self):
        return InstalledSet(self._by_key.values())

    def __repr__(self):
        return f"InstalledSet({len(self)} packages)"


class DesiredList(_KeyedSet):
    """Configured packages for one node, tagged with the profile generation."""

    def __init__(self, specs=(), source_generation=0):
        specs = list(specs)
        super().__init__(specs)
        self.order = [s.key for s in specs]
        self.source_generation = source_generation

    def __iter__(self):
        return (self._by_key[k] for k in self.order)

    def __eq__(self, other):
        if isinstance(other, _KeyedSet):
            return self.as_set() == other.as_set()
        return NotImplemented

    __hash__ = None

    def __repr__(self):
        return f"DesiredList({len(self)} packages, generation {self.source_generation})"


REMOVE, DOWNGRADE, UPGRADE, INSTALL = "remove", "downgrade", "upgrade", "install"
_ACTION_RANK = {REMOVE: 0, DOWNGRADE: 1, UPGRADE: 2, INSTALL: 3}
_ACTION_LETTER = {REMOVE: "R", DOWNGRADE: "D", UPGRADE: "U", INSTALL: "I"}


@dataclass(frozen=True)
class Action:
    kind: str
    old: PackageSpec | None = None
    new: PackageSpec | None = None

    @property
    def key(self):
        return (self.old or self.new).key

    def render(self):
        spec = self.old or self.new
        old = self.old.evr if self.old else "-"
        new = self.new.evr if self.new else "-"
        return f"{_ACTION_LETTER[self.kind]} {spec.name}.{spec.arch} {old}→{new}"


class ReconcilePlan:
    def __init__(self, actions=()):
        self.actions = tuple(actions)

    def __iter__(self):
        return iter(self.actions)

    def __len__(self):
        return len(self.actions)

    def __bool__(self):
        return bool(self.actions)

    def __eq__(self, other):
        if isinstance(other, ReconcilePlan):
            return self.actions == other.actions
        return NotImplemented

    def __repr__(self):
        return f"ReconcilePlan({list(self.actions)!r})"

    def render(self):
        return "\n".join(a.render() for a in self.actions)

    def counts(self):
        out = {k: 0 for k in _ACTION_RANK}
        for a in self.actions:
            out[a.kind] += 1
        return out


def plan(desired: DesiredList, installed: InstalledSet) -> ReconcilePlan:
    """The action list that turns ``installed`` into exactly ``desired``."""
    actions = []
    for key in installed.keys() - desired.keys():
        actions.append(Action(REMOVE, old=installed.get(*key)))
    for key in desired.keys():
        want = desired.get(*key)
        have = installed.get(*key)
        if have is None:
            actions.append(Action(INSTALL, new=want))
        elif have != want:
            order = compare_versions(want, have)
            # same ordering but different spelling still gets replaced
            kind = DOWNGRADE if order == Ordering.LESS else UPGRADE
            actions.append(Action(kind, old=have, new=want))
    actions.sort(key=lambda a: (_ACTION_RANK[a.kind], a.key))
    return ReconcilePlan(actions)


def apply(plan: ReconcilePlan, installed: InstalledSet) -> InstalledSet:
    """Apply ``plan`` to a copy of ``installed``; all or nothing."""
    state = dict((s.key, s) for s in installed)
    for action in plan:
        if action.kind == INSTALL:
            if action.new.key in state:
                raise StalePlanError(f"{action.new.name}.{action.new.arch} is already installed")
            state[action.new.key] = action.new
            continue
        if state.get(action.old.key) != action.old:
            raise StalePlanError(f"{action.old} is not installed")
        if action.kind == REMOVE:
            del state[action.old.key]
        else:
            state[action.old.key] = action.new
    return InstalledSet(state.values())


# -- text formats -------------------------------------------------------------


def format_desired_list(desired) -> str:
    lines = [f"{s.name} {s.version} {s.release} {s.arch}" for s in sorted(desired)]
    return "".join(line + "\n" for line in lines)


def parse_desired_list(text, source_generation=0) -> DesiredList:
    specs = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise PackageError(f"line {lineno}: expected 'name version release arch'")
        specs.append(PackageSpec(*parts))
    return DesiredList(specs, source_generation)


def desired_from_profile(profile, path="/software/packages") -> DesiredList:
    """Read the configured package list out of a compiled profile.

    Each entry under ``path`` is a record keyed by package name with
    ``version``, ``release`` and optional ``arch`` fields.
    """
    try:
        packages = _lookup(profile.root, ConfigPath.parse(path))
    except PathNotFoundError:
        packages = {}
    if not isinstance(packages, dict):
        raise PackageError(f"{path} must be a record")
    specs = []
    for name in sorted(packages):
        entry = packages[name]
        if not isinstance(entry, dict):
            raise PackageError(f"{path}/{name} must be a record")
        try:
            specs.append(
                PackageSpec(name, str(entry["version"]), str(entry["release"]), str(entry.get("arch", "noarch")))
            )
        except KeyError as exc:
            raise PackageError(f"{path}/{name} lacks {exc.args[0]}") from None
    return DesiredList(specs, profile.generation)
