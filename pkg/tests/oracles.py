"""Reference implementations written separately from the package code.

They favour obviousness over speed and share no helpers with fabsim.
"""

import re

from fabsim.packages import PackageSpec

_SEGMENTS = re.compile(r"[0-9]+|[A-Za-z]+")


def version_key_cmp(a, b):
    """Compare two version strings by tokenizing both up front."""
    ta, tb = _SEGMENTS.findall(a), _SEGMENTS.findall(b)
    for x, y in zip(ta, tb):
        xd, yd = x.isdigit(), y.isdigit()
        if xd and yd:
            if int(x) != int(y):
                return -1 if int(x) < int(y) else 1
        elif xd != yd:
            return 1 if xd else -1
        elif x != y:
            return -1 if x.encode() < y.encode() else 1
    if len(ta) != len(tb):
        return -1 if len(ta) < len(tb) else 1
    return 0


def spec_cmp(a, b):
    c = version_key_cmp(a.version, b.version)
    return c if c else version_key_cmp(a.release, b.release)


def brute_force_plan(desired, installed):
    """Per-key diff: look at every (name, arch) on its own.

    Returns a list of (letter, name, arch, old_evr, new_evr) in the order
    removes, downgrades, upgrades, installs, each sorted by (name, arch).
    """
    want = {(s.name, s.arch): s for s in desired}
    have = {(s.name, s.arch): s for s in installed}
    buckets = {"R": [], "D": [], "U": [], "I": []}
    for key in set(want) | set(have):
        w, h = want.get(key), have.get(key)
        if w is None:
            buckets["R"].append((key, h, None))
        elif h is None:
            buckets["I"].append((key, None, w))
        elif (w.version, w.release) != (h.version, h.release):
            letter = "D" if spec_cmp(w, h) < 0 else "U"
            buckets[letter].append((key, h, w))
    out = []
    for letter in "RDUI":
        for key, old, new in sorted(buckets[letter], key=lambda item: item[0]):
            out.append((letter, key[0], key[1], old and f"{old.version}-{old.release}",
                        new and f"{new.version}-{new.release}"))
    return out


def plan_tuples(plan):
    letters = {"remove": "R", "downgrade": "D", "upgrade": "U", "install": "I"}
    out = []
    for a in plan:
        spec = a.old or a.new
        out.append((letters[a.kind], spec.name, spec.arch, a.old and a.old.evr, a.new and a.new.evr))
    return out


def random_spec(rng, names, archs, versions):
    return PackageSpec(rng.choice(names), rng.choice(versions), rng.choice(versions), rng.choice(archs))


def random_package_set(rng, names, archs, versions, max_size):
    specs = {}
    for _ in range(rng.randint(0, max_size)):
        s = random_spec(rng, names, archs, versions)
        specs[s.key] = s
    return list(specs.values())
