"""Template text for a simulated site.

Every node's profile is compiled from the same small hierarchy:

    object <node>  ->  kind-<kind>  ->  site
                   ->  cluster-<cluster>
                   ->  site-local

``site`` carries the package list, ``kind-*`` the per-role services,
``site-local`` any operator overrides.  Per-node package pins (a kernel
update done through a rundown) live in the object template itself.
"""

from __future__ import annotations

import json

from fabsim.config import GlobalSchema, parse_template

SCHEMA_TEXT = """\
/system/name string
/system/kind string batch|interactive|disk
/cluster/name string
/hardware/slots integer
/software/packages record
/system/services list
"""

BASE_SERVICES = ["crond", "ncm", "sshd"]
KIND_SERVICES = {
    "batch": ["lsf"],
    "interactive": ["afs", "xinetd"],
    "disk": ["rfiod"],
}


def site_schema():
    return GlobalSchema.from_text(SCHEMA_TEXT)


def literal(value):
    """Render a Python value in template syntax."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return "'" + value.replace("\\", "\\\\").replace("'", "\\'").replace("\n", "\\n").replace("\t", "\\t") + "'"
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(literal(v) for v in value) + "]"
    if isinstance(value, dict):
        return "{" + ", ".join(f"{k} = {literal(v)}" for k, v in value.items()) + "}"
    raise TypeError(f"cannot render {type(value).__name__}")


def parse_literal(text):
    """Operator shorthand for ``set``: integers, true/false, JSON, else a string."""
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    if text[:1] in "[{\"":
        return json.loads(text)
    return text


def _pkg_record(spec):
    return {"version": spec.version, "release": spec.release, "arch": spec.arch}


def site_template(packages):
    lines = ["template site;"]
    for spec in sorted(packages.values(), key=lambda s: s.name):
        lines.append(f"'/software/packages/{spec.name}' = {literal(_pkg_record(spec))};")
    lines.append(f"'/system/services' = {literal(BASE_SERVICES)};")
    return parse_template("\n".join(lines) + "\n")


def kind_template(kind):
    services = sorted(BASE_SERVICES + KIND_SERVICES[kind])
    text = (
        f"template kind-{kind};\ninclude site;\n"
        f"'/system/kind' = {literal(kind)};\n"
        f"'/system/services' := {literal(services)};\n"
    )
    return parse_template(text)


def cluster_template(cluster):
    return parse_template(f"template cluster-{cluster};\n'/cluster/name' = {literal(cluster)};\n")


def local_template(settings):
    lines = ["template site-local;"]
    for path in sorted(settings):
        lines.append(f"'{path}' := {literal(settings[path])};")
    return parse_template("\n".join(lines) + "\n")


def object_template(decl, pins=None):
    lines = [
        f"object {decl.name};",
        f"include kind-{decl.kind};",
        f"include cluster-{decl.cluster};",
        "include site-local;",
        f"'/system/name' = {literal(decl.name)};",
        f"'/hardware/slots' = {decl.slots};",
    ]
    for name in sorted(pins or {}):
        lines.append(f"'/software/packages/{name}' := {literal(_pkg_record(pins[name]))};")
    return parse_template("\n".join(lines) + "\n")
