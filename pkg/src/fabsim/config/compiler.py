"""Compile templates into per-node profiles, and keep them in a database."""

from __future__ import annotations

import copy

from fabsim.config.grammar import DELETE, OBJECT, OVERRIDE, TemplateSource, template_set
from fabsim.config.profile import ConfigPath, ProfileTree
from fabsim.config.schema import validate_schema
from fabsim.errors import (
    AssignCollisionError,
    CyclicIncludeError,
    MissingTemplateError,
    SchemaViolationError,
)


def _as_map(templates):
    if isinstance(templates, dict):
        return templates
    return template_set(templates)


def expansion_order(templates, node):
    """Templates in application order for ``node``.

    Includes are expanded depth-first, in the order they are written, before
    the including template.  A template reached twice is applied once.
    """
    templates = _as_map(templates)
    order, done = [], set()

    def visit(name, stack):
        if name in stack:
            cycle = " -> ".join(stack[stack.index(name):] + [name])
            raise CyclicIncludeError(f"cyclic include: {cycle}")
        if name not in templates:
            via = f" (included from {stack[-1]})" if stack else ""
            raise MissingTemplateError(f"no template named {name!r}{via}")
        if name in done:
            return
        tpl = templates[name]
        for inc in tpl.includes:
            visit(inc, stack + [name])
        done.add(name)
        order.append(tpl)

    visit(node, [])
    if order[-1].kind != OBJECT:
        raise MissingTemplateError(f"{node!r} is not an object template")
    return order


def _apply(root, stmt):
    path = stmt.path
    cur = root
    for i, seg in enumerate(path.segments[:-1]):
        nxt = cur.get(seg)
        if nxt is None:
            if stmt.mode == DELETE:
                return
            nxt = cur[seg] = {}
        elif not isinstance(nxt, dict):
            if stmt.mode == DELETE:
                return
            where = ConfigPath(path.segments[: i + 1])
            raise AssignCollisionError(
                str(path), f"cannot assign {path}: {where} holds a {type(nxt).__name__} value"
            )
        cur = nxt
    leaf = path.segments[-1]
    if stmt.mode == DELETE:
        cur.pop(leaf, None)
    elif leaf in cur and stmt.mode != OVERRIDE:
        raise AssignCollisionError(str(path))
    else:
        cur[leaf] = copy.deepcopy(stmt.value)


def compile_profile(templates, node, schema=None, previous=None):
    """Compile the object template ``node`` into a ProfileTree.

    ``previous`` is the node's last compiled profile; the generation stays the
    same when content is unchanged and goes up by one otherwise.
    """
    root = {}
    for tpl in expansion_order(templates, node):
        for stmt in tpl.statements:
            try:
                _apply(root, stmt)
            except AssignCollisionError as exc:
                raise AssignCollisionError(
                    exc.path, f"{exc} (template {tpl.name}, line {stmt.line})"
                ) from None
    profile = ProfileTree(node_name=node, root=root, generation=1)
    if schema is not None:
        violations = validate_schema(profile, schema)
        if violations:
            raise SchemaViolationError(violations)
    if previous is not None:
        if previous.content_hash == profile.content_hash:
            generation = previous.generation
        else:
            generation = previous.generation + 1
        profile = ProfileTree(node_name=node, root=root, generation=generation)
    return profile


class ConfigDatabase:
    """Authoritative store of templates and every compiled profile generation."""

    def __init__(self, templates=(), schema=None):
        self.templates = dict(_as_map(templates))
        self.schema = schema
        self._history = {}

    def put_template(self, template: TemplateSource):
        """Add or replace a template (replacement is how operators edit config)."""
        self.templates[template.name] = template

    def object_names(self):
        return sorted(n for n, t in self.templates.items() if t.kind == OBJECT)

    def compile(self, node):
        history = self._history.setdefault(node, [])
        previous = history[-1] if history else None
        profile = compile_profile(self.templates, node, self.schema, previous)
        if previous is None or profile.generation != previous.generation:
            history.append(profile)
        return profile

    def compile_all(self):
        return {name: self.compile(name) for name in self.object_names()}

    def current(self, node):
        history = self._history.get(node)
        if not history:
            return self.compile(node)
        return history[-1]

    def profile_at(self, node, generation):
        for p in self._history.get(node, ()):
            if p.generation == generation:
                return p
        raise KeyError(f"{node} has no generation {generation}")
