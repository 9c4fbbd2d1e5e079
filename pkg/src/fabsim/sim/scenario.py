"""Declarative scenario files.

::

    set install_time=900 boot_time=120
    replica srv1
    replica srv2 serves=profiles,packages
    group atlas share=0.6
    group cms share=0.4
    package kernel 2.4.20 18 i686
    secret root_password s3cret
    alarm load > 20
    node lxb0001 kind=batch slots=2 cluster=lxbatch
    nodes lxplus 10 kind=interactive
    at 0 install all
    at 3600 submit atlas 7200 count=4
    at 4000 fail srv2
    at 5000 update openssh 3.6p1 1
    at 5001 notify rpmupdate
    at 6000 rundown cluster=lxbatch action=reboot max_parallel=5
    at 9000 checkpoint

Times are seconds.  ``nodes <prefix> <count>`` expands to
``<prefix>0001`` .. ``<prefix><count>``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from fabsim.errors import ScenarioError
from fabsim.sim.monitoring import Threshold
from fabsim.sim.replicas import SERVICES

NODE_KINDS = ("batch", "interactive", "disk")
_NAME = re.compile(r"[a-z0-9_-]+\Z")

DEFAULT_SETTINGS = {
    "install_time": 900.0,
    "boot_time": 120.0,
    "action_time": 120.0,
    "key_delay": 5.0,
    "window": 60.0,
    "latency": 0.05,
    "detect_delay": 30.0,
    "jitter": 0.2,
    "half_life": 86400.0,
    "grace": 0.0,
}

DEFAULT_PACKAGES = [
    ("kernel", "2.4.20", "18.7", "i686"),
    ("glibc", "2.2.5", "42", "i686"),
    ("bash", "2.05a", "13", "i386"),
    ("rpm", "4.0.4", "7x.18", "i386"),
    ("openssh", "3.5p1", "6", "i386"),
    ("openssh-server", "3.5p1", "6", "i386"),
    ("perl", "5.6.1", "34.99.6", "i386"),
    ("ccconfig", "1.2", "1", "noarch"),
]

DEFAULT_SECRETS = {"root_password": "changeme", "ssh_host_key": "ssh-rsa AAAAB3"}


@dataclass(frozen=True)
class NodeDecl:
    name: str
    kind: str = "batch"
    slots: int = 1
    cluster: str = "default"


@dataclass(frozen=True)
class Action:
    at: float
    verb: str
    args: tuple
    opts: dict
    line: int


@dataclass
class Scenario:
    settings: dict = field(default_factory=lambda: dict(DEFAULT_SETTINGS))
    nodes: dict = field(default_factory=dict)
    replicas: list = field(default_factory=list)
    groups: dict = field(default_factory=dict)
    packages: list = field(default_factory=list)
    secrets: dict = field(default_factory=dict)
    thresholds: list = field(default_factory=list)
    actions: list = field(default_factory=list)

    @property
    def empty(self):
        return not self.nodes and not self.actions

    def add_node(self, decl):
        if decl.name in self.nodes:
            raise ScenarioError(f"node {decl.name} declared twice")
        self.nodes[decl.name] = decl


def _split(tokens, lineno):
    args, opts = [], {}
    for tok in tokens:
        if "=" in tok:
            k, _, v = tok.partition("=")
            if not k or k in opts:
                raise ScenarioError(f"bad option {tok!r}", lineno)
            opts[k] = v
        else:
            args.append(tok)
    return args, opts


def _num(text, lineno, what="number"):
    try:
        return float(text)
    except ValueError:
        raise ScenarioError(f"bad {what} {text!r}", lineno) from None


def _name(text, lineno):
    if not _NAME.match(text):
        raise ScenarioError(f"bad name {text!r} (use [a-z0-9_-])", lineno)
    return text


VERBS = {
    "install": 1, "reinstall": 1, "submit": 2, "fail": 1, "restore": 1, "rundown": None,
    "abort": 1, "notify": 1, "update": 3, "remove": 1, "set": 2, "login": 2,
    "metric": 3, "checkpoint": 0, "ack": None,
}


def parse_scenario(text):
    sc = Scenario()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        head, *rest = line.split()
        args, opts = _split(rest, lineno)
        if head == "set":
            for k, v in opts.items():
                if k not in DEFAULT_SETTINGS:
                    raise ScenarioError(f"unknown setting {k!r}", lineno)
                sc.settings[k] = _num(v, lineno)
            if args:
                raise ScenarioError("set takes key=value pairs", lineno)
        elif head in ("node", "nodes"):
            kind = opts.get("kind", "batch")
            if kind not in NODE_KINDS:
                raise ScenarioError(f"unknown node kind {kind!r}", lineno)
            slots = int(_num(opts.get("slots", "1"), lineno))
            cluster = _name(opts.get("cluster", "default"), lineno)
            if head == "node":
                if len(args) != 1:
                    raise ScenarioError("expected 'node <name> kind=...'", lineno)
                names = [_name(args[0], lineno)]
            else:
                if len(args) != 2:
                    raise ScenarioError("expected 'nodes <prefix> <count> kind=...'", lineno)
                count = int(_num(args[1], lineno, "count"))
                names = [_name(f"{args[0]}{i:04d}", lineno) for i in range(1, count + 1)]
            try:
                for name in names:
                    sc.add_node(NodeDecl(name, kind, slots, cluster))
            except ScenarioError as exc:
                raise ScenarioError(str(exc), lineno) from None
        elif head == "replica":
            if len(args) != 1:
                raise ScenarioError("expected 'replica <name>'", lineno)
            serves = tuple(opts.get("serves", ",".join(SERVICES)).split(","))
            for s in serves:
                if s not in SERVICES:
                    raise ScenarioError(f"unknown service {s!r}", lineno)
            sc.replicas.append((_name(args[0], lineno), serves))
        elif head == "group":
            if len(args) != 1 or "share" not in opts:
                raise ScenarioError("expected 'group <name> share=<fraction>'", lineno)
            sc.groups[_name(args[0], lineno)] = _num(opts["share"], lineno, "share")
        elif head == "package":
            if len(args) not in (3, 4):
                raise ScenarioError("expected 'package <name> <version> <release> [arch]'", lineno)
            sc.packages.append((_name(args[0], lineno), args[1], args[2], args[3] if len(args) == 4 else "noarch"))
        elif head == "secret":
            if len(args) != 2:
                raise ScenarioError("expected 'secret <label> <value>'", lineno)
            sc.secrets[args[0]] = args[1]
        elif head == "alarm":
            if len(args) != 3 or args[1] not in (">", ">=", "<", "<="):
                raise ScenarioError("expected 'alarm <metric> >|>=|<|<= <value>'", lineno)
            sc.thresholds.append(Threshold(args[0], args[1], _num(args[2], lineno)))
        elif head == "at":
            if not args:
                raise ScenarioError("expected 'at <t> <verb> ...'", lineno)
            at = _num(args[0], lineno, "time")
            if at < 0:
                raise ScenarioError("time must be >= 0", lineno)
            if len(args) < 2:
                raise ScenarioError("missing verb", lineno)
            verb, vargs = args[1], tuple(args[2:])
            if verb not in VERBS:
                raise ScenarioError(f"unknown verb {verb!r}", lineno)
            want = VERBS[verb]
            if verb == "rundown":
                if len(vargs) > 1 or (not vargs and "cluster" not in opts) or "action" not in opts:
                    raise ScenarioError("expected 'rundown <node>|cluster=NAME action=...'", lineno)
            elif want is not None and len(vargs) != want:
                raise ScenarioError(f"{verb} takes {want} argument(s)", lineno)
            sc.actions.append(Action(at, verb, vargs, opts, lineno))
        else:
            raise ScenarioError(f"unknown directive {head!r}", lineno)

    if not sc.packages:
        sc.packages = list(DEFAULT_PACKAGES)
    if not sc.secrets:
        sc.secrets = dict(DEFAULT_SECRETS)
    if not sc.replicas:
        sc.replicas = [("srv1", SERVICES)]
    if not sc.groups:
        sc.groups = {"default": 1.0}
    for a in sc.actions:
        for target in _node_refs(a):
            if target != "all" and target not in sc.nodes and target not in dict(sc.replicas):
                raise ScenarioError(f"unknown target {target!r}", a.line)
    sc.actions.sort(key=lambda a: a.at)
    return sc


def _node_refs(action):
    if action.verb in ("install", "reinstall", "fail", "restore", "abort", "login", "metric"):
        return [action.args[0]]
    if action.verb == "rundown" and action.args:
        return [action.args[0]]
    return []


def load_scenario(path):
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())
