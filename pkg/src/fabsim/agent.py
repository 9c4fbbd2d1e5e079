"""Virtual nodes and the agent that installs and configures them.

A node is built in two phases: a base install from an InstallSpec, then a
run-once first-boot hook that fetches the node's profile, reconciles the
package list against it and runs the configuration components.  An update
in place runs the same reconcile and components against a newer profile,
and must leave the node in the state a fresh reinstall would produce.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum

from fabsim.errors import FabricError, IllegalPhaseError
from fabsim.packages import (
    DesiredList,
    InstalledSet,
    PackageSpec,
    apply,
    desired_from_profile,
    plan,
)

log = logging.getLogger(__name__)


class Phase(str, Enum):
    UNPROVISIONED = "unprovisioned"
    BASE_INSTALLING = "base_installing"
    AWAITING_FIRST_BOOT = "awaiting_first_boot"
    CONFIGURING = "configuring"
    PRODUCTION = "production"
    DRAINING = "draining"
    INTERVENTION = "intervention"
    DOWN = "down"

    def __str__(self):
        return self.value


_P = Phase
TRANSITIONS = {
    _P.UNPROVISIONED: {_P.BASE_INSTALLING},
    _P.BASE_INSTALLING: {_P.AWAITING_FIRST_BOOT, _P.DOWN},
    _P.AWAITING_FIRST_BOOT: {_P.CONFIGURING},
    _P.CONFIGURING: {_P.PRODUCTION},
    _P.PRODUCTION: {_P.DRAINING, _P.INTERVENTION, _P.DOWN, _P.BASE_INSTALLING},
    _P.DRAINING: {_P.INTERVENTION, _P.PRODUCTION},
    _P.INTERVENTION: {_P.BASE_INSTALLING, _P.PRODUCTION},
    _P.DOWN: {_P.BASE_INSTALLING},
}
# A node can be reinstalled from anywhere but mid-install, and any node can crash.
for _src in Phase:
    if _src is not _P.BASE_INSTALLING:
        TRANSITIONS[_src].add(_P.BASE_INSTALLING)
    TRANSITIONS[_src].add(_P.DOWN)
TRANSITIONS[_P.DOWN].discard(_P.DOWN)
TRANSITIONS[_P.UNPROVISIONED].discard(_P.DOWN)


def can_move(src, dst):
    return dst in TRANSITIONS[src]


@dataclass
class NodeState:
    phase: Phase = Phase.UNPROVISIONED
    boot_count: int = 0
    firstboot_hook_armed: bool = False

    def move(self, dst):
        if not can_move(self.phase, dst):
            raise IllegalPhaseError(f"illegal transition {self.phase} -> {dst}")
        self.phase = dst
        if dst is not Phase.AWAITING_FIRST_BOOT:
            self.firstboot_hook_armed = False


@dataclass(frozen=True)
class Mount:
    mount_point: str
    size_gb: int
    preserve: bool = False


@dataclass
class InstallSpec:
    partition_table: list
    base_packages: DesiredList
    boot_method: str = "pxe"

    def __post_init__(self):
        roots = [m for m in self.partition_table if m.mount_point == "/"]
        if len(roots) != 1:
            raise FabricError("install spec needs exactly one root mount")
        if roots[0].preserve:
            raise FabricError("the root mount cannot be preserved")
        if self.boot_method not in ("floppy", "kernel", "pxe"):
            raise FabricError(f"unknown boot method {self.boot_method!r}")


@dataclass
class Disk:
    data_digest: str
    preserve: bool = False


WIPED = hashlib.sha256(b"").hexdigest()


@dataclass
class VirtualNode:
    name: str
    state: NodeState = field(default_factory=NodeState)
    installed: InstalledSet = field(default_factory=InstalledSet)
    disks: dict = field(default_factory=dict)
    applied_profile: object = None
    secrets: dict = field(default_factory=dict)
    config_marks: dict = field(default_factory=dict)
    files: dict = field(default_factory=dict)
    errors: list = field(default_factory=list)
    install_count: int = 0

    @property
    def phase(self):
        return self.state.phase

    @property
    def applied_profile_generation(self):
        return self.applied_profile.generation if self.applied_profile is not None else 0

    def write_data(self, mount, content: bytes):
        """Change what is stored on ``mount`` (stands in for user data)."""
        disk = self.disks[mount]
        disk.data_digest = hashlib.sha256(disk.data_digest.encode() + content).hexdigest()


def state_digest(node: VirtualNode) -> str:
    """Digest of everything a reinstall must reproduce.

    Boot count, secrets and key material, and the content of non-preserved
    disks are left out on purpose.
    """
    h = hashlib.sha256()
    for spec in node.installed:
        h.update(f"pkg {spec.name} {spec.version} {spec.release} {spec.arch}\n".encode())
    for mount in sorted(node.disks):
        disk = node.disks[mount]
        if disk.preserve:
            h.update(f"disk {mount} {disk.data_digest}\n".encode())
    if node.applied_profile is not None:
        p = node.applied_profile
        h.update(f"profile {p.generation} {p.content_hash}\n".encode())
    for comp in sorted(node.config_marks):
        h.update(f"mark {comp} {node.config_marks[comp]}\n".encode())
    for comp in sorted(node.files):
        for path in sorted(node.files[comp]):
            body = hashlib.sha256(node.files[comp][path].encode()).hexdigest()
            h.update(f"file {comp} {path} {body}\n".encode())
    return h.hexdigest()


class Component:
    """A configuration component.

    ``render`` sees the profile and the node and returns every file the
    component owns as ``{path: content}``.  Files it owned before and no
    longer returns are removed, which keeps repeated runs convergent.
    """

    name = "component"
    # True when render() reads node state beyond the profile (never fast-pathed)
    reads_node = False

    def render(self, profile, node) -> dict:
        raise NotImplementedError


class FunctionComponent(Component):
    def __init__(self, name, func, reads_node=False):
        self.name = name
        self.func = func
        self.reads_node = reads_node

    def render(self, profile, node):
        return self.func(profile, node)


def _hostname(profile, node):
    return {"/etc/hostname": node.name + "\n"}


def _cluster(profile, node):
    name = profile.get("/cluster/name")
    if name is None:
        return {}
    return {"/etc/motd": f"Welcome to {name}\n"}


def _services(profile, node):
    services = profile.get("/system/services", [])
    return {"/etc/services.enabled": "".join(f"{s}\n" for s in sorted(map(str, services)))}


def _bootloader(profile, node):
    kernels = [s for s in node.installed if s.name == "kernel"]
    if not kernels:
        return {}
    return {"/boot/grub.conf": f"default=kernel-{kernels[0].evr}\n"}


def default_components():
    return [
        FunctionComponent("hostname", _hostname),
        FunctionComponent("cluster", _cluster),
        FunctionComponent("services", _services),
        FunctionComponent("bootloader", _bootloader, reads_node=True),
    ]


class NodeAgent:
    """Drives VirtualNodes through install, first boot and reconfiguration."""

    def __init__(self, components=None):
        self.components = list(default_components() if components is None else components)

    # -- install ---------------------------------------------------------

    def begin_install(self, node: VirtualNode, spec: InstallSpec) -> VirtualNode:
        """Base install: wipe, lay down the base package set, arm the hook."""
        self.start_base_install(node, spec)
        return self.finish_base_install(node)

    def start_base_install(self, node: VirtualNode, spec: InstallSpec) -> VirtualNode:
        if node.phase is Phase.BASE_INSTALLING:
            raise IllegalPhaseError(f"{node.name} is already installing")
        node.state.move(Phase.BASE_INSTALLING)
        disks = {}
        for m in spec.partition_table:
            old = node.disks.get(m.mount_point)
            if m.preserve and old is not None:
                disks[m.mount_point] = Disk(old.data_digest, True)
            else:
                disks[m.mount_point] = Disk(WIPED, m.preserve)
        node.disks = disks
        node.installed = InstalledSet(spec.base_packages)
        node.applied_profile = None
        node.config_marks = {}
        node.files = {}
        node.secrets = {}
        node.errors = []
        node.install_count += 1
        return node

    def finish_base_install(self, node: VirtualNode) -> VirtualNode:
        node.state.move(Phase.AWAITING_FIRST_BOOT)
        node.state.firstboot_hook_armed = True
        return node

    def reboot(self, node: VirtualNode, fetch_profile=None) -> VirtualNode:
        """Reboot; runs the first-boot hook if (and only if) it is armed."""
        if node.state.firstboot_hook_armed:
            return self.first_boot(node, fetch_profile)
        node.state.boot_count += 1
        return node

    def first_boot(self, node: VirtualNode, fetch_profile, fetch_packages=None) -> VirtualNode:
        """Run the one-shot post-install hook.

        ``fetch_profile`` is called with the node name and returns its
        ProfileTree.  The hook is disarmed before it does anything, so a
        failure leaves the node in ``configuring`` without a second run.
        """
        if node.phase is not Phase.AWAITING_FIRST_BOOT or not node.state.firstboot_hook_armed:
            raise IllegalPhaseError(f"{node.name}: no first boot pending (phase {node.phase})")
        node.state.boot_count += 1
        node.state.move(Phase.CONFIGURING)
        return self._configure(node, fetch_profile, fetch_packages)

    def retry_configuration(self, node: VirtualNode, fetch_profile, fetch_packages=None) -> VirtualNode:
        """Rerun the configuration steps of a node stuck in ``configuring``."""
        if node.phase is not Phase.CONFIGURING:
            raise IllegalPhaseError(f"{node.name} is not configuring (phase {node.phase})")
        return self._configure(node, fetch_profile, fetch_packages)

    def _configure(self, node, fetch_profile, fetch_packages=None):
        try:
            profile = fetch_profile(node.name)
        except Exception as exc:
            node.errors.append(f"profile fetch: {exc}")
            log.warning("%s: profile fetch failed: %s", node.name, exc)
            return node
        try:
            self.reconcile(node, profile, fetch_packages)
        except FabricError as exc:
            node.errors.append(f"reconcile: {exc}")
            return node
        failed = self.run_components(node, profile, force=True)
        if not failed:
            node.state.move(Phase.PRODUCTION)
        return node

    def reinstall(self, node, spec, fetch_profile, fetch_packages=None):
        self.begin_install(node, spec)
        return self.first_boot(node, fetch_profile, fetch_packages)

    # -- configuration ---------------------------------------------------

    def reconcile(self, node: VirtualNode, profile, fetch_packages=None):
        """Bring ``node.installed`` to the package list ``profile`` configures.

        ``fetch_packages(node_name, plan)`` is called before anything changes
        (it stands for downloading the payloads); if it raises, the node is
        left untouched.
        """
        desired = desired_from_profile(profile)
        todo = plan(desired, node.installed)
        if fetch_packages is not None:
            fetch_packages(node.name, todo)
        if todo:
            node.installed = apply(todo, node.installed)
        return todo

    def apply_single(self, node: VirtualNode, spec: PackageSpec):
        """Install or replace one package (the kernel-update path)."""
        current = node.installed.get(spec.name, spec.arch)
        if current == spec:
            return False
        rest = [s for s in node.installed if s.key != spec.key]
        node.installed = InstalledSet(rest + [spec])
        return True

    def run_components(self, node: VirtualNode, profile, force=False):
        """Run every component against ``profile``; returns names that failed.

        Without ``force``, a component already marked at this generation of
        the same profile is skipped; the result is the same as a full run
        because components are pure functions of profile and node.
        """
        same_profile = (
            node.applied_profile is not None
            and node.applied_profile.generation == profile.generation
            and node.applied_profile.content_hash == profile.content_hash
        )
        failed = []
        for comp in self.components:
            if (
                not force
                and same_profile
                and node.config_marks.get(comp.name) == profile.generation
                and not comp.reads_node
            ):
                continue
            try:
                files = comp.render(profile, node)
            except Exception as exc:
                failed.append(comp.name)
                node.errors.append(f"component {comp.name}: {exc}")
                continue
            if files:
                node.files[comp.name] = dict(files)
            else:
                node.files.pop(comp.name, None)
            node.config_marks[comp.name] = profile.generation
        node.applied_profile = profile
        return failed

    def update_in_place(self, node: VirtualNode, profile, fetch_packages=None):
        """Reconcile packages and rerun components on a live node."""
        self.reconcile(node, profile, fetch_packages)
        return self.run_components(node, profile)

