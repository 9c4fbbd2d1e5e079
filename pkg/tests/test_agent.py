import copy

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fabsim.agent import (
    WIPED,
    FunctionComponent,
    InstallSpec,
    Mount,
    NodeAgent,
    NodeState,
    Phase,
    VirtualNode,
    can_move,
    default_components,
    state_digest,
)
from fabsim.config import ConfigDatabase, ProfileTree, parse_templates
from fabsim.errors import FabricError, IllegalPhaseError
from fabsim.packages import DesiredList, PackageSpec, desired_from_profile

BASE = DesiredList([PackageSpec("glibc", "2.3.2", "27"), PackageSpec("bash", "2.05b", "20")])


def install_spec(preserve_data=False):
    mounts = [Mount("/", 10), Mount("/tmp", 2)]
    if preserve_data:
        mounts.append(Mount("/data", 500, preserve=True))
    return InstallSpec(mounts, BASE)


def profile(packages, generation=1, services=("sshd",), name="n1"):
    root = {
        "cluster": {"name": "lxbatch"},
        "system": {"services": list(services)},
        "software": {"packages": {
            p: {"version": v, "release": r, "arch": "i386"} for p, (v, r) in packages.items()
        }},
    }
    return ProfileTree(name, root, generation)


P1 = profile({"bash": ("2.05b", "20"), "openssh": ("3.5p1", "6"), "kernel": ("2.4.20", "18")})


def built(p=P1, preserve_data=False, agent=None):
    agent = agent or NodeAgent()
    node = VirtualNode(p.node_name)
    agent.begin_install(node, install_spec(preserve_data))
    agent.first_boot(node, lambda _name: p)
    return node


# -- phase graph -------------------------------------------------------------

def test_phase_graph_main_path():
    path = [Phase.UNPROVISIONED, Phase.BASE_INSTALLING, Phase.AWAITING_FIRST_BOOT,
            Phase.CONFIGURING, Phase.PRODUCTION, Phase.DRAINING, Phase.INTERVENTION, Phase.PRODUCTION]
    state = NodeState()
    for dst in path[1:]:
        state.move(dst)
    assert state.phase is Phase.PRODUCTION


@pytest.mark.parametrize("src, dst", [
    (Phase.UNPROVISIONED, Phase.PRODUCTION),
    (Phase.AWAITING_FIRST_BOOT, Phase.PRODUCTION),
    (Phase.DOWN, Phase.PRODUCTION),
    (Phase.BASE_INSTALLING, Phase.BASE_INSTALLING),
    (Phase.DRAINING, Phase.DRAINING),
])
def test_phase_graph_rejects(src, dst):
    assert not can_move(src, dst)
    with pytest.raises(IllegalPhaseError):
        NodeState(phase=src).move(dst)


def test_hook_armed_only_while_awaiting_first_boot():
    agent, node = NodeAgent(), VirtualNode("n1")
    agent.begin_install(node, install_spec())
    assert node.phase is Phase.AWAITING_FIRST_BOOT and node.state.firstboot_hook_armed
    agent.first_boot(node, lambda _n: P1)
    assert not node.state.firstboot_hook_armed


# -- install -----------------------------------------------------------------

def test_begin_install_lays_down_base_list():
    agent, node = NodeAgent(), VirtualNode("n1")
    agent.begin_install(node, install_spec())
    assert node.installed.as_set() == BASE.as_set()
    assert node.disks["/"].data_digest == WIPED
    assert node.install_count == 1


def test_begin_install_while_installing_is_illegal():
    agent, node = NodeAgent(), VirtualNode("n1")
    agent.start_base_install(node, install_spec())
    with pytest.raises(IllegalPhaseError):
        agent.begin_install(node, install_spec())


def test_install_spec_validation():
    with pytest.raises(FabricError):
        InstallSpec([Mount("/tmp", 1)], BASE)
    with pytest.raises(FabricError):
        InstallSpec([Mount("/", 1, preserve=True)], BASE)
    with pytest.raises(FabricError):
        InstallSpec([Mount("/", 1), Mount("/", 2)], BASE)
    with pytest.raises(FabricError):
        InstallSpec([Mount("/", 1)], BASE, boot_method="cdrom")
    for method in ("floppy", "kernel", "pxe"):
        InstallSpec([Mount("/", 1)], BASE, boot_method=method)


def test_preserved_mount_survives_reinstall():
    agent = NodeAgent()
    node = built(preserve_data=True, agent=agent)
    node.write_data("/data", b"physics")
    node.write_data("/", b"scratch")
    kept = node.disks["/data"].data_digest
    assert kept != WIPED
    agent.reinstall(node, install_spec(preserve_data=True), lambda _n: P1)
    assert node.disks["/data"].data_digest == kept
    assert node.disks["/"].data_digest == WIPED


def test_unpreserved_mount_is_wiped_when_spec_drops_preserve():
    agent = NodeAgent()
    node = built(preserve_data=True, agent=agent)
    node.write_data("/data", b"physics")
    spec = InstallSpec([Mount("/", 10), Mount("/data", 500)], BASE)
    agent.reinstall(node, spec, lambda _n: P1)
    assert node.disks["/data"].data_digest == WIPED


# -- first boot --------------------------------------------------------------

def test_first_boot_installs_profile_packages():
    node = built()
    assert node.phase is Phase.PRODUCTION
    assert node.installed.as_set() == desired_from_profile(P1).as_set()
    assert node.state.boot_count == 1
    assert node.applied_profile_generation == 1


def test_hook_runs_once():
    agent, node = NodeAgent(), VirtualNode("n1")
    agent.begin_install(node, install_spec())
    calls = []

    def fetch(name):
        calls.append(name)
        return P1

    agent.first_boot(node, fetch)
    for _ in range(3):
        agent.reboot(node, fetch)
    assert calls == ["n1"]
    assert node.state.boot_count == 4
    with pytest.raises(IllegalPhaseError):
        agent.first_boot(node, fetch)


def test_reboot_while_armed_runs_hook():
    agent, node = NodeAgent(), VirtualNode("n1")
    agent.begin_install(node, install_spec())
    agent.reboot(node, lambda _n: P1)
    assert node.phase is Phase.PRODUCTION


def test_profile_fetch_failure_leaves_configuring():
    agent, node = NodeAgent(), VirtualNode("n1")
    agent.begin_install(node, install_spec())

    def broken(_name):
        raise OSError("server unreachable")

    agent.first_boot(node, broken)
    assert node.phase is Phase.CONFIGURING
    assert not node.state.firstboot_hook_armed
    assert any("profile fetch" in e for e in node.errors)
    agent.reboot(node, broken)  # not rerun: phase stays, no new error
    assert node.errors == ["profile fetch: server unreachable"]
    agent.retry_configuration(node, lambda _n: P1)
    assert node.phase is Phase.PRODUCTION


def test_package_fetch_failure_leaves_packages_untouched():
    agent, node = NodeAgent(), VirtualNode("n1")
    agent.begin_install(node, install_spec())

    def no_payloads(_name, _plan):
        raise OSError("repository down")

    with pytest.raises(OSError):
        agent.reconcile(node, P1, no_payloads)
    assert node.installed.as_set() == BASE.as_set()


def test_bad_package_record_is_recorded():
    agent, node = NodeAgent(), VirtualNode("n1")
    agent.begin_install(node, install_spec())
    bad = ProfileTree("n1", {"software": {"packages": {"x": {"version": "1"}}}}, 1)
    agent.first_boot(node, lambda _n: bad)
    assert node.phase is Phase.CONFIGURING
    assert node.errors and node.errors[0].startswith("reconcile")


# -- components --------------------------------------------------------------

def test_run_components_idempotent():
    agent = NodeAgent()
    node = built(agent=agent)
    before = state_digest(node)
    assert agent.run_components(node, P1) == []
    assert state_digest(node) == before
    agent.run_components(node, P1, force=True)
    assert state_digest(node) == before


def test_fast_path_matches_forced_run():
    counts = {"fast": 0}

    def counted(profile, node):
        counts["fast"] += 1
        return {"/etc/x": str(profile.get("/cluster/name"))}

    comps = default_components() + [FunctionComponent("counted", counted)]
    agent = NodeAgent(comps)
    node = built(agent=agent)
    agent.reboot(node)
    agent.run_components(node, P1)
    assert counts["fast"] == 1  # skipped on the second run
    fast = state_digest(node)
    twin = copy.deepcopy(node)
    agent.run_components(twin, P1, force=True)
    assert state_digest(twin) == fast
    assert counts["fast"] == 2


def test_component_failure_does_not_stop_later_components():
    def broken(profile, node):
        raise RuntimeError("template error")

    def later(profile, node):
        return {"/etc/later": "ok\n"}

    agent = NodeAgent([FunctionComponent("broken", broken), FunctionComponent("later", later)])
    node = VirtualNode("n1")
    agent.begin_install(node, install_spec())
    agent.first_boot(node, lambda _n: P1)
    assert node.phase is Phase.CONFIGURING
    assert node.files["later"] == {"/etc/later": "ok\n"}
    assert node.errors == ["component broken: template error"]
    assert "broken" not in node.config_marks


def test_component_output_dropped_when_no_longer_rendered():
    agent = NodeAgent()
    node = built(agent=agent)
    assert "/etc/motd" in node.files["cluster"]
    p2 = ProfileTree("n1", {k: v for k, v in P1.root.items() if k != "cluster"}, 2)
    agent.update_in_place(node, p2)
    assert "cluster" not in node.files


# -- digests -----------------------------------------------------------------

def test_same_profile_same_digest():
    assert state_digest(built()) == state_digest(built())


def test_one_package_version_changes_digest():
    other = profile({"bash": ("2.05b", "21"), "openssh": ("3.5p1", "6"), "kernel": ("2.4.20", "18")})
    assert state_digest(built()) != state_digest(built(other))


def test_digest_ignores_boot_count_secrets_and_scratch():
    agent = NodeAgent()
    a, b = built(agent=agent), built(agent=agent)
    agent.reboot(b)
    b.secrets["root_password"] = "x"
    b.write_data("/tmp", b"junk")
    assert state_digest(a) == state_digest(b)


def test_digest_replayable_from_external_state():
    """Wipe everything not stored outside the node, replay, same digest."""
    agent = NodeAgent()
    node = built(preserve_data=True, agent=agent)
    node.write_data("/data", b"keep")
    replay = VirtualNode("n1", disks=copy.deepcopy(node.disks))
    agent.begin_install(replay, install_spec(preserve_data=True))
    agent.first_boot(replay, lambda _n: node.applied_profile)
    assert state_digest(replay) == state_digest(node)


def test_update_in_place_equals_reinstall_with_config_database():
    text = (
        "template base;\n"
        "'/software/packages/bash' = {version = '2.05b', release = '20', arch = 'i386'};\n"
        "'/system/services' = ['sshd'];\n"
        "object n1;\ninclude base;\n'/cluster/name' = 'lxplus';\n"
    )
    db = ConfigDatabase(parse_templates(text))
    agent = NodeAgent()
    node = built(db.compile("n1"), agent=agent)
    db.put_template(parse_templates(
        "object n1;\ninclude base;\n'/cluster/name' = 'lxplus';\n"
        "'/software/packages/bash' := {version = '2.05b', release = '31', arch = 'i386'};\n"
        "'/software/packages/kernel' = {version = '2.4.21', release = '4', arch = 'i686'};\n"
    )[0])
    p2 = db.compile("n1")
    assert p2.generation == 2
    agent.update_in_place(node, p2)
    fresh = built(p2, agent=agent)
    assert state_digest(node) == state_digest(fresh)


# -- reinstall equivalence over random profile evolution ---------------------

package_maps = st.dictionaries(
    st.sampled_from(["bash", "glibc", "kernel", "openssh", "perl", "lsf"]),
    st.tuples(st.sampled_from(["1", "1.0", "2.4.20", "2.05b", "3.5p1"]), st.sampled_from(["1", "6", "18"])),
    max_size=6,
)
evolution = st.lists(
    st.tuples(package_maps, st.lists(st.sampled_from(["sshd", "afs", "lsf", "crond"]), unique=True, max_size=4)),
    min_size=1,
    max_size=6,
)


@settings(max_examples=150, deadline=None)
@given(evolution, st.booleans(), st.lists(st.sampled_from(["reboot", "reconfigure"]), max_size=4))
def test_reinstall_equivalence(steps, preserve, noise):
    agent = NodeAgent()
    node = VirtualNode("n1")
    agent.begin_install(node, install_spec(preserve))
    first = profile(*steps[0][:1], generation=1, services=steps[0][1])
    agent.first_boot(node, lambda _n: first)
    if preserve:
        node.write_data("/data", b"user files")
    current = first
    for gen, (pkgs, services) in enumerate(steps[1:], start=2):
        current = profile(pkgs, gen, services)
        agent.update_in_place(node, current)
        for op in noise:
            if op == "reboot":
                agent.reboot(node)
            else:
                agent.update_in_place(node, current)
    updated = state_digest(node)

    twin = copy.deepcopy(node)
    agent.reinstall(twin, install_spec(preserve), lambda _n: current)
    assert twin.phase is Phase.PRODUCTION
    assert state_digest(twin) == updated
