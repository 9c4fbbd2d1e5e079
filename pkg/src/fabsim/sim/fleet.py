"""Deterministic fleet simulator.

Binds virtual nodes, the replicated server cluster, the key server, the
notification server, the batch scheduler, rundowns and monitoring into one
event loop.  Everything random comes from one seeded generator, and every
state change is written to the trace as ``t=<time> ev=<kind> k=v ...``.
"""

from __future__ import annotations

import base64
import random
from dataclasses import dataclass, field

from fabsim.agent import (
    Disk,
    InstallSpec,
    Mount,
    NodeAgent,
    Phase,
    WIPED,
    VirtualNode,
    state_digest,
)
from fabsim.batch import Scheduler
from fabsim.bootstrap import KeyServer, decrypt_secret, parse_key_reply, parse_secret_reply
from fabsim.config import ConfigDatabase, parse_profile, serialize_profile
from fabsim.errors import (
    AllReplicasDownError,
    FabricError,
    RundownError,
    ScenarioError,
)
from fabsim.notify import NotifyClient, NotifyEvent, NotifyServer, NotifySession
from fabsim.packages import DesiredList, PackageSpec, desired_from_profile
from fabsim.rundown import (
    BATCH,
    INTERACTIVE,
    KERNEL_UPDATE,
    REINSTALL,
    RundownCoordinator,
    RundownHost,
    RundownPlan,
)
from fabsim.sim import site
from fabsim.sim.events import EventLoop
from fabsim.sim.monitoring import Monitoring
from fabsim.sim.replicas import ReplicaPool, ServerReplica
from fabsim.sim.scenario import Scenario, parse_scenario
from fabsim.sim.trace import SimTrace, check_trace

TAGS = ("rpmupdate", "confupdate")


def _fmt(value):
    if isinstance(value, float):
        return f"{value:.3f}"
    return str(value).replace(" ", "_")


@dataclass
class SimNode:
    decl: object
    vm: VirtualNode
    client: NotifyClient
    token: int = 0
    private_key: object = None
    session: object = None
    logins_open: bool = True
    users: dict = field(default_factory=dict)
    install_started: float = 0.0

    @property
    def name(self):
        return self.decl.name

    @property
    def rundown_kind(self):
        # disk servers have no batch slots; they drain like interactive nodes
        return BATCH if self.decl.kind == "batch" else INTERACTIVE


class _Host(RundownHost):
    def __init__(self, sim):
        self.sim = sim

    def in_production(self, node):
        return self.sim.nodes[node].vm.phase is Phase.PRODUCTION

    def close(self, node, kind):
        n = self.sim.nodes[node]
        if n.decl.kind == "batch":
            self.sim.scheduler.close_host(node)
            self.sim.emit("host_close", host=node)
        else:
            n.logins_open = False
            self.sim.emit("logins_closed", node=node)

    def reopen(self, node, kind):
        n = self.sim.nodes[node]
        if n.decl.kind == "batch":
            self.sim.scheduler.open_host(node)
            self.sim.emit("host_open", host=node)
        else:
            n.logins_open = True
            self.sim.emit("logins_open", node=node)

    def blocking(self, node, kind):
        n = self.sim.nodes[node]
        if n.decl.kind == "batch":
            return self.sim.scheduler.running_jobs(node)
        return len(n.users)

    def force_logout(self, node):
        n = self.sim.nodes[node]
        self.sim.emit("force_logout", node=node, users=len(n.users))
        n.users.clear()

    def mute(self, node):
        self.sim.monitor.mute(node)
        self.sim.emit("mute", node=node)

    def unmute(self, node):
        self.sim.monitor.unmute(node)
        self.sim.emit("unmute", node=node)

    def notice(self, node, message, now):
        # stands in for the mail to users and operators
        self.sim.emit("notice", node=node, msg=message.replace(":", "").replace(" ", "_"))

    def enter_draining(self, node):
        self.sim.move(self.sim.nodes[node], Phase.DRAINING, "rundown")

    def leave_draining(self, node):
        self.sim.move(self.sim.nodes[node], Phase.PRODUCTION, "rundown")

    def begin_action(self, node, action, now):
        self.sim.begin_action(self.sim.nodes[node], action, now)


class FleetSimulator:
    def __init__(self, scenario: Scenario, seed=0, agent=None):
        self.scenario = scenario
        self.settings = dict(scenario.settings)
        self.rng = random.Random(seed)
        self.loop = EventLoop()
        self.lines = []
        self.agent = agent or NodeAgent()
        self.pool = ReplicaPool(ServerReplica(name, frozenset(serves)) for name, serves in scenario.replicas)
        self.keys = KeyServer(default_window=self.settings["window"])
        self.notify = NotifyServer()
        self.monitor = Monitoring(scenario.nodes, scenario.thresholds)
        try:
            self.scheduler = Scheduler(scenario.groups, half_life=self.settings["half_life"])
        except FabricError as exc:
            raise ScenarioError(str(exc)) from None
        self.coordinator = RundownCoordinator(_Host(self))

        self.packages = {name: PackageSpec(name, v, r, a) for name, v, r, a in scenario.packages}
        self.base_image = DesiredList(self.packages.values())
        self.local_settings = {}
        self.pins = {}
        self.config = ConfigDatabase(schema=site.site_schema())
        self.config.put_template(site.site_template(self.packages))
        self.config.put_template(site.local_template(self.local_settings))
        for kind in sorted({d.kind for d in scenario.nodes.values()}):
            self.config.put_template(site.kind_template(kind))
        for cluster in sorted({d.cluster for d in scenario.nodes.values()}):
            self.config.put_template(site.cluster_template(cluster))
        for name in sorted(scenario.nodes):
            self.config.put_template(site.object_template(scenario.nodes[name]))
        self._compiled = {}

        self.nodes = {
            name: SimNode(decl, VirtualNode(name), NotifyClient(name))
            for name, decl in sorted(scenario.nodes.items())
        }
        self._wakes = set()
        self.checkpoints = []
        for action in scenario.actions:
            self.loop.schedule(action.at, "action", action=action)

    # -- trace -------------------------------------------------------------

    def emit(self, event, **fields):
        parts = [f"t={self.loop.now:.3f}", f"ev={event}"]
        parts.extend(f"{k}={_fmt(v)}" for k, v in fields.items())
        self.lines.append(" ".join(parts))

    def move(self, n, phase, cause):
        before = n.vm.phase
        n.vm.state.move(phase)
        self.emit("phase", node=n.name, to=phase, cause=cause, **{"from": before})

    def _note_phase(self, n, before, cause):
        if n.vm.phase is not before:
            self.emit("phase", node=n.name, to=n.vm.phase, cause=cause, **{"from": before})

    def jitter(self, value):
        j = self.settings["jitter"]
        return value * (1.0 + self.rng.uniform(-j, j)) if j else value

    # -- server cluster ----------------------------------------------------

    def request(self, service, handler):
        def on_retry(svc, replica, attempt):
            self.emit("retry", service=svc, replica=replica, attempt=attempt)

        try:
            return self.pool.request(service, handler, on_retry)
        except AllReplicasDownError:
            serving = [r for r in self.pool.replicas.values() if service in r.serves]
            self.emit("request_failed", service=service, total=len(serving),
                      up=sum(1 for r in serving if r.up))
            raise

    def profile_for(self, node):
        profile = self._compiled.get(node)
        if profile is None:
            profile = self._compiled[node] = self.config.compile(node)
        return profile

    def fetch_profile(self, node):
        data = self.request("profiles", lambda r: serialize_profile(self.profile_for(node)))
        return parse_profile(data)

    def fetch_packages(self, node, todo):
        if todo:
            self.request("packages", lambda r: len(todo))

    def _config_changed(self, what):
        self._compiled.clear()
        self.emit("config_change", what=what)

    # -- install -----------------------------------------------------------

    def install_spec(self, n):
        table = [Mount("/", 20), Mount("/tmp", 10)]
        if n.decl.kind == "disk":
            table.append(Mount("/data", 2000, preserve=True))
        return InstallSpec(table, self.base_image)

    def start_install(self, n, now, cause):
        vm = n.vm
        if vm.phase is Phase.BASE_INSTALLING:
            self.emit("install_refused", node=n.name, reason="already_installing")
            return False
        self._take_offline(n, now)
        n.token += 1
        n.private_key = None
        n.install_started = now
        epoch = self.keys.current_epoch(n.name) + 1
        self.keys.generate_node_key(n.name, epoch, now)
        for label in sorted(self.scenario.secrets):
            payload = base64.b64encode(self.scenario.secrets[label].encode()).decode()
            self.keys.handle(f"PUTSECRET {n.name} {label} {payload}", now)
        reply = self.keys.handle(f"OPENWIN {n.name} {self.settings['window']:g}", now)
        before = vm.phase
        self.agent.start_base_install(vm, self.install_spec(n))
        self._note_phase(n, before, cause)
        self.emit("install", node=n.name, epoch=epoch, window=reply.replace(" ", ","))
        self.loop.after(self.jitter(self.settings["key_delay"]), "key_fetch", node=n.name, token=n.token)
        self.loop.after(self.jitter(self.settings["install_time"]), "install_done", node=n.name, token=n.token)
        return True

    def _take_offline(self, n, now):
        """Detach a node from batch and notification before it goes away."""
        if n.name in self.scheduler.hosts and self.scheduler.hosts[n.name].up:
            for job in self.scheduler.host_down(n.name, now):
                self.emit("job_lost", job=job.id, host=n.name, reason=job.pending_reason)
            self.emit("host_down", host=n.name)
        if n.session is not None:
            n.session.close()
            n.session = None
        n.users.clear()

    def on_key_fetch(self, n, now):
        try:
            reply = self.request("keys", lambda r: self.keys.handle(f"FETCHKEY {n.name}", now))
        except AllReplicasDownError:
            return self.install_failed(n, "keys_unreachable")
        if not reply.startswith("OK"):
            self.emit("key_fetch", node=n.name, result=reply.replace(" ", "_"))
            return self.install_failed(n, "key_fetch")
        n.private_key = parse_key_reply(n.name, reply)
        self.emit("key_fetch", node=n.name, result="ok", epoch=n.private_key.epoch)

    def install_failed(self, n, reason):
        self.emit("install_failed", node=n.name, reason=reason)
        if n.vm.phase is not Phase.DOWN:
            self.move(n, Phase.DOWN, "install_failure")
        n.token += 1
        self.alarm(n, f"install_failed_{reason}")

    def on_install_done(self, n, now):
        before = n.vm.phase
        self.agent.finish_base_install(n.vm)
        self._note_phase(n, before, "install")
        self.loop.after(self.jitter(self.settings["boot_time"]), "boot_done", node=n.name, token=n.token)

    def on_boot_done(self, n, now):
        vm = n.vm
        self._fetch_secrets(n, now)
        counts = {}

        def fetch_packages(node, todo):
            counts.update(todo.counts())
            self.fetch_packages(node, todo)

        before = vm.phase
        self.agent.first_boot(vm, self.fetch_profile, fetch_packages)
        self._note_phase(n, before, "install")
        if vm.phase is Phase.PRODUCTION:
            self.emit("reconcile", node=n.name, cause="install", gen=vm.applied_profile_generation,
                      **{k: counts.get(k, 0) for k in ("remove", "downgrade", "upgrade", "install")})
            self.monitor.record_metric(n.name, "install_seconds", now - n.install_started, now)
            self.on_production(n, now)
        else:
            for err in vm.errors:
                self.emit("config_error", node=n.name, error=err.split(":", 1)[0])
            self.install_failed(n, "configuration")

    def _fetch_secrets(self, n, now):
        labels = self.keys.secret_labels(n.name)
        for label in labels:
            try:
                reply = self.request("keys", lambda r, label=label: self.keys.handle(f"GETSECRET {n.name} {label}", now))
                if n.private_key is None or not reply.startswith("OK"):
                    raise FabricError(reply if not reply.startswith("OK") else "no private key")
                blob = parse_secret_reply(n.name, label, reply)
                n.vm.secrets[label] = decrypt_secret(n.private_key, blob, self.keys.provider)
            except FabricError as exc:
                self.emit("secret_failed", node=n.name, label=label, error=type(exc).__name__)
        self.emit("secrets", node=n.name, count=len(n.vm.secrets))

    def on_production(self, n, now):
        vm = n.vm
        if n.decl.kind == "disk" and vm.disks["/data"].data_digest == WIPED:
            # a fresh data disk gets user data, which later reinstalls must keep
            vm.write_data("/data", f"{n.name} user data".encode())
        if n.decl.kind == "batch":
            if n.name not in self.scheduler.hosts:
                self.scheduler.add_host(n.name, n.decl.slots)
            else:
                self.scheduler.host_up(n.name)
                self.scheduler.open_host(n.name)
            self.emit("host_up", host=n.name, slots=n.decl.slots)
        n.logins_open = True
        n.client = NotifyClient(n.name)
        try:
            n.session = self.request("notify", lambda r: NotifySession(self.notify, n.name))
            for tag in TAGS:
                self.request("notify", lambda r, tag=tag: n.session.handle(f"SUB {tag}", now))
        except AllReplicasDownError:
            return
        if self.notify.pending(n.name):
            self.loop.after(self.jitter(self.settings["latency"]), "deliver", node=n.name)
        st = self.coordinator.active(n.name)
        if st is not None and st.phase == "acting":
            self.coordinator.action_done(n.name, now)

    # -- notifications -----------------------------------------------------

    def on_notify(self, tag, now):
        try:
            ev = self.request("notify", lambda r: self.notify.notify(tag, now))
        except AllReplicasDownError:
            return
        subscribers = self.notify.subscribers(tag)
        self.emit("notify", tag=tag, seq=ev.seq, subscribers=len(subscribers))
        for name in subscribers:
            if self.notify.is_connected(name):
                self.loop.after(self.jitter(self.settings["latency"]), "deliver", node=name)

    def on_deliver(self, n, now):
        if n.session is None or n.vm.phase is not Phase.PRODUCTION:
            return
        try:
            lines = self.request("notify", lambda r: n.session.push())
        except AllReplicasDownError:
            self.loop.after(self.settings["detect_delay"], "deliver", node=n.name)
            return
        events = []
        for line in lines:
            _, tag, seq = line.split()
            events.append(NotifyEvent(tag, int(seq), now))
        for ev in n.client.accept(events):
            self.emit("deliver", node=n.name, tag=ev.tag, seq=ev.seq)
            self.act_on(n, ev.tag, now)
        last = {}
        for ev in events:
            last[ev.tag] = max(last.get(ev.tag, 0), ev.seq)
        for tag in sorted(last):
            self.request("notify", lambda r, tag=tag: n.session.handle(f"ACK {tag} {last[tag]}", now))

    def act_on(self, n, tag, now, cause=None):
        vm = n.vm
        cause = cause or tag
        try:
            profile = self.fetch_profile(n.name)
        except FabricError:
            self.emit("update_failed", node=n.name, tag=tag, reason="profile")
            return
        if tag == "rpmupdate":
            counts = {}

            def fetch_packages(node, todo):
                counts.update(todo.counts())
                self.fetch_packages(node, todo)

            try:
                failed = self.agent.update_in_place(vm, profile, fetch_packages)
            except FabricError:
                self.emit("update_failed", node=n.name, tag=tag, reason="packages")
                return
            self.emit("reconcile", node=n.name, cause=cause, gen=profile.generation,
                      **{k: counts.get(k, 0) for k in ("remove", "downgrade", "upgrade", "install")})
        elif tag == "confupdate":
            failed = self.agent.run_components(vm, profile)
            self.emit("configure", node=n.name, cause=cause, gen=profile.generation)
        else:
            self.emit("ignored", node=n.name, tag=tag)
            return
        for name in failed:
            self.emit("component_failed", node=n.name, component=name)

    # -- rundown actions ---------------------------------------------------

    def begin_action(self, n, action, now):
        self.move(n, Phase.INTERVENTION, "rundown")
        self.emit("action_start", node=n.name, action=action)
        if action == REINSTALL:
            self.start_install(n, now, "rundown")
            return
        profile = None
        if action == KERNEL_UPDATE:
            try:
                profile = self.fetch_profile(n.name)
                kernel = desired_from_profile(profile).get("kernel", self.pins[n.name]["kernel"].arch)
                self.fetch_packages(n.name, [kernel])
            except FabricError:
                self.emit("action_failed", node=n.name, action=action)
                profile = None
            else:
                self.agent.apply_single(n.vm, kernel)
                self.emit("kernel_update", node=n.name, kernel=kernel.evr)
        self.loop.after(self.jitter(self.settings["boot_time"]), "action_done",
                        node=n.name, token=n.token, profile=profile)

    def on_action_done(self, n, profile, now):
        self.agent.reboot(n.vm)
        if profile is not None:
            for name in self.agent.run_components(n.vm, profile):
                self.emit("component_failed", node=n.name, component=name)
        self.move(n, Phase.PRODUCTION, "rundown")
        self.emit("action_done", node=n.name)
        self.coordinator.action_done(n.name, now)

    def start_rundown(self, action, now):
        names = [action.args[0]] if action.args else sorted(
            name for name, n in self.nodes.items() if n.decl.cluster == action.opts["cluster"]
        )
        kind_of_action = action.opts["action"].replace("-", "_")
        if "max_parallel" in action.opts:
            self.coordinator.max_parallel = int(action.opts["max_parallel"])
        grace = float(action.opts.get("grace", self.settings["grace"]))
        kernel = action.opts.get("kernel")
        for name in names:
            n = self.nodes[name]
            try:
                plan = RundownPlan(name, n.rundown_kind, kind_of_action,
                                   grace if n.rundown_kind == INTERACTIVE else None, now)
                if kind_of_action == KERNEL_UPDATE:
                    self._pin_kernel(n, kernel)
                self.coordinator.start_rundown(plan, now)
            except (RundownError, FabricError) as exc:
                self.emit("rundown_refused", node=name, reason=type(exc).__name__)
                continue
            self.emit("rundown", node=name, action=kind_of_action, kind=n.rundown_kind,
                      grace=plan.grace if plan.grace is not None else "-")

    def _pin_kernel(self, n, kernel):
        if n.vm.phase is not Phase.PRODUCTION:
            raise RundownError(f"{n.name} is not in production")
        if not kernel:
            raise RundownError("kernel_update needs kernel=VERSION-RELEASE")
        version, _, release = kernel.rpartition("-")
        arch = self.packages["kernel"].arch if "kernel" in self.packages else "noarch"
        pins = self.pins.setdefault(n.name, {})
        pins["kernel"] = PackageSpec("kernel", version, release, arch)
        self.config.put_template(site.object_template(n.decl, pins))
        self._compiled.pop(n.name, None)
        self.emit("config_change", what=f"pin_kernel_{n.name}")

    # -- failures, users, monitoring ----------------------------------------

    def fail_node(self, n, now):
        if n.vm.phase in (Phase.DOWN, Phase.UNPROVISIONED):
            self.emit("fail_ignored", node=n.name, phase=n.vm.phase)
            return
        n.token += 1
        self._take_offline(n, now)
        self.move(n, Phase.DOWN, "failure")
        self.alarm(n, "node_down")
        st = self.coordinator.cancel(n.name, now)
        if st is not None:
            self.emit("rundown_cancelled", node=n.name)

    def alarm(self, n, condition):
        now = self.loop.now
        if self.monitor.raise_alarm(n.name, condition, now) is None:
            self.emit("alarm_suppressed", node=n.name, condition=condition)
        else:
            self.emit("alarm", node=n.name, condition=condition)

    # -- scenario actions --------------------------------------------------

    def _targets(self, target):
        if target == "all":
            return [self.nodes[name] for name in sorted(self.nodes)]
        return [self.nodes[target]]

    def on_action(self, a, now):
        verb, args, opts = a.verb, a.args, a.opts
        if verb in ("install", "reinstall"):
            for n in self._targets(args[0]):
                if self.coordinator.active(n.name):
                    self.emit("install_refused", node=n.name, reason="rundown_active")
                    continue
                self.start_install(n, now, "operator")
        elif verb == "submit":
            group, runtime = args[0], float(args[1])
            for _ in range(int(opts.get("count", 1))):
                try:
                    job_id = self.scheduler.submit(group, runtime, now)
                except FabricError as exc:
                    self.emit("submit_refused", group=group, reason=type(exc).__name__)
                    break
                self.emit("submit", job=job_id, group=group, runtime=runtime)
        elif verb == "fail":
            if args[0] in self.pool.replicas:
                self.pool.fail(args[0])
                self.emit("replica_fail", replica=args[0])
                self.loop.after(self.settings["detect_delay"], "replica_detect", replica=args[0])
            else:
                self.fail_node(self.nodes[args[0]], now)
        elif verb == "restore":
            if args[0] in self.pool.replicas:
                self.pool.restore(args[0])
                self.emit("replica_restore", replica=args[0])
            else:
                self.start_install(self.nodes[args[0]], now, "operator")
        elif verb == "rundown":
            self.start_rundown(a, now)
        elif verb == "abort":
            try:
                self.coordinator.abort_rundown(args[0], now)
                self.emit("rundown_aborted", node=args[0])
            except RundownError as exc:
                self.emit("abort_refused", node=args[0], reason=type(exc).__name__)
        elif verb == "notify":
            self.on_notify(args[0], now)
        elif verb == "update":
            name, version, release = args
            old = self.packages.get(name)
            arch = opts.get("arch", old.arch if old else "noarch")
            self.packages[name] = PackageSpec(name, version, release, arch)
            self.config.put_template(site.site_template(self.packages))
            self._config_changed(f"package_{name}")
        elif verb == "remove":
            if self.packages.pop(args[0], None) is not None:
                self.config.put_template(site.site_template(self.packages))
                self._config_changed(f"remove_{args[0]}")
        elif verb == "set":
            self.local_settings[args[0]] = site.parse_literal(args[1])
            self.config.put_template(site.local_template(self.local_settings))
            self._config_changed(f"set_{args[0]}")
        elif verb == "login":
            n = self.nodes[args[0]]
            if n.vm.phase is not Phase.PRODUCTION or not n.logins_open or n.decl.kind == "batch":
                self.emit("login_refused", node=n.name)
                return
            session = len(self.lines)
            n.users[session] = now + float(args[1])
            self.emit("login", node=n.name, session=session)
            self.loop.schedule(n.users[session], "logout", node=n.name, session=session, token=n.token)
        elif verb == "metric":
            node, metric, value = args[0], args[1], float(args[2])
            self.emit("metric", node=node, metric=metric, value=value)
            before = len(self.monitor.suppressed)
            for alarm in self.monitor.record_metric(node, metric, value, now):
                self.emit("alarm", node=node, condition=alarm.condition)
            for _, condition, _ in self.monitor.suppressed[before:]:
                self.emit("alarm_suppressed", node=node, condition=condition)
        elif verb == "ack":
            self.monitor.acknowledge(args[0] if args else None)
            self.emit("ack", node=args[0] if args else "all")
        elif verb == "checkpoint":
            self.checkpoint(now)

    # -- reinstall-equivalence sweep ----------------------------------------

    def checkpoint(self, now):
        """Reinstall a copy of every production node and compare digests.

        A node counts as converged when its applied profile is the current
        generation and its packages match it; others are reported as
        pending rather than checked, since they still have updates queued.
        """
        counts = {"ok": 0, "FAIL": 0, "pending": 0}
        for name in sorted(self.nodes):
            n = self.nodes[name]
            vm = n.vm
            if vm.phase is not Phase.PRODUCTION or vm.applied_profile is None:
                continue
            applied = vm.applied_profile
            current = self.profile_for(name)
            digest = state_digest(vm)
            converged = (
                applied.generation == current.generation
                and DesiredList(vm.installed) == desired_from_profile(applied)
            )
            if not converged:
                result = "pending"
            else:
                clone = VirtualNode(name, disks={m: Disk(d.data_digest, d.preserve) for m, d in vm.disks.items()})
                self.agent.reinstall(clone, self.install_spec(n), lambda _name: applied)
                result = "ok" if state_digest(clone) == digest else "FAIL"
            counts[result] += 1
            self.emit("checkpoint", node=name, gen=applied.generation, digest=digest[:16], equiv=result)
        if sum(counts.values()):
            self.emit("checkpoint_summary", **counts)
        self.checkpoints.append(counts)
        return counts

    # -- event loop ----------------------------------------------------------

    def handle(self, ev):
        now = ev.at
        p = ev.payload
        if ev.kind == "action":
            self.on_action(p["action"], now)
        elif ev.kind == "replica_detect":
            if not self.pool.replicas[p["replica"]].up:
                self.pool.mark_dead(p["replica"])
                self.emit("replica_dead", replica=p["replica"])
        elif ev.kind == "wake":
            self._wakes.discard(now)
        elif ev.kind == "deliver":
            self.on_deliver(self.nodes[p["node"]], now)
        else:
            n = self.nodes[p["node"]]
            if p.get("token") != n.token:
                return
            if ev.kind == "key_fetch":
                self.on_key_fetch(n, now)
            elif ev.kind == "install_done":
                self.on_install_done(n, now)
            elif ev.kind == "boot_done":
                self.on_boot_done(n, now)
            elif ev.kind == "action_done":
                self.on_action_done(n, p["profile"], now)
            elif ev.kind == "logout":
                if n.users.pop(p["session"], None) is not None:
                    self.emit("logout", node=n.name, session=p["session"])
        self._settle(now)

    def _settle(self, now):
        """Run the batch and rundown bookkeeping due at ``now``."""
        assigned = self.scheduler.schedule_tick(now)
        for job in self.scheduler.last_finished:
            self.emit("job_done", job=job.id, host=job.host)
        for job, host in assigned:
            self.emit("assign", job=job.id, group=job.group, host=host)
        if self.coordinator.states:
            self.coordinator.tick(now)
        for t in (self.scheduler.next_completion(), self.coordinator.next_deadline()):
            if t is not None and t > now and t not in self._wakes:
                self._wakes.add(t)
                self.loop.schedule(t, "wake")

    def run(self, until=float("inf")) -> SimTrace:
        self.loop.run(self.handle, until)
        if self.nodes:
            if until != float("inf"):
                self.loop.now = max(self.loop.now, until)
            self.checkpoint(self.loop.now)
        violations = check_trace(self.lines)
        return SimTrace(self.lines, violations, self.summary())

    def summary(self):
        phases = {}
        for n in self.nodes.values():
            phases[str(n.vm.phase)] = phases.get(str(n.vm.phase), 0) + 1
        return {
            "nodes": len(self.nodes),
            "phases": dict(sorted(phases.items())),
            "retries": self.pool.retries,
            "failed_requests": self.pool.failures,
            "alarms": len(self.monitor.alarms),
            "jobs": self.scheduler.counts(),
        }

    # -- operator views --------------------------------------------------------

    def status_lines(self, what=None):
        if what == "alarms":
            return [
                f"{a.raised_at:.3f} {a.node} {a.condition}{' (acked)' if a.acknowledged else ''}"
                for a in self.monitor.alarms
            ]
        if what == "rundowns":
            return self.coordinator.status_lines()
        if what == "batch":
            return self.scheduler.report().splitlines()
        return [
            f"{name} {n.decl.kind} {n.vm.phase} gen={n.vm.applied_profile_generation}"
            for name, n in sorted(self.nodes.items())
        ]


def run(scenario, seed=0, until=float("inf")) -> SimTrace:
    """Run ``scenario`` (a Scenario or scenario text) and return its trace."""
    if isinstance(scenario, str):
        scenario = parse_scenario(scenario)
    return FleetSimulator(scenario, seed).run(until)
