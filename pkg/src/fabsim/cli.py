"""``fab``: operator command line.

Simulator state is not persisted between invocations, so every operator
command takes a scenario, replays it up to ``--at`` and then acts on the
simulated fleet.  ``fab compile`` works directly on template files.
"""

from __future__ import annotations

import argparse
import sys

from fabsim.batch import Scheduler, parse_workload, simulate
from fabsim.config import ConfigDatabase, GlobalSchema, parse_templates, serialize_profile
from fabsim.errors import FabricError
from fabsim.packages import desired_from_profile, plan
from fabsim.sim.fleet import FleetSimulator
from fabsim.sim.scenario import Action, load_scenario
from fabsim.sim.trace import check_trace

INF = float("inf")


def _fleet(args):
    sim = FleetSimulator(load_scenario(args.scenario), args.seed)
    sim.loop.run(sim.handle, args.at)
    if args.at != INF:
        # the scenario stops here; in-flight installs and jobs carry on
        sim.loop.drop("action")
        sim.loop.now = max(sim.loop.now, args.at)
    return sim


def _inject(sim, verb, vargs=(), opts=None):
    sim.loop.schedule(sim.loop.now, "action", action=Action(sim.loop.now, verb, tuple(vargs), opts or {}, 0))
    sim.loop.run(sim.handle)


def _finish(sim):
    """Report invariant violations in the whole trace; exit status 1 if any."""
    violations = check_trace(sim.lines)
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    return 1 if violations else 0


def cmd_sim_run(args, out):
    sim = FleetSimulator(load_scenario(args.scenario), args.seed)
    trace = sim.run(args.until)
    if args.trace:
        trace.write(args.trace)
    else:
        out.write(trace.text())
    s = trace.summary
    print(
        f"nodes={s['nodes']} phases={s['phases']} retries={s['retries']} "
        f"failed_requests={s['failed_requests']} alarms={s['alarms']} violations={len(trace.violations)}",
        file=sys.stderr,
    )
    for v in trace.violations:
        print(f"violation: {v}", file=sys.stderr)
    return 0 if trace.ok else 1


def cmd_compile(args, out):
    templates = []
    for path in args.templates:
        with open(path, encoding="utf-8") as fh:
            templates.extend(parse_templates(fh.read()))
    schema = None
    if args.schema:
        with open(args.schema, encoding="utf-8") as fh:
            schema = GlobalSchema.from_text(fh.read())
    db = ConfigDatabase(templates, schema)
    names = args.node or db.object_names()
    for name in names:
        out.write(serialize_profile(db.compile(name)).decode("utf-8"))
    return 0


def cmd_plan(args, out):
    sim = _fleet(args)
    n = sim.nodes[args.node]
    desired = desired_from_profile(sim.profile_for(args.node))
    todo = plan(desired, n.vm.installed)
    if todo:
        out.write(todo.render() + "\n")
    else:
        out.write("nothing to do\n")
    return 0


def cmd_apply(args, out):
    sim = _fleet(args)
    n = sim.nodes[args.node]
    start = len(sim.lines)
    sim.act_on(n, "rpmupdate", sim.loop.now, cause="operator")
    out.write("".join(line + "\n" for line in sim.lines[start:]))
    return _finish(sim)


def _operate(args, out, verb, vargs, opts=None):
    sim = _fleet(args)
    start = len(sim.lines)
    _inject(sim, verb, vargs, opts)
    out.write("".join(line + "\n" for line in sim.lines[start:]))
    return sim


def cmd_reinstall(args, out):
    sim = _operate(args, out, "reinstall", [args.node])
    start = len(sim.lines)
    sim.checkpoint(sim.loop.now)
    for line in sim.lines[start:]:
        if f" node={args.node} " in line:
            out.write(line + "\n")
    return _finish(sim)


def cmd_rundown(args, out):
    opts = {"action": args.action}
    if args.cluster:
        opts["cluster"] = args.cluster
    if args.grace is not None:
        opts["grace"] = str(args.grace)
    if args.max_parallel is not None:
        opts["max_parallel"] = str(args.max_parallel)
    if args.kernel:
        opts["kernel"] = args.kernel
    if not args.node and not args.cluster:
        raise FabricError("give a node or --cluster")
    sim = _operate(args, out, "rundown", [args.node] if args.node else [], opts)
    for line in sim.status_lines("rundowns"):
        out.write(line + "\n")
    return _finish(sim)


def cmd_notify(args, out):
    sim = _operate(args, out, "notify", [args.tag])
    return _finish(sim)


def cmd_status(args, out):
    sim = _fleet(args)
    what = "alarms" if args.alarms else "rundowns" if args.rundowns else "batch" if args.batch else None
    for line in sim.status_lines(what):
        out.write(line + "\n")
    return 0


def cmd_batch_report(args, out):
    shares = {}
    for item in args.shares.split(","):
        name, _, value = item.partition("=")
        shares[name] = float(value)
    sched = Scheduler.normalized(shares, half_life=args.half_life)
    for i in range(args.hosts):
        sched.add_host(f"host{i:04d}", args.slots)
    with open(args.workload, encoding="utf-8") as fh:
        subs = parse_workload(fh.read())
    simulate(sched, subs, args.until)
    out.write(sched.report())
    return 0


def _fleet_options(p):
    p.add_argument("--scenario", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--at", type=float, default=INF, help="replay the scenario up to this time first")


def build_parser():
    parser = argparse.ArgumentParser(prog="fab", description="Fabric management toolkit and fleet simulator.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("sim", help="fleet simulation")
    simsub = p.add_subparsers(dest="sim_command", required=True)
    r = simsub.add_parser("run", help="run a scenario and print its trace")
    r.add_argument("--scenario", required=True)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--until", type=float, default=INF)
    r.add_argument("--trace", help="write the trace here instead of stdout")
    r.set_defaults(func=cmd_sim_run)

    p = sub.add_parser("compile", help="compile template files to canonical profiles")
    p.add_argument("templates", nargs="+")
    p.add_argument("--schema")
    p.add_argument("--node", action="append", help="object to compile (repeatable; default all)")
    p.set_defaults(func=cmd_compile)

    for name, func, help_text in (
        ("plan", cmd_plan, "show the package plan for a node"),
        ("apply", cmd_apply, "reconcile a node against its current profile"),
        ("reinstall", cmd_reinstall, "reinstall a node and check its state digest"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("node")
        _fleet_options(p)
        p.set_defaults(func=func)

    p = sub.add_parser("rundown", help="drain nodes and act on them")
    p.add_argument("node", nargs="?")
    p.add_argument("--cluster")
    p.add_argument("--action", required=True, choices=["reboot", "reinstall", "kernel_update", "kernel-update"])
    p.add_argument("--grace", type=float)
    p.add_argument("--max-parallel", type=int)
    p.add_argument("--kernel", help="VERSION-RELEASE for kernel_update")
    _fleet_options(p)
    p.set_defaults(func=cmd_rundown)

    p = sub.add_parser("notify", help="issue a tag notification")
    p.add_argument("tag")
    _fleet_options(p)
    p.set_defaults(func=cmd_notify)

    p = sub.add_parser("status", help="fleet, alarm, rundown or batch status")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--alarms", action="store_true")
    group.add_argument("--rundowns", action="store_true")
    group.add_argument("--batch", action="store_true")
    _fleet_options(p)
    p.set_defaults(func=cmd_status)

    p = sub.add_parser("batch", help="standalone batch scheduler")
    bsub = p.add_subparsers(dest="batch_command", required=True)
    b = bsub.add_parser("report", help="run a workload and print the fairshare report")
    b.add_argument("--workload", required=True)
    b.add_argument("--shares", required=True, help="e.g. atlas=0.6,cms=0.4")
    b.add_argument("--hosts", type=int, default=10)
    b.add_argument("--slots", type=int, default=1)
    b.add_argument("--half-life", type=float, default=86400.0)
    b.add_argument("--until", type=float, default=INF)
    b.set_defaults(func=cmd_batch_report)
    return parser


def main(argv=None, out=None):
    out = out or sys.stdout
    args = build_parser().parse_args(argv)
    try:
        return args.func(args, out)
    except (FabricError, OSError, KeyError) as exc:
        print(f"fab: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
