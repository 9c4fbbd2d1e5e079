"""Per-node versus barrier rundown on nodes whose jobs end far apart.

Three batch nodes: one idle, one whose last job ends in ten minutes, one
running a week-long job.  Run:  python demos/rundown_policies.py
"""

from fabsim.rundown import BATCH, KERNEL_UPDATE, RundownPlan, fleet_rundown

MIN = 60.0
drains = {"lxb0001": 0.0, "lxb0002": 10 * MIN, "lxb0003": 10080 * MIN}
plan = RundownPlan("template", BATCH, KERNEL_UPDATE)

for barrier in (False, True):
    sched = fleet_rundown(list(drains), plan, drain_times=drains, barrier=barrier)
    print(f"{sched.policy}:")
    for node, r in sorted(sched.records.items()):
        print(f"  {node}  idle at {r.drained_at / MIN:7.0f} min  acts at {r.acting_at / MIN:7.0f} min  "
              f"back at {r.done_at / MIN:7.0f} min")
    print(f"  lost node-minutes: {sched.lost_node_minutes():.0f}")
