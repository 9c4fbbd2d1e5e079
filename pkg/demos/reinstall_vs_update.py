"""Evolve one node's templates, update it in place, then reinstall a copy.

Run:  python demos/reinstall_vs_update.py
"""

from fabsim.agent import InstallSpec, Mount, NodeAgent, VirtualNode, state_digest
from fabsim.config import ConfigDatabase, parse_templates
from fabsim.packages import DesiredList, PackageSpec

SITE = """\
template site;
'/software/packages/glibc' = {version = '2.3.2', release = '27', arch = 'i686'};
'/software/packages/openssh' = {version = '3.5p1', release = '6', arch = 'i386'};
'/software/packages/kernel' = {version = '2.4.20', release = '4', arch = 'i686'};
'/system/services' = ['crond', 'sshd'];
object lxb0001;
include site;
'/system/name' = 'lxb0001';
"""

UPGRADE = """\
template site;
'/software/packages/openssh' = {version = '3.6p1', release = '1', arch = 'i386'};
'/software/packages/kernel' = {version = '2.4.21', release = '4', arch = 'i686'};
'/software/packages/lsf' = {version = '5.1', release = '2', arch = 'i386'};
'/system/services' = ['crond', 'lsf', 'sshd'];
"""

spec = InstallSpec([Mount("/", 20), Mount("/data", 500, preserve=True)],
                   DesiredList([PackageSpec("glibc", "2.3.2", "27", "i686")]))
agent = NodeAgent()
db = ConfigDatabase()
for t in parse_templates(SITE):
    db.put_template(t)

node = VirtualNode("lxb0001")
agent.begin_install(node, spec)
agent.first_boot(node, db.compile)
node.write_data("/data", b"user files")
print("installed:   ", sorted(str(p) for p in node.installed))

for t in parse_templates(UPGRADE):
    db.put_template(t)
profile = db.compile("lxb0001")
todo = agent.reconcile(node, profile)
agent.run_components(node, profile)
print("update plan: ", todo.render().replace("\n", "; "))

clone = VirtualNode("lxb0001", disks=dict(node.disks))
agent.reinstall(clone, spec, lambda _name: profile)
print("in place:    ", state_digest(node)[:16])
print("reinstalled: ", state_digest(clone)[:16])
print("equivalent:  ", state_digest(node) == state_digest(clone))
