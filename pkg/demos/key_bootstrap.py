"""Enroll a node's private key through a single-use window, then reinstall it.

Run:  python demos/key_bootstrap.py
"""

import base64

from fabsim.bootstrap import KeyServer, decrypt_secret, parse_key_reply, parse_secret_reply

server = KeyServer()
server.generate_node_key("lxb0001", 1)

print(">> FETCHKEY before any window:", server.handle("FETCHKEY lxb0001", now=0))
print(">> OPENWIN lxb0001 60:        ", server.handle("OPENWIN lxb0001 60", now=10))
reply = server.handle("FETCHKEY lxb0001", now=20)
key = parse_key_reply("lxb0001", reply)
print(">> FETCHKEY inside window:     OK epoch", key.epoch)
print(">> FETCHKEY again:            ", server.handle("FETCHKEY lxb0001", now=21))

payload = base64.b64encode(b"root:$1$abc").decode()
server.handle(f"PUTSECRET lxb0001 root_password {payload}", now=30)
blob = parse_secret_reply("lxb0001", "root_password", server.handle("GETSECRET lxb0001 root_password", now=31))
print("decrypted with epoch-1 key:   ", decrypt_secret(key, blob, server.provider))

# a reinstall rolls the key; secrets stored for the old epoch become unreadable
server.generate_node_key("lxb0001", 2)
server.handle("OPENWIN lxb0001 60", now=100)
new_key = parse_key_reply("lxb0001", server.handle("FETCHKEY lxb0001", now=101))
try:
    decrypt_secret(new_key, blob, server.provider)
except Exception as exc:
    print("old secret with epoch-2 key:  ", type(exc).__name__)
