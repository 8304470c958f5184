# %% [markdown]
# # Bell pairs and measurements
#
# The state-vector core keeps each set of entangled registers in one group.
# Groups merge when an operation spans them and split again after a
# measurement collapses a register.

# %%
import numpy as np

from sqkd import qcore
from sqkd.qcore import BellKind, Role

rng = np.random.default_rng(1)

# %%
pair = qcore.new_bell_pair(BellKind.PHI_PLUS, 0)
a, b = pair.registers
print(pair.state)
print(qcore.born_distribution(pair, [a, b], "Z"))

# %% [markdown]
# Measuring B in Z collapses A to the same bit; the two registers then live
# in separate groups.

# %%
bit = qcore.measure_z(pair, b, rng)
print("Bob's bit", bit, "A's state", qcore.state_of([a]))
print(a.group is b.group)

# %% [markdown]
# A CNOT from B onto a fresh ancilla gives a three-qubit GHZ state. A Bell
# measurement on A and B then sees phi+ and phi- with equal weight.

# %%
pair = qcore.new_bell_pair(BellKind.PHI_PLUS, 0)
a, b = pair.registers
anc = qcore.new_group([Role.EVE], qcore.ket("0"))
g = qcore.merge_groups(pair, anc)
cnot = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]])
qcore.apply_unitary(g, [b, anc.registers[0]], cnot)
print(np.round(g.state, 3))
print({k.value: round(p, 3) for k, p in qcore.born_distribution(g, [a, b], "Bell").items()})

# %% [markdown]
# Sampling agrees with the Born rule.

# %%
counts = {k: 0 for k in qcore.BELL_ORDER}
for _ in range(4000):
    c = g.clone()
    counts[qcore.measure_bell(c, c.registers[0], c.registers[1], rng)] += 1
print({k.value: v / 4000 for k, v in counts.items()})
