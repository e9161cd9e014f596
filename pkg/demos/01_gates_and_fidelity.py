# %% [markdown]
# # Rotation gates and gate fidelity
#
# The target gates are x-rotations `Rx(beta) = exp(-i beta sigma_x / 2)`.
# Two gates are compared with the trace-overlap fidelity
# `F = (2 + |tr(U1^dag U2)|^2) / 6`, which is 1 for identical gates (up to
# a global phase) and 1/3 in the worst case.

# %%
import numpy as np

from pulsenet.quantum import KET0, bloch_coords, gate_fidelity, random_unitary, rx_gate

print(np.round(rx_gate(np.pi / 2), 4))

# %% [markdown]
# A global phase does not change F, and an X gate (beta = pi) is as far from
# the identity as a single-qubit gate can be.

# %%
u = rx_gate(1.2)
print("F(U, e^{i phi} U) =", gate_fidelity(u, np.exp(0.4j) * u))
print("F(I, Rx(pi))      =", gate_fidelity(np.eye(2), rx_gate(np.pi)))

# %% [markdown]
# Fidelity against angle error: small miscalibrations cost quadratically.

# %%
for err in (0.001, 0.01, 0.1, 0.5):
    print(f"angle error {err:6.3f} rad -> F = {gate_fidelity(rx_gate(1.0), rx_gate(1.0 + err)):.8f}")

# %% [markdown]
# Random unitaries land anywhere in [1/3, 1].

# %%
rng = np.random.default_rng(0)
fs = np.array([gate_fidelity(random_unitary(rng), random_unitary(rng)) for _ in range(2000)])
print(f"random pairs: min {fs.min():.4f}, mean {fs.mean():.4f}, max {fs.max():.4f}")

# %% [markdown]
# On the Bloch sphere `Rx(pi/2)` takes the north pole |0> to -y.

# %%
print(np.round(bloch_coords(rx_gate(np.pi / 2) @ KET0), 12))
