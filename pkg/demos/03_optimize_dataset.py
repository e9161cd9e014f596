# %% [markdown]
# # Optimizing pulses and building the training set
#
# Adam ascent on F finds a pulse for each angle on a 101-point grid over
# [-pi, pi]. Each optimization starts from the previous angle's solution,
# which keeps the coefficient curves smooth. The -pi row is dropped
# afterwards: Rx(-pi) and Rx(pi) are the same gate up to a phase.

# %%
import time

import numpy as np

from pulsenet.optimizer import OptimizerConfig, generate_dataset, optimize_pulse, random_init, split_dataset

res = optimize_pulse(np.pi / 2, random_init(1, 0, OptimizerConfig()))
print(f"single angle: F = {res.fidelity:.6f} after {res.iterations} iterations")

# %%
t0 = time.perf_counter()
ds = split_dataset(generate_dataset(101), seed=0)
print(f"{len(ds)} rows in {time.perf_counter() - t0:.1f} s, min fidelity {ds.fidelities.min():.6f}")
print("split sizes:", {s: int(ds.mask(s).sum()) for s in ("train", "val", "test")})
print("alpha_scale (max |alpha| over train):", ds.metadata["alpha_scale"])

# %% [markdown]
# Warm starting versus independent random starts on a coarser grid: both
# reach the target, but the warm-started coefficients vary far less from one
# angle to the next.

# %%
def total_variation(d):
    return np.sum(np.linalg.norm(np.diff(d.alphas, axis=0), axis=1))


warm = generate_dataset(21)
cold = generate_dataset(21, OptimizerConfig(warm_start=False))
print(f"total variation: warm {total_variation(warm):.4f}, cold {total_variation(cold):.4f}")

# %% [markdown]
# The p coefficients of a smooth solution branch, sampled every tenth row.

# %%
for beta, a in zip(ds.betas[::10], ds.alphas[::10]):
    print(f"beta {beta:+.3f}: p = " + " ".join(f"{x:+.4f}" for x in a[:10]))
