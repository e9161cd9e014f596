# %% [markdown]
# # Training the surrogate network
#
# A small ReLU network maps beta (scaled to [-1, 1]) to the 20 pulse
# coefficients (scaled by their largest training magnitude). Training is
# full-batch Adam with early stopping on the validation split.

# %%
import numpy as np

from pulsenet.evaluation import fidelity_curve
from pulsenet.mlp import SPECS, TrainConfig, mse, train
from pulsenet.optimizer import generate_dataset, split_dataset

ds = split_dataset(generate_dataset(101), seed=0)
for name in ("small", "large"):
    print(f"{name}: widths {SPECS[name].widths}, {SPECS[name].n_params} parameters")

# %%
model = train("large", ds, TrainConfig(seed=0))
r = model.report
print(f"stopped after {r['epochs']} epochs (best {r['best_epoch']})")
print(f"test MSE {r['test_mse']:.2e} normalized, {r['test_mse_unnormalized']:.2e} in (rad/ns)^2")

# %% [markdown]
# What matters in the end is the gate the predicted pulse produces. Three
# fidelities per angle: predicted vs golden (the target), predicted vs the
# optimizer's pulse, and optimizer vs golden.

# %%
test_b, _ = ds.subset("test")
rep = fidelity_curve(model, ds, grid=test_b)
for key, s in rep.summary().items():
    print(f"{key:24s} min {s['min']:.5f}  mean {s['mean']:.5f}")

# %% [markdown]
# The network also interpolates between training angles.

# %%
off_grid = np.linspace(-np.pi, np.pi, 257)
print("min F on a 257-point grid:", round(fidelity_curve(model, grid=off_grid).min_predicted_golden(), 5))
print("MSE on train / val / test:", [f"{mse(model, ds, s):.2e}" for s in ("train", "val", "test")])
