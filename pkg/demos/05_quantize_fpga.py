# %% [markdown]
# # Fixed-point inference and FPGA resources
#
# Weights and activations become two's-complement integers. A format
# `<W, I>` has W bits in total, I of them integer bits (sign excluded).
# Rounding is half-to-even and overflow saturates.

# %%
import numpy as np

from pulsenet.evaluation import fidelity_curve
from pulsenet.fixed_point import (
    FxFormat,
    decode,
    preset_formats,
    quantize_model,
    quantize_real,
    reference_infer_codes,
    resource_report,
)
from pulsenet.mlp import TrainConfig, mse, train, train_qat
from pulsenet.optimizer import generate_dataset, split_dataset

f = FxFormat.from_width(12, 2)
for x in (0.5, 1.5 * 2 ** -9, 2.5 * 2 ** -9, 100.0):
    c = quantize_real(x, f)
    print(f"{x!r:>24} -> code {c:5d} -> {decode(c, f)!r}")

# %% [markdown]
# Three board presets. The mixed one narrows the middle layers to 10 bits
# and gives the output layer no integer bits, since outputs lie in (-1, 1).

# %%
for name in ("genesys16", "ultra96", "arty-mixed"):
    _, layers = preset_formats(name, 7)
    print(f"{name:10s}", " ".join(str(l.weight) for l in layers))

# %% [markdown]
# Post-training quantization of a float model versus fine-tuning it with
# fake quantization in the loop (quantization-aware training).

# %%
ds = split_dataset(generate_dataset(101), seed=0)
cfg = TrainConfig(seed=0)
small = train("small", ds, cfg)
ptq = quantize_model(small, "arty-mixed")
qat = quantize_model(train_qat("small", ds, cfg, preset="arty-mixed", init=small))
test_b, _ = ds.subset("test")
for label, m in (("float", small), ("post-training", ptq), ("QAT", qat)):
    print(f"{label:14s} test MSE {mse(m, ds):.2e}, min test F {fidelity_curve(m, ds, grid=test_b).min_predicted_golden():.5f}")

# %% [markdown]
# The vectorized integer path and a plain Python-int reimplementation agree
# code for code.

# %%
grid = np.linspace(-np.pi, np.pi, 101)
codes = qat.infer_codes(grid)
same = all(reference_infer_codes(qat, b) == row.tolist() for b, row in zip(grid, codes))
print("reference agreement on 101 angles:", same)

# %% [markdown]
# Resource estimate with one multiplier per weight: layers whose words are at
# most 12 bits wide go to LUTs, the rest to DSP blocks.

# %%
print(resource_report(qat).table())
print()
print(resource_report(quantize_model(small, "genesys16")).table().splitlines()[-1])
