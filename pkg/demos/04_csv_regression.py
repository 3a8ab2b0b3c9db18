# ---
# jupyter:
#   jupytext:
#     formats: py:percent
# ---

# %% [markdown]
# # Regression on a delimited table
#
# Loading columns from a text table, standardizing, training and mapping
# the band back to original units. The same pipeline sits behind
# `enn train`. The outcome depends on the network size, the observation
# std and the seeds: with these data, 10 hidden units or a smaller
# observation std stall at a clearly worse fit.

# %%
import tempfile
from pathlib import Path

import numpy as np
import matplotlib.pyplot as plt

from enn.data import SplitSpec, load_csv, split, standardize
from enn.enrml import StoppingRule, train
from enn.network import NetworkArchitecture
from enn.uq import predict_band

rng = np.random.default_rng(0)
x = rng.uniform(0, 10, 60)
y = 50 + 20 * np.sin(x) + rng.normal(0, 1, 60)
table = "x,y\n" + "\n".join(f"{a:.4f},{b:.4f}" for a, b in zip(x, y))

path = Path(tempfile.mkdtemp()) / "table.csv"
path.write_text(table)
ds = load_csv(path, input_cols=["x"], target_cols=["y"], header=True)
train_raw, test_raw = split(ds, SplitSpec(train_count=45, test_count=15))
train_z = standardize(train_raw)
s = train_z.standardization

# %%
arch = NetworkArchitecture(1, (6, 1), "tanh")
ens, state = train(arch, train_z, 0.1, n_ensemble=100, rng=1, stopping=StoppingRule(max_iterations=200))
grid = np.linspace(0, 10, 200)
band = predict_band(arch, ens, grid, standardization=s)
test_band = predict_band(arch, ens, test_raw.inputs, standardization=s)
print(f"stop: {state.stop_reason} after {state.n_accepted} accepted steps")
print(f"test MAE (original units): {np.abs(test_band.mean - test_raw.targets).mean():.2f}")

# %%
plt.fill_between(grid, band.band_low[:, 0], band.band_high[:, 0], alpha=0.3)
plt.plot(grid, band.mean[:, 0])
plt.plot(train_raw.inputs, train_raw.targets, "o", ms=3, label="train")
plt.plot(test_raw.inputs, test_raw.targets, "s", ms=3, label="test")
plt.legend(); plt.show()
