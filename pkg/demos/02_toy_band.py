# ---
# jupyter:
#   jupytext:
#     formats: py:percent
# ---

# %% [markdown]
# # Uncertainty band on a noisy cubic
#
# Twenty samples of y = x^3 + N(0, 9) on [-4, 4]. A 1-100-1 ReLU network
# trained with observation std 3 should give a band that covers the true
# curve where there is data and widens beyond it.

# %%
import numpy as np
import matplotlib.pyplot as plt

from enn.data import gen_toy_cubic
from enn.enrml import StoppingRule, train
from enn.ensemble import sample_prior_ensemble
from enn.network import NetworkArchitecture
from enn.numerics import RngStream
from enn.uq import coverage_check, predict_band

arch = NetworkArchitecture(1, (100, 1), "relu")
data = gen_toy_cubic(RngStream(500), 20, -4.0, 4.0)
grid = np.linspace(-6, 6, 241)

# %% [markdown]
# ## Prior band
#
# Before any data the band is wide everywhere.

# %%
prior_band = predict_band(arch, sample_prior_ensemble(RngStream(0), arch.n_weights, 100), grid)

# %% [markdown]
# ## Posterior band

# %%
ens, state = train(arch, data, 3.0, n_ensemble=100, rng=0, stopping=StoppingRule(max_iterations=200))
band = predict_band(arch, ens, grid)
inside = np.abs(grid) < 4
print(f"coverage on [-4, 4]: {coverage_check(predict_band(arch, ens, np.linspace(-4, 4, 200)), np.linspace(-4, 4, 200) ** 3):.2f}")
print(f"mean width inside {band.width[inside].mean():.1f}, outside {band.width[~inside].mean():.1f}")

# %%
fig, axes = plt.subplots(1, 2, figsize=(11, 4), sharey=True)
for ax, b, title in zip(axes, (prior_band, band), ("prior", "posterior")):
    ax.fill_between(grid, b.band_low[:, 0], b.band_high[:, 0], alpha=0.3, label="mean +/- 3 std")
    ax.plot(grid, b.mean[:, 0], label="ensemble mean")
    ax.plot(grid, grid**3, "k--", label="x^3")
    ax.plot(data.inputs, data.targets, "o", ms=4)
    ax.set_title(title); ax.set_ylim(-250, 250)
axes[0].legend()
plt.show()
