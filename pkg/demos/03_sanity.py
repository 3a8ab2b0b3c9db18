# ---
# jupyter:
#   jupytext:
#     formats: py:percent
# ---

# %% [markdown]
# # Recovering a known network
#
# Targets come from a 4-4-10-1 network with random weights, so a perfect
# fit exists. We train an ensemble of the same shape and watch the test
# error and the weight spread.

# %%
import numpy as np
import matplotlib.pyplot as plt

from enn.data import REFERENCE_ARCHITECTURE, gen_ideal_dataset
from enn.enrml import StoppingRule, train
from enn.numerics import RngStream
from enn.uq import WeightTrace, predict_band, weight_trace_step

train_ds, test_ds, true_w = gen_ideal_dataset(RngStream(1000))
trace = [WeightTrace()]


def record(rec, ens):
    if rec.accepted:
        trace[0] = weight_trace_step(trace[0], ens)


ens, state = train(
    REFERENCE_ARCHITECTURE, train_ds, 0.002, n_ensemble=100, rng=0, test_dataset=test_ds,
    stopping=StoppingRule(max_iterations=200), callback=record,
)
hist = state.loss_history
print(f"final test MAE {hist[-1].test_loss:.3f}, best {min(r.test_loss for r in hist):.3f}")

# %%
band = predict_band(REFERENCE_ARCHITECTURE, ens, test_ds.inputs)
t = trace[0]
fig, (a, b, c) = plt.subplots(1, 3, figsize=(14, 4))
a.semilogy([r.train_loss for r in hist], label="train")
a.semilogy([r.test_loss for r in hist], label="test")
a.set_xlabel("iteration"); a.legend()
b.semilogy(np.asarray(t.stds)[:, :10])
b.set_xlabel("accepted step"); b.set_title("std of first ten weights")
c.errorbar(test_ds.targets[:, 0], band.mean[:, 0], yerr=band.std[:, 0], fmt="o", ms=3)
lim = [test_ds.targets.min(), test_ds.targets.max()]
c.plot(lim, lim, "k--"); c.set_xlabel("observed"); c.set_ylabel("estimated")
plt.show()
