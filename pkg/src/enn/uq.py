"""Predictive uncertainty from a trained realization ensemble."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import numpy.typing as npt

from .data import Standardization
from .ensemble import WeightEnsemble
from .io import write_csv
from .network import DimensionMismatch, NetworkArchitecture, forward_ensemble

__all__ = [
    "PredictionBand",
    "WeightTrace",
    "predict_band",
    "weight_trace_step",
    "coverage_check",
]

Array = npt.NDArray[np.float64]


@dataclass(frozen=True)
class PredictionBand:
    """Ensemble mean +/- ``k_sigma`` ensemble standard deviations.

    The spread reflects weight uncertainty only; observation noise is not
    added.
    """

    query_inputs: Array
    mean: Array
    std: Array
    k_sigma: float = 3.0

    @property
    def band_low(self) -> Array:
        return self.mean - self.k_sigma * self.std

    @property
    def band_high(self) -> Array:
        return self.mean + self.k_sigma * self.std

    @property
    def width(self) -> Array:
        return self.band_high - self.band_low

    def to_csv(self, path):
        d_in, d_out = self.query_inputs.shape[1], self.mean.shape[1]
        header = [f"x{i}" for i in range(d_in)]
        for name in ("mean", "std", "low", "high"):
            header += [f"{name}{k}" for k in range(d_out)]
        rows = np.hstack([self.query_inputs, self.mean, self.std, self.band_low, self.band_high])
        return write_csv(path, header, rows.tolist())


def predict_band(
    arch: NetworkArchitecture,
    ensemble: WeightEnsemble | Array,
    query_inputs,
    k_sigma: float = 3.0,
    standardization: Standardization | None = None,
) -> PredictionBand:
    """Per-query mean and spread of the realization predictions.

    ``query_inputs`` are in original units. If the network was trained on
    standardized data, pass the training ``standardization``; inputs are
    transformed before the forward pass and the outputs mapped back.
    Standard deviations use the N_e - 1 divisor.
    """
    if k_sigma < 0:
        raise ValueError("k_sigma must be >= 0")
    weights = ensemble.current if isinstance(ensemble, WeightEnsemble) else np.asarray(ensemble)
    x = np.asarray(query_inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None] if arch.input_dim == 1 else x[None, :]
    if x.shape[1] != arch.input_dim:
        raise DimensionMismatch(f"query inputs must have {arch.input_dim} columns")
    xin = standardization.inputs_to(x) if standardization is not None else x
    preds = forward_ensemble(arch, weights, xin, flat=False)  # (N_e, Q, k)
    mean = preds.mean(axis=0)
    std = preds.std(axis=0, ddof=1) if preds.shape[0] > 1 else np.zeros_like(mean)
    if standardization is not None:
        mean = standardization.targets_from(mean)
        std = std * standardization.target_std
    return PredictionBand(x, mean, std, float(k_sigma))


@dataclass(frozen=True)
class WeightTrace:
    """Per-weight ensemble mean and std, one row per recorded iteration."""

    means: tuple[Array, ...] = ()
    stds: tuple[Array, ...] = ()

    def __len__(self) -> int:
        return len(self.means)

    def to_csv(self, path):
        if not self.means:
            return write_csv(path, ["iteration"], [])
        n = self.means[0].size
        header = ["iteration"] + [f"mean{i}" for i in range(n)] + [f"std{i}" for i in range(n)]
        rows = ([i, *mu, *sd] for i, (mu, sd) in enumerate(zip(self.means, self.stds)))
        return write_csv(path, header, rows)


def weight_trace_step(trace: WeightTrace, ensemble: WeightEnsemble | Array) -> WeightTrace:
    w = ensemble.current if isinstance(ensemble, WeightEnsemble) else np.asarray(ensemble, dtype=np.float64)
    if trace.means and trace.means[0].size != w.shape[0]:
        raise DimensionMismatch("weight count changed between trace steps")
    return WeightTrace(trace.means + (w.mean(axis=1),), trace.stds + (w.std(axis=1, ddof=1),))


def coverage_check(band: PredictionBand, truth) -> float:
    """Fraction of entries of ``truth`` lying inside ``[band_low, band_high]``."""
    truth = np.asarray(truth, dtype=np.float64)
    if truth.ndim == 1:
        truth = truth[:, None]
    if truth.shape != band.mean.shape:
        raise DimensionMismatch(f"truth shape {truth.shape} != band shape {band.mean.shape}")
    inside = (truth >= band.band_low) & (truth <= band.band_high)
    return float(inside.mean())
