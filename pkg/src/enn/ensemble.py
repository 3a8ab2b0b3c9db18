"""Realization ensembles and the covariances that stand in for gradients."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import numpy.typing as npt

from .network import DimensionMismatch
from .numerics import RngStream

__all__ = [
    "WeightEnsemble",
    "CovarianceSet",
    "sample_prior_ensemble",
    "ensemble_mean",
    "anomalies",
    "covariances",
]

Array = npt.NDArray[np.float64]


@dataclass
class WeightEnsemble:
    """Current weight realizations (columns) and their fixed prior draws."""

    current: Array
    prior: Array = field(repr=False)

    def __post_init__(self) -> None:
        self.current = np.asarray(self.current, dtype=np.float64)
        self.prior = np.array(self.prior, dtype=np.float64, copy=True)
        self.prior.setflags(write=False)
        if self.current.shape != self.prior.shape:
            raise DimensionMismatch("current and prior must share shape")
        if self.current.ndim != 2 or self.current.shape[1] < 2:
            raise ValueError("need a 2-D ensemble with at least 2 realizations")

    @property
    def n_params(self) -> int:
        return self.current.shape[0]

    @property
    def realization_count(self) -> int:
        return self.current.shape[1]

    def with_current(self, current: Array) -> "WeightEnsemble":
        return WeightEnsemble(current=current, prior=self.prior)


@dataclass(frozen=True)
class CovarianceSet:
    """Ensemble covariances of one iteration.

    ``c_m`` may be ``None`` when it was not materialized; the scaled
    anomaly factor ``model_anom`` (with ``c_m = model_anom @ model_anom.T``)
    is always present so ``c_m`` products can be formed without it.
    """

    c_m: Array | None
    c_d_pred: Array
    c_md: Array
    model_anom: Array = field(repr=False)
    pred_anom: Array = field(repr=False)

    def c_m_dot(self, v: Array) -> Array:
        if self.c_m is not None:
            return self.c_m @ v
        return self.model_anom @ (self.model_anom.T @ v)


def sample_prior_ensemble(
    rng: RngStream,
    n_params: int,
    n_ensemble: int,
    prior_mean=0.0,
    prior_std: float = 1.0,
) -> WeightEnsemble:
    """Draw ``prior_mean + prior_std * N(0, 1)`` realizations.

    ``prior_std`` may be a scalar or a per-parameter vector.
    """
    if n_ensemble < 2:
        raise ValueError("n_ensemble must be >= 2")
    std = np.asarray(prior_std, dtype=np.float64)
    if np.any(std < 0):
        raise ValueError("prior_std must be >= 0")
    mean = np.broadcast_to(np.asarray(prior_mean, dtype=np.float64), (n_params,))
    z = rng.standard_normal((n_params, n_ensemble))
    draws = mean[:, None] + std.reshape(-1, 1) * z
    return WeightEnsemble(current=draws, prior=draws)


def ensemble_mean(M) -> Array:
    return np.asarray(M, dtype=np.float64).mean(axis=1)


def anomalies(M) -> Array:
    """Deviations of each column from the ensemble mean, scaled by 1/sqrt(N_e - 1)."""
    M = np.asarray(M, dtype=np.float64)
    return (M - M.mean(axis=1, keepdims=True)) / np.sqrt(M.shape[1] - 1)


def covariances(weights, preds, materialize_c_m: bool | None = None, threshold: int = 2000) -> CovarianceSet:
    """Unbiased (divisor N_e - 1) ensemble covariances.

    Parameters
    ----------
    weights : (N_m, N_e) array_like
    preds : (N_d, N_e) array_like
    materialize_c_m : bool, optional
        Form the full N_m x N_m ``c_m``. Defaults to ``N_m <= threshold``.
    """
    weights = np.asarray(weights, dtype=np.float64)
    preds = np.asarray(preds, dtype=np.float64)
    if weights.ndim != 2 or preds.ndim != 2 or weights.shape[1] != preds.shape[1]:
        raise DimensionMismatch(
            f"weights {weights.shape} and preds {preds.shape} need the same realization count"
        )
    if weights.shape[1] < 2:
        raise ValueError("need at least 2 realizations")
    if materialize_c_m is None:
        materialize_c_m = weights.shape[0] <= threshold
    A = anomalies(weights)
    B = anomalies(preds)
    c_d = B @ B.T
    c_d = 0.5 * (c_d + c_d.T)
    c_m = None
    if materialize_c_m:
        c_m = A @ A.T
        c_m = 0.5 * (c_m + c_m.T)
    return CovarianceSet(c_m=c_m, c_d_pred=c_d, c_md=A @ B.T, model_anom=A, pred_anom=B)
