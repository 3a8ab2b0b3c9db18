"""Ensemble randomized maximum likelihood (EnRML) optimizer.

The update replaces the sensitivity matrix of a Gauss-Newton step with
ensemble covariances, so the forward map is only ever evaluated, never
differentiated:

    m_j <- m_j - [C_Ml - C_MD K^-1 C_MD^T] C_M^-1 (m_j - m_pr,j) / (1 + lam)
               - C_MD K^-1 (g(m_j) - d_obs,j),
    K = (1 + lam) C_D + C_Dl

C_M and C_D are the fixed (diagonal) prior and noise covariances; C_Ml,
C_Dl and C_MD are recomputed from the ensemble every iteration. A
Levenberg-Marquardt style controller adapts ``lam`` from the ensemble mean
and spread of the data mismatch.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import numpy.typing as npt

from .ensemble import CovarianceSet, WeightEnsemble, covariances, sample_prior_ensemble
from .network import DimensionMismatch, NetworkArchitecture, forward_ensemble
from .numerics import RngStream, spd_solve

__all__ = [
    "NoiseModel",
    "PriorModel",
    "LambdaController",
    "Decision",
    "StoppingRule",
    "IterationRecord",
    "EnrmlState",
    "MaxIterations",
    "RepeatedRejection",
    "data_mismatch",
    "mismatch_stats",
    "objective",
    "perturb_observations",
    "enrml_step",
    "lambda_init",
    "lambda_update",
    "run_enrml",
    "train",
]

logger = logging.getLogger(__name__)

Array = npt.NDArray[np.float64]
ForwardMap = Callable[[Array], Array]


class MaxIterations(RuntimeError):
    pass


class RepeatedRejection(RuntimeError):
    pass


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean Gaussian observation noise with diagonal covariance."""

    obs_std: Array

    def __post_init__(self) -> None:
        std = np.atleast_1d(np.asarray(self.obs_std, dtype=np.float64))
        if np.any(std <= 0):
            raise ValueError("obs_std entries must be > 0")
        object.__setattr__(self, "obs_std", std)

    @classmethod
    def uniform(cls, std: float, n_obs: int) -> "NoiseModel":
        return cls(np.full(n_obs, float(std)))

    @property
    def cov_diag(self) -> Array:
        return self.obs_std**2

    def __len__(self) -> int:
        return self.obs_std.size


@dataclass(frozen=True)
class PriorModel:
    """Gaussian prior on the weights with diagonal covariance."""

    mean: Array
    cov_diag: Array

    def __post_init__(self) -> None:
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        cov = np.broadcast_to(np.asarray(self.cov_diag, dtype=np.float64), mean.shape).copy()
        if np.any(cov <= 0):
            raise ValueError("prior cov_diag entries must be > 0")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov_diag", cov)

    @classmethod
    def standard(cls, n_params: int, mean: float = 0.0, std: float = 1.0) -> "PriorModel":
        return cls(np.full(n_params, float(mean)), np.full(n_params, float(std) ** 2))


@dataclass(frozen=True)
class LambdaController:
    lam: float
    gamma: float = 10.0
    lambda_floor: float = 0.005

    def __post_init__(self) -> None:
        if self.gamma <= 1:
            raise ValueError("gamma must be > 1")
        if self.lambda_floor <= 0:
            raise ValueError("lambda_floor must be > 0")
        object.__setattr__(self, "lam", max(float(self.lam), self.lambda_floor))


class Decision(str, enum.Enum):
    ACCEPT_SHRINK = "accept_shrink"
    ACCEPT_HOLD = "accept_hold"
    REJECT_GROW = "reject_grow"

    @property
    def accepted(self) -> bool:
        return self is not Decision.REJECT_GROW


@dataclass(frozen=True)
class StoppingRule:
    """When to stop training.

    Training stops when the relative change of the ensemble-mean data
    mismatch across the last ``window`` accepted iterations is below
    ``rel_tol``, after ``max_iterations`` update attempts, or after
    ``max_rejections`` consecutive rejected attempts. ``max_accepted``
    optionally caps the number of accepted updates. With ``strict`` the
    last two raise :class:`MaxIterations` / :class:`RepeatedRejection`
    instead of returning.
    """

    max_iterations: int = 500
    window: int = 5
    rel_tol: float = 1e-4
    max_rejections: int = 8
    max_accepted: int | None = None
    strict: bool = False


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    train_loss: float
    test_loss: float
    lam: float
    accepted: bool
    sd_mean: float
    sd_std: float


@dataclass
class EnrmlState:
    iteration: int
    controller: LambdaController
    last_accepted: WeightEnsemble
    sd_mean: float
    sd_std: float
    loss_history: list[IterationRecord] = field(default_factory=list)
    n_accepted: int = 0
    n_rejected: int = 0
    stop_reason: str = ""
    forward_calls: int = 0

    @property
    def lam(self) -> float:
        return self.controller.lam


def data_mismatch(pred, d_obs, noise: NoiseModel):
    """Noise-weighted squared residual ``sum(((pred - d_obs) / obs_std)**2)``.

    ``pred`` may be a vector (returns a float) or an (N_d, N_e) matrix
    (returns one value per column).
    """
    pred = np.asarray(pred, dtype=np.float64)
    d_obs = np.asarray(d_obs, dtype=np.float64)
    if pred.shape[0] != d_obs.shape[0] or d_obs.shape[0] != len(noise):
        raise DimensionMismatch("pred, d_obs and noise must have matching lengths")
    std = noise.obs_std if pred.ndim == 1 else noise.obs_std[:, None]
    r = (pred - (d_obs if pred.ndim == 1 else d_obs[:, None])) / std
    return np.sum(r * r, axis=0) if pred.ndim == 2 else float(r @ r)


def mismatch_stats(preds, d_obs, noise: NoiseModel) -> tuple[float, float]:
    """Ensemble mean and standard deviation (ddof=1) of the data mismatch."""
    sd = data_mismatch(preds, d_obs, noise)
    return float(sd.mean()), float(sd.std(ddof=1))


def objective(m, m_pr, pred, d_obs, prior: PriorModel, noise: NoiseModel) -> float:
    dm = np.asarray(m, dtype=np.float64) - np.asarray(m_pr, dtype=np.float64)
    model_term = float(dm @ (dm / prior.cov_diag))
    return 0.5 * model_term + 0.5 * data_mismatch(pred, d_obs, noise)


def perturb_observations(d_obs, noise: NoiseModel, rng: RngStream, n_ensemble: int) -> Array:
    """Columns ``d_obs + eps_j`` with ``eps_j ~ N(0, C_D)``."""
    if n_ensemble < 2:
        raise ValueError("n_ensemble must be >= 2")
    d_obs = np.asarray(d_obs, dtype=np.float64)
    z = rng.standard_normal((d_obs.shape[0], n_ensemble))
    return d_obs[:, None] + noise.obs_std[:, None] * z


def enrml_step(
    ensemble: WeightEnsemble,
    preds,
    d_obs_pert,
    cov: CovarianceSet,
    prior: PriorModel,
    noise: NoiseModel,
    lam: float,
    jitter: float | None = 0.0,
) -> Array:
    """Propose the next weight ensemble.

    Returns a new (N_m, N_e) array; ``ensemble`` is left untouched. The
    N_d x N_d system is factorized once and shared by all realizations.
    """
    if lam <= 0:
        raise ValueError("lam must be > 0")
    m = ensemble.current
    preds = np.asarray(preds, dtype=np.float64)
    d_obs_pert = np.asarray(d_obs_pert, dtype=np.float64)
    n_d = preds.shape[0]
    if d_obs_pert.shape != preds.shape or preds.shape[1] != m.shape[1]:
        raise DimensionMismatch("preds and perturbed observations must be (N_d, N_e)")
    if cov.c_md.shape != (m.shape[0], n_d) or len(noise) != n_d:
        raise DimensionMismatch("covariances do not match the ensemble")

    K = cov.c_d_pred + np.diag((1.0 + lam) * noise.cov_diag)
    v = (m - ensemble.prior) / prior.cov_diag[:, None]
    rhs = np.concatenate([cov.c_md.T @ v, preds - d_obs_pert], axis=1)
    sol = spd_solve(K, rhs, jitter=jitter)
    n_e = m.shape[1]
    prior_term = cov.c_m_dot(v) - cov.c_md @ sol[:, :n_e]
    data_term = cov.c_md @ sol[:, n_e:]
    return m - prior_term / (1.0 + lam) - data_term


def lambda_init(sd_mean_initial: float, n_obs: int, lambda_floor: float = 0.005) -> float:
    if sd_mean_initial < 0 or n_obs < 1:
        raise ValueError("need sd_mean_initial >= 0 and n_obs >= 1")
    return max(sd_mean_initial / (2.0 * n_obs), lambda_floor)


def lambda_update(
    ctrl: LambdaController, old_mean: float, old_std: float, new_mean: float, new_std: float
) -> tuple[Decision, float]:
    """Decide on a proposal from the change in mismatch mean and spread.

    Mean and spread both down: accept and divide lambda by gamma. Mean down
    only: accept, keep lambda. Otherwise reject and multiply by gamma.
    """
    if new_mean < old_mean:
        if new_std < old_std:
            return Decision.ACCEPT_SHRINK, max(ctrl.lam / ctrl.gamma, ctrl.lambda_floor)
        return Decision.ACCEPT_HOLD, ctrl.lam
    return Decision.REJECT_GROW, ctrl.lam * ctrl.gamma


def _mae_to(d_obs: Array) -> Callable[[Array], float]:
    return lambda preds: float(np.mean(np.abs(preds.mean(axis=1) - d_obs)))


def run_enrml(
    forward_map: ForwardMap,
    ensemble: WeightEnsemble,
    d_obs,
    noise: NoiseModel,
    prior: PriorModel,
    rng: RngStream,
    stopping: StoppingRule = StoppingRule(),
    controller: Optional[LambdaController] = None,
    perturbation: str = "per_iteration",
    train_loss: Optional[Callable[[Array], float]] = None,
    test_loss: Optional[Callable[[Array], float]] = None,
    callback: Optional[Callable[[IterationRecord, WeightEnsemble], None]] = None,
    anomaly_threshold: int = 2000,
) -> tuple[WeightEnsemble, EnrmlState]:
    """Iterate EnRML updates on a black-box forward map.

    Parameters
    ----------
    forward_map : callable
        Maps an (N_m, N_e) weight ensemble to (N_d, N_e) predictions.
    ensemble : WeightEnsemble
        Initial realizations; ``ensemble.prior`` supplies m_pr,j.
    d_obs : (N_d,) array_like
        Unperturbed observations.
    rng : RngStream
        Stream for observation perturbations.
    controller : LambdaController, optional
        Initial damping. Defaults to ``lambda_init`` of the initial mismatch.
    perturbation : {"per_iteration", "fixed"}
        Resample perturbed observations every attempt, or draw once.
    train_loss, test_loss : callable, optional
        ``f(preds) -> float`` / ``f(weights) -> float`` reported in the
        history. ``train_loss`` defaults to MAE of the ensemble mean to
        ``d_obs``; ``test_loss`` defaults to NaN.
    callback : callable, optional
        Called with every record and the committed ensemble.
    """
    if perturbation not in ("per_iteration", "fixed"):
        raise ValueError(f"unknown perturbation mode {perturbation!r}")
    d_obs = np.asarray(d_obs, dtype=np.float64)
    train_loss = train_loss or _mae_to(d_obs)
    n_e = ensemble.realization_count

    preds = forward_map(ensemble.current)
    sd_mean, sd_std = mismatch_stats(preds, d_obs, noise)
    if controller is None:
        controller = LambdaController(lambda_init(sd_mean, d_obs.shape[0]))
    state = EnrmlState(
        iteration=0,
        controller=controller,
        last_accepted=ensemble,
        sd_mean=sd_mean,
        sd_std=sd_std,
        forward_calls=1,
    )

    def record(accepted: bool, lam: float) -> None:
        rec = IterationRecord(
            iteration=state.iteration,
            train_loss=train_loss(preds),
            test_loss=test_loss(state.last_accepted.current) if test_loss else float("nan"),
            lam=lam,
            accepted=accepted,
            sd_mean=state.sd_mean,
            sd_std=state.sd_std,
        )
        state.loss_history.append(rec)
        if callback is not None:
            callback(rec, state.last_accepted)

    record(True, controller.lam)
    accepted_sd = [sd_mean]
    fixed_pert = perturb_observations(d_obs, noise, rng, n_e) if perturbation == "fixed" else None
    rejections = 0

    while True:
        if state.iteration >= stopping.max_iterations:
            state.stop_reason = "max_iterations"
            if stopping.strict:
                raise MaxIterations(f"no convergence after {state.iteration} iterations")
            break
        current = state.last_accepted
        cov = covariances(current.current, preds, threshold=anomaly_threshold)
        d_pert = fixed_pert if fixed_pert is not None else perturb_observations(d_obs, noise, rng, n_e)
        lam = state.controller.lam
        proposal = enrml_step(current, preds, d_pert, cov, prior, noise, lam)
        new_preds = forward_map(proposal)
        state.forward_calls += 1
        new_mean, new_std = mismatch_stats(new_preds, d_obs, noise)
        decision, new_lam = lambda_update(state.controller, state.sd_mean, state.sd_std, new_mean, new_std)
        state.iteration += 1
        state.controller = LambdaController(new_lam, state.controller.gamma, state.controller.lambda_floor)
        if decision.accepted:
            state.last_accepted = current.with_current(proposal)
            preds = new_preds
            state.sd_mean, state.sd_std = new_mean, new_std
            state.n_accepted += 1
            accepted_sd.append(new_mean)
            rejections = 0
        else:
            state.n_rejected += 1
            rejections += 1
        logger.debug("iter %d lam=%.4g %s sd_mean=%.6g", state.iteration, lam, decision.value, new_mean)
        record(decision.accepted, lam)

        if rejections >= stopping.max_rejections:
            state.stop_reason = "repeated_rejection"
            if stopping.strict:
                raise RepeatedRejection(
                    f"{rejections} consecutive rejections, lambda reached {state.controller.lam:g}"
                )
            break
        if stopping.max_accepted is not None and state.n_accepted >= stopping.max_accepted:
            state.stop_reason = "max_accepted"
            break
        if decision.accepted and len(accepted_sd) > stopping.window:
            ref = accepted_sd[-stopping.window - 1]
            if ref == 0 or abs(ref - accepted_sd[-1]) / ref < stopping.rel_tol:
                state.stop_reason = "converged"
                break
    return state.last_accepted, state


def train(
    arch: NetworkArchitecture,
    dataset,
    noise: NoiseModel | float,
    prior: PriorModel | None = None,
    n_ensemble: int = 100,
    rng: RngStream | int = 0,
    stopping: StoppingRule = StoppingRule(),
    perturb_rng: RngStream | int | None = None,
    test_dataset=None,
    initial: WeightEnsemble | None = None,
    **kwargs,
) -> tuple[WeightEnsemble, EnrmlState]:
    """Train an ensemble neural network on ``dataset``.

    ``dataset`` is anything with ``inputs`` (N, input_dim) and ``targets``
    (N, output_dim) arrays. ``noise`` may be a scalar observation std.
    ``rng`` seeds the prior ensemble and ``perturb_rng`` (defaulting to
    ``rng``) the observation perturbations. Extra keyword arguments go to
    :func:`run_enrml`. Reported losses are MAEs of the ensemble-mean
    prediction.
    """
    if n_ensemble < 2:
        raise ValueError("n_ensemble must be >= 2")
    rng = rng if isinstance(rng, RngStream) else RngStream(rng)
    if perturb_rng is None:
        perturb_rng = rng
    elif not isinstance(perturb_rng, RngStream):
        perturb_rng = RngStream(perturb_rng)
    targets = np.asarray(dataset.targets, dtype=np.float64)
    if targets.shape[0] < 1:
        raise ValueError("dataset is empty")
    d_obs = targets.reshape(-1)
    if not isinstance(noise, NoiseModel):
        noise = NoiseModel.uniform(float(noise), d_obs.size)
    n_m = arch.n_weights
    if prior is None:
        prior = PriorModel.standard(n_m)
    if initial is None:
        initial = sample_prior_ensemble(rng, n_m, n_ensemble, prior.mean, np.sqrt(prior.cov_diag))
    inputs = dataset.inputs

    def fmap(w: Array) -> Array:
        return forward_ensemble(arch, w, inputs)

    train_mae = _mae_to(d_obs)
    test_loss = None
    if test_dataset is not None:
        test_targets = np.asarray(test_dataset.targets, dtype=np.float64).reshape(-1)
        test_loss = lambda w: float(
            np.mean(np.abs(forward_ensemble(arch, w, test_dataset.inputs).mean(axis=1) - test_targets))
        )
    return run_enrml(
        fmap, initial, d_obs, noise, prior, perturb_rng, stopping,
        train_loss=train_mae, test_loss=test_loss, **kwargs,
    )
