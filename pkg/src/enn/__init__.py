"""Ensemble neural networks trained by gradient-free EnRML updates."""

from .data import (
    REFERENCE_ARCHITECTURE,
    Dataset,
    SplitSpec,
    gen_ideal_dataset,
    gen_toy_cubic,
    load_csv,
    loss_mae,
    split,
    standardize,
)
from .enrml import (
    Decision,
    LambdaController,
    NoiseModel,
    PriorModel,
    StoppingRule,
    data_mismatch,
    enrml_step,
    lambda_init,
    lambda_update,
    objective,
    perturb_observations,
    run_enrml,
    train,
)
from .ensemble import CovarianceSet, WeightEnsemble, covariances, ensemble_mean, sample_prior_ensemble
from .network import NetworkArchitecture, forward, forward_ensemble, weight_count
from .numerics import RngStream, spd_solve

__version__ = "0.1.0"
