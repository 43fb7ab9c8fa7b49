"""Training of the coarse-grained surrogate by Monte-Carlo EM.

Usage:
    from src.features.training import EmConfig, TrainingDataset, fit

    dataset = TrainingDataset.from_microstructures(microstructures, solutions, coarse, catalog)
    params, state = fit(dataset, catalog, coarse, EmConfig(max_iter=50), seed=0)
"""

from src.features.training.lasso import coordinate_descent, soft_threshold
from src.features.training.mcmc import (
    DecoderTarget,
    EStep,
    EStepMoments,
    McmcConfig,
    McmcEStep,
    QuadratureEStep,
    decoder_residual_moments,
)
from src.features.training.service import (
    CV_COLUMNS,
    DEFAULT_GAMMA_GRID,
    TRAINING_LOG_COLUMNS,
    EmConfig,
    EmState,
    GammaSelection,
    IterationRecord,
    TrainingDataset,
    choose_gamma,
    e_step,
    fit,
    has_converged,
    init_params,
    log_laplace_prior,
    m_step_s,
    m_step_sigma,
    m_step_theta,
    penalty_mask,
    run_em,
    select_gamma,
    synthesize_dataset,
    write_cv_table,
    write_training_log,
)

__all__ = [
    "CV_COLUMNS",
    "DEFAULT_GAMMA_GRID",
    "TRAINING_LOG_COLUMNS",
    "DecoderTarget",
    "EStep",
    "EStepMoments",
    "EmConfig",
    "EmState",
    "GammaSelection",
    "IterationRecord",
    "McmcConfig",
    "McmcEStep",
    "QuadratureEStep",
    "TrainingDataset",
    "choose_gamma",
    "coordinate_descent",
    "decoder_residual_moments",
    "e_step",
    "fit",
    "has_converged",
    "init_params",
    "log_laplace_prior",
    "m_step_s",
    "m_step_sigma",
    "m_step_theta",
    "penalty_mask",
    "run_em",
    "select_gamma",
    "soft_threshold",
    "synthesize_dataset",
    "write_cv_table",
    "write_training_log",
]
