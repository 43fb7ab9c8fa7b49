"""Coarse Surrogate - probabilistic coarse-grained models for heat conduction in random media.

This package is organized into feature-based modules:
- features.microstructure: Gaussian-random-field binary media
- features.fem: bilinear finite elements, coarse model and interpolation
- features.feature_functions: effective-medium and morphology design matrices
- features.surrogate: encoder/decoder model and predictive sampling
- features.training: Monte-Carlo EM with a sparsity prior
- features.evaluation: datasets, metrics and sweeps
- shared: logging, errors, validation, storage and workers
"""

from src.features.evaluation import ExperimentConfig
from src.features.surrogate import ModelParams, load_model, predict
from src.features.training import EmConfig, TrainingDataset, fit
from src.shared import (
    ConfigError,
    DomainError,
    NumericError,
    SurrogateError,
    ValidationResult,
)

__version__ = "0.1.0"
__all__ = [
    "EmConfig",
    "ExperimentConfig",
    "ModelParams",
    "TrainingDataset",
    "fit",
    "load_model",
    "predict",
    "SurrogateError",
    "ConfigError",
    "DomainError",
    "NumericError",
    "ValidationResult",
]
