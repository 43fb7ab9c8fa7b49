"""Probabilistic coarse-grained surrogate: encoder, decoder and predictive sampling.

Usage:
    from src.features.surrogate import load_model, predict

    params = load_model(Path("out/model.json"))
    ensemble = predict(microstructure, params, n_samples=10_000, seed=7)
"""

from src.features.surrogate.service import (
    VARIANCE_FLOOR,
    ModelParams,
    PredictiveEnsemble,
    decoder_log_density,
    effective_conductivity,
    encoder_log_density,
    encoder_mean,
    load_model,
    predict,
    predictive_log_density,
    save_model,
)

__all__ = [
    "VARIANCE_FLOOR",
    "ModelParams",
    "PredictiveEnsemble",
    "decoder_log_density",
    "effective_conductivity",
    "encoder_log_density",
    "encoder_mean",
    "load_model",
    "predict",
    "predictive_log_density",
    "save_model",
]
