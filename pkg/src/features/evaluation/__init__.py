"""Experiment harness: dataset generation, metrics and parameter sweeps.

Usage:
    from src.features.evaluation import ExperimentConfig, generate_data, evaluate

    config = ExperimentConfig.load(Path("experiment.json"))
    generate_data(config, "train", Path("out/data"))
"""

from src.features.evaluation.config import COVERAGE_MODES, SPLITS, ExperimentConfig
from src.features.evaluation.datasets import (
    DatasetManifest,
    SampleRecord,
    SplitData,
    ensure_split,
    generate_data,
    load_split,
    read_manifest,
    sample_stem,
    verify_manifest,
)
from src.features.evaluation.service import (
    COVERAGE_LEVELS,
    HISTOGRAM_COLUMNS,
    PER_SAMPLE_COLUMNS,
    SWEEP_COLUMNS,
    MetricsReport,
    SampleMetrics,
    SweepRow,
    coarse_label,
    coverage,
    evaluate,
    evaluate_split,
    export_prediction,
    output_variance,
    squared_distance,
    sweep,
    write_sweep,
)

__all__ = [
    "COVERAGE_LEVELS",
    "COVERAGE_MODES",
    "HISTOGRAM_COLUMNS",
    "PER_SAMPLE_COLUMNS",
    "SPLITS",
    "SWEEP_COLUMNS",
    "DatasetManifest",
    "ExperimentConfig",
    "MetricsReport",
    "SampleMetrics",
    "SampleRecord",
    "SplitData",
    "SweepRow",
    "coarse_label",
    "coverage",
    "ensure_split",
    "evaluate",
    "evaluate_split",
    "export_prediction",
    "generate_data",
    "load_split",
    "output_variance",
    "read_manifest",
    "sample_stem",
    "squared_distance",
    "sweep",
    "verify_manifest",
    "write_sweep",
]
