"""Prediction error, predictive coverage and the training-size by coarse-mesh sweep."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import stats

from src.features.evaluation.config import COVERAGE_MODES, ExperimentConfig
from src.features.evaluation.datasets import SplitData, ensure_split
from src.features.fem import FemSolution, MeshSpec
from src.features.feature_functions import DesignMatrixCache
from src.features.microstructure import Microstructure
from src.features.surrogate import ModelParams, PredictiveEnsemble, effective_conductivity, predict
from src.features.training import TrainingDataset, fit
from src.shared.errors import ConfigError, NumericError, SurrogateError
from src.shared.logging import get_logger
from src.shared.storage import write_array, write_csv, write_json
from src.shared.workers import indexed_seed, parallel_map

logger = get_logger(__name__)

COVERAGE_LEVELS = (1, 2, 3)
PER_SAMPLE_COLUMNS = ("sample", "d2", "coverage_1", "coverage_2", "coverage_3")
SWEEP_COLUMNS = ("n_train", "coarse_dim", "relative_error", "nnz_theta", "wall_time_s", "status")
HISTOGRAM_COLUMNS = ("node", "bin_left", "bin_right", "count")


@dataclass
class SampleMetrics:
    index: int
    d2: float
    coverage: dict[int, float]

    def row(self) -> tuple[Any, ...]:
        return (self.index, self.d2, *(self.coverage[k] for k in COVERAGE_LEVELS))


@dataclass
class MetricsReport:
    d2: float
    var_uf: float
    relative_error: float
    coverage: dict[int, float]
    per_sample: list[SampleMetrics] = field(default_factory=list)
    n_pred_samples: int = 0
    coverage_mode: str = "gaussian"

    def to_dict(self) -> dict[str, Any]:
        return {
            "d2": self.d2,
            "var_Uf": self.var_uf,
            "relative_error": self.relative_error,
            "coverage": {str(k): v for k, v in self.coverage.items()},
            "n_test": len(self.per_sample),
            "n_pred_samples": self.n_pred_samples,
            "coverage_mode": self.coverage_mode,
        }

    def save(self, out_dir: Path) -> None:
        write_json(Path(out_dir) / "metrics.json", self.to_dict())
        write_csv(Path(out_dir) / "metrics_per_sample.csv", PER_SAMPLE_COLUMNS, [s.row() for s in self.per_sample])


def squared_distance(mean: np.ndarray, truth: np.ndarray) -> float:
    return float(np.mean((np.asarray(mean) - np.asarray(truth)) ** 2))


def output_variance(outputs: np.ndarray) -> float:
    """Node-averaged variance of the fine outputs over a sample set."""
    outputs = np.asarray(outputs, dtype=float)
    return float(np.mean(np.var(outputs, axis=0)))


def coverage(
    truth: np.ndarray,
    ensemble: PredictiveEnsemble,
    k: float,
    mode: str = "gaussian",
) -> float:
    """Fraction of nodes whose true value lies in the +-k sigma predictive band."""
    truth = np.asarray(truth, dtype=float)
    if mode == "gaussian":
        inside = np.abs(truth - ensemble.mean) <= k * ensemble.std
    elif mode == "empirical":
        if ensemble.samples is None:
            raise ConfigError("Empirical coverage needs the predictive draws (keep_samples=True)")
        lower, upper = np.quantile(ensemble.samples, [stats.norm.cdf(-k), stats.norm.cdf(k)], axis=0)
        inside = (truth >= lower) & (truth <= upper)
    else:
        raise ConfigError(f"coverage mode must be one of {COVERAGE_MODES}, got {mode!r}")
    return float(np.mean(inside))


def _outputs(solutions: Sequence[FemSolution | np.ndarray]) -> np.ndarray:
    return np.stack([s.nodal_values if isinstance(s, FemSolution) else np.asarray(s, dtype=float) for s in solutions])


def evaluate(
    params: ModelParams,
    microstructures: Sequence[Microstructure],
    solutions: Sequence[FemSolution | np.ndarray],
    n_pred_samples: int,
    seed: int = 0,
    *,
    reference_outputs: np.ndarray | None = None,
    coverage_mode: str = "gaussian",
    threads: int = 1,
) -> MetricsReport:
    """Score the predictive density on a test set.

    ``var_Uf`` comes from ``reference_outputs`` when given, otherwise from the
    test outputs themselves.
    """
    if not microstructures or len(microstructures) != len(solutions):
        raise ConfigError("Evaluation needs a non-empty test set with one solution per microstructure")
    truth = _outputs(solutions)
    if truth.shape[1] != params.fine_mesh.n_nodes:
        raise ConfigError(
            f"Test outputs have {truth.shape[1]} nodes, the model predicts {params.fine_mesh.n_nodes}"
        )
    shape = (params.fine_mesh.nel_y, params.fine_mesh.nel_x)
    for ms in microstructures:
        if ms.cells.shape != shape:
            raise ConfigError(f"Test microstructure of shape {ms.cells.shape} does not match the model mesh {shape}")
    var_uf = output_variance(truth if reference_outputs is None else reference_outputs)
    if not var_uf > 0:
        raise NumericError("Reference outputs have zero variance; the relative error is undefined")

    per_sample = []
    for i, (ms, u) in enumerate(zip(microstructures, truth)):
        ensemble = predict(
            ms,
            params,
            n_pred_samples,
            indexed_seed(seed, i),
            threads=threads,
            keep_samples=coverage_mode == "empirical",
        )
        per_sample.append(
            SampleMetrics(
                index=i,
                d2=squared_distance(ensemble.mean, u),
                coverage={k: coverage(u, ensemble, k, coverage_mode) for k in COVERAGE_LEVELS},
            )
        )

    d2 = float(np.mean([s.d2 for s in per_sample]))
    report = MetricsReport(
        d2=d2,
        var_uf=var_uf,
        relative_error=d2 / var_uf,
        coverage={k: float(np.mean([s.coverage[k] for s in per_sample])) for k in COVERAGE_LEVELS},
        per_sample=per_sample,
        n_pred_samples=n_pred_samples,
        coverage_mode=coverage_mode,
    )
    logger.info("Evaluation finished", extra={"context": report.to_dict()})
    return report


def _node_histogram(ensemble: PredictiveEnsemble, bins: int) -> list[tuple[Any, ...]]:
    rows: list[tuple[Any, ...]] = []
    if ensemble.monitor_values.size == 0:
        return rows
    for column, node in enumerate(ensemble.monitor_nodes):
        counts, edges = np.histogram(ensemble.monitor_values[:, column], bins=bins)
        rows.extend((int(node), edges[b], edges[b + 1], int(counts[b])) for b in range(bins))
    return rows


def export_prediction(
    out_dir: Path,
    microstructure: Microstructure,
    params: ModelParams,
    ensemble: PredictiveEnsemble,
    histogram_bins: int = 50,
) -> None:
    """Write the predictive fields, learned coarse conductivities and node histogram."""
    out_dir = Path(out_dir)
    fine = {"mesh": params.fine_mesh.to_dict(), "n_samples": ensemble.n_samples}
    coarse = {"mesh": params.coarse_mesh.to_dict()}
    write_array(out_dir / "predictive_mean", ensemble.mean, fine)
    write_array(out_dir / "predictive_variance", ensemble.variance, fine)
    write_array(out_dir / "decoder_variance", params.s, fine)
    mode, mean = effective_conductivity(microstructure, params)
    write_array(out_dir / "conductivity_mode", mode, coarse)
    write_array(out_dir / "conductivity_mean", mean, coarse)
    write_array(out_dir / "encoder_variance", params.sigma2, coarse)
    write_csv(out_dir / "node_histogram.csv", HISTOGRAM_COLUMNS, _node_histogram(ensemble, histogram_bins))


@dataclass
class SweepRow:
    n_train: int
    coarse_dim: str
    relative_error: float
    nnz_theta: int
    wall_time_s: float
    status: str = "ok"

    def row(self) -> tuple[Any, ...]:
        return (self.n_train, self.coarse_dim, self.relative_error, self.nnz_theta, self.wall_time_s, self.status)


def coarse_label(mesh: MeshSpec) -> str:
    return f"{mesh.nel_x}x{mesh.nel_y}"


def sweep(
    config: ExperimentConfig,
    data_root: Path,
    n_train_grid: Sequence[int] | None = None,
    coarse_grid: Sequence[MeshSpec] | None = None,
    threads: int = 1,
    cache_dir: Path | None = None,
) -> list[SweepRow]:
    """Train and evaluate one model per (training-set size, coarse mesh) point.

    Training sets are prefixes of one train split, so larger points extend
    smaller ones. A failing point is recorded with its error and the sweep goes on.
    """
    n_train_grid = sorted(n_train_grid or config.sweep_n_train)
    coarse_grid = list(coarse_grid or config.sweep_coarse)
    if not n_train_grid or not coarse_grid:
        raise ConfigError("Sweep grids must not be empty")
    train = ensure_split(config, data_root, "train", max(n_train_grid), threads)
    test = ensure_split(config, data_root, "test", threads=threads)
    reference = ensure_split(config, data_root, "reference", threads=threads)
    reference_outputs = _outputs(reference.solutions)
    catalog = config.catalog()
    cache = DesignMatrixCache(cache_dir) if cache_dir else None

    datasets = {
        coarse_label(mesh): TrainingDataset.from_microstructures(
            train.microstructures, train.solutions, mesh, catalog, config.boundary, threads, cache
        )
        for mesh in coarse_grid
    }

    def run_point(job: tuple[int, MeshSpec]) -> SweepRow:
        n_train, mesh = job
        label = coarse_label(mesh)
        started = time.perf_counter()
        try:
            if n_train > len(train):
                raise ConfigError(f"Only {len(train)} training samples are available")
            dataset = datasets[label].subset(np.arange(n_train))
            params, _ = fit(dataset, catalog, mesh, config.em, seed=config.em.seed)
            report = evaluate(
                params,
                test.microstructures,
                test.solutions,
                config.n_pred_samples,
                config.seed,
                reference_outputs=reference_outputs,
                coverage_mode=config.coverage_mode,
            )
        except SurrogateError as e:
            logger.error(
                "Sweep point failed",
                extra={"context": {"n_train": n_train, "coarse_dim": label, "error": str(e)}},
            )
            return SweepRow(n_train, label, math.nan, 0, time.perf_counter() - started, f"failed: {e}")
        row = SweepRow(n_train, label, report.relative_error, params.nnz_theta, time.perf_counter() - started)
        logger.info("Sweep point finished", extra={"context": {"n_train": n_train, "coarse_dim": label}})
        return row

    jobs = [(n, mesh) for mesh in coarse_grid for n in n_train_grid]
    return parallel_map(run_point, jobs, threads)


def write_sweep(path: Path, rows: Sequence[SweepRow]) -> None:
    write_csv(path, SWEEP_COLUMNS, [r.row() for r in rows])


def evaluate_split(
    params: ModelParams, config: ExperimentConfig, data_root: Path, threads: int = 1
) -> MetricsReport:
    test: SplitData = ensure_split(config, data_root, "test", threads=threads)
    reference = ensure_split(config, data_root, "reference", threads=threads)
    return evaluate(
        params,
        test.microstructures,
        test.solutions,
        config.n_pred_samples,
        config.seed,
        reference_outputs=_outputs(reference.solutions),
        coverage_mode=config.coverage_mode,
        threads=threads,
    )


__all__ = [
    "COVERAGE_LEVELS",
    "HISTOGRAM_COLUMNS",
    "PER_SAMPLE_COLUMNS",
    "SWEEP_COLUMNS",
    "MetricsReport",
    "SampleMetrics",
    "SweepRow",
    "coarse_label",
    "coverage",
    "evaluate",
    "evaluate_split",
    "export_prediction",
    "output_variance",
    "squared_distance",
    "sweep",
    "write_sweep",
]
