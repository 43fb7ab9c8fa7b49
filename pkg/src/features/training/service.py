"""Monte-Carlo EM for the coarse-grained surrogate with a Laplace prior on theta_c.

Each iteration runs an E-step over all training samples, then updates theta_c
(weighted LASSO), sigma2 and s in that order. The sparsity level gamma is fixed
or chosen by K-fold cross-validation on held-out predictive log density.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
from scipy import sparse

from src.features.feature_functions import (
    DesignMatrixCache,
    FeatureCatalog,
    FeatureEntry,
    FeatureKind,
    FeatureNormalization,
    fit_normalization,
    normalize,
    partition,
    raw_design_stack,
)
from src.features.feature_functions.effective_medium import effective_conductivity
from src.features.fem import BoundarySpec, CoarseModel, FemSolution, MeshSpec, interpolation_matrix
from src.features.microstructure import Microstructure
from src.features.surrogate import VARIANCE_FLOOR, ModelParams, predictive_log_density
from src.features.training.lasso import DEFAULT_MAX_SWEEPS, DEFAULT_TOLERANCE, coordinate_descent
from src.features.training.mcmc import EStep, EStepMoments, McmcConfig, McmcEStep, QuadratureEStep
from src.shared.errors import ConfigError, ConvergenceError, NumericError
from src.shared.logging import get_logger
from src.shared.protocols import ForwardModel
from src.shared.storage import array_hash, write_csv
from src.shared.validation import MeshValidator
from src.shared.workers import indexed_seed, parallel_map

logger = get_logger(__name__)

RIDGE = 1e-8
TRAINING_LOG_COLUMNS = ("iteration", "lower_bound", "mean_accept_rate", "nnz_theta", "wall_time_s")
CV_COLUMNS = ("gamma", "fold", "score", "nnz_theta")


DEFAULT_GAMMA_GRID = tuple(float(g) for g in np.logspace(-2, 6, 9))
SELECTION_RULES = ("one_se", "best")


@dataclass(frozen=True)
class GammaSelection:
    """How the sparsity strength is chosen.

    ``cv`` scores every grid value by K-fold held-out predictive log density.
    The ``one_se`` rule takes the largest gamma whose mean score is within one
    standard error of the best; ``best`` takes the maximum. ``fixed`` uses ``value``.
    """

    mode: str = "cv"
    value: float = 0.0
    grid: tuple[float, ...] = DEFAULT_GAMMA_GRID
    folds: int = 5
    n_pred_samples: int = 512
    max_iter: int = 20
    rule: str = "one_se"

    def __post_init__(self) -> None:
        if self.mode not in ("fixed", "cv"):
            raise ConfigError(f"gamma mode must be 'fixed' or 'cv', got {self.mode!r}")
        if self.rule not in SELECTION_RULES:
            raise ConfigError(f"gamma rule must be one of {SELECTION_RULES}, got {self.rule!r}")
        if self.value < 0 or any(g < 0 for g in self.grid):
            raise ConfigError("gamma values must be non-negative")
        if self.mode == "cv" and (not self.grid or self.folds < 2):
            raise ConfigError("cross-validation needs a non-empty gamma grid and at least 2 folds")

    def to_dict(self) -> dict[str, Any]:
        return {
            "mode": self.mode,
            "value": self.value,
            "grid": list(self.grid),
            "folds": self.folds,
            "n_pred_samples": self.n_pred_samples,
            "max_iter": self.max_iter,
            "rule": self.rule,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GammaSelection":
        defaults = cls()
        return cls(
            mode=str(data.get("mode", defaults.mode)),
            value=float(data.get("value", defaults.value)),
            grid=tuple(float(g) for g in data.get("grid", defaults.grid)),
            folds=int(data.get("folds", defaults.folds)),
            n_pred_samples=int(data.get("n_pred_samples", defaults.n_pred_samples)),
            max_iter=int(data.get("max_iter", defaults.max_iter)),
            rule=str(data.get("rule", defaults.rule)),
        )


@dataclass(frozen=True)
class EmConfig:
    max_iter: int = 200
    tol: float = 1e-4
    window: int = 5
    mcmc: McmcConfig = field(default_factory=McmcConfig)
    gamma: GammaSelection = field(default_factory=GammaSelection)
    seed: int = 0
    # a point-mass encoder is a fixed point of EM
    init_sigma2_floor: float = 1e-2
    normalize: bool = True
    estep: str = "mcmc"

    def __post_init__(self) -> None:
        if self.max_iter < 1 or self.window < 1:
            raise ConfigError("max_iter and window must be at least 1")
        if not self.tol > 0 or not self.init_sigma2_floor > 0:
            raise ConfigError("tol and init_sigma2_floor must be positive")
        if self.estep not in ("mcmc", "quadrature"):
            raise ConfigError(f"estep must be 'mcmc' or 'quadrature', got {self.estep!r}")

    def sampler(self) -> EStep:
        return QuadratureEStep() if self.estep == "quadrature" else McmcEStep(self.mcmc)

    def to_dict(self) -> dict[str, Any]:
        return {
            "max_iter": self.max_iter,
            "tol": self.tol,
            "window": self.window,
            "mcmc": self.mcmc.to_dict(),
            "gamma": self.gamma.to_dict(),
            "seed": self.seed,
            "init_sigma2_floor": self.init_sigma2_floor,
            "normalize": self.normalize,
            "estep": self.estep,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "EmConfig":
        return cls(
            max_iter=int(data.get("max_iter", 200)),
            tol=float(data.get("tol", 1e-4)),
            window=int(data.get("window", 5)),
            mcmc=McmcConfig.from_dict(data.get("mcmc", {})),
            gamma=GammaSelection.from_dict(data.get("gamma", {})),
            seed=int(data.get("seed", 0)),
            init_sigma2_floor=float(data.get("init_sigma2_floor", 1e-2)),
            normalize=bool(data.get("normalize", True)),
            estep=str(data.get("estep", "mcmc")),
        )


@dataclass
class TrainingDataset:
    design_raw: np.ndarray
    outputs: np.ndarray
    coarse_mesh: MeshSpec
    fine_mesh: MeshSpec
    boundary: BoundarySpec = field(default_factory=BoundarySpec)
    microstructures: list[Microstructure] | None = None
    sca_targets: np.ndarray | None = None
    dataset_hash: str = ""

    def __post_init__(self) -> None:
        self.design_raw = np.asarray(self.design_raw, dtype=float)
        self.outputs = np.asarray(self.outputs, dtype=float)
        if self.design_raw.ndim != 3 or self.design_raw.shape[0] < 1:
            raise ConfigError("A training set needs at least one sample with a 2D design matrix")
        if self.outputs.shape != (self.design_raw.shape[0], self.fine_mesh.n_nodes):
            raise ConfigError(
                f"Outputs of shape {self.outputs.shape} do not match "
                f"{self.design_raw.shape[0]} samples on {self.fine_mesh.n_nodes} fine nodes"
            )
        if self.design_raw.shape[1] != self.coarse_mesh.n_elements:
            raise ConfigError(
                f"Design matrices have {self.design_raw.shape[1]} rows for "
                f"{self.coarse_mesh.n_elements} coarse elements"
            )
        if not self.dataset_hash:
            self.dataset_hash = array_hash(self.design_raw, self.outputs)

    @property
    def n_samples(self) -> int:
        return int(self.design_raw.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.design_raw.shape[2])

    def designs(self, catalog: FeatureCatalog) -> np.ndarray:
        if len(catalog) != self.n_features:
            raise ConfigError(f"Catalog has {len(catalog)} features, design matrices have {self.n_features}")
        return normalize(self.design_raw, catalog)

    def init_targets(self, catalog: FeatureCatalog) -> np.ndarray:
        """Log SCA conductivity per element, the starting point of the encoder fit."""
        if self.sca_targets is not None:
            return self.sca_targets
        for j, entry in enumerate(catalog.entries):
            if entry.kind == FeatureKind.EFFECTIVE_MEDIUM and entry.params.get("formula") == "sca":
                return self.design_raw[:, :, j]
        return np.zeros(self.design_raw.shape[:2])

    def subset(self, indices: Sequence[int] | np.ndarray) -> "TrainingDataset":
        idx = np.asarray(indices, dtype=np.int64)
        return TrainingDataset(
            design_raw=self.design_raw[idx],
            outputs=self.outputs[idx],
            coarse_mesh=self.coarse_mesh,
            fine_mesh=self.fine_mesh,
            boundary=self.boundary,
            microstructures=[self.microstructures[i] for i in idx] if self.microstructures else None,
            sca_targets=self.sca_targets[idx] if self.sca_targets is not None else None,
        )

    @classmethod
    def from_microstructures(
        cls,
        microstructures: Sequence[Microstructure],
        solutions: Sequence[FemSolution | np.ndarray],
        coarse_mesh: MeshSpec,
        catalog: FeatureCatalog,
        boundary: BoundarySpec | None = None,
        threads: int = 1,
        cache: DesignMatrixCache | None = None,
    ) -> "TrainingDataset":
        if not microstructures or len(microstructures) != len(solutions):
            raise ConfigError("Need one fine solution per microstructure and at least one pair")
        shapes = {ms.cells.shape for ms in microstructures}
        if len(shapes) != 1:
            raise ConfigError(f"Microstructures have inconsistent shapes: {sorted(shapes)}")
        ny, nx = shapes.pop()
        fine_mesh = MeshSpec(nx, ny)
        outputs = np.stack(
            [s.nodal_values if isinstance(s, FemSolution) else np.asarray(s, dtype=float) for s in solutions]
        )
        dataset_hash = array_hash(*[ms.cells for ms in microstructures], outputs)

        def compute() -> np.ndarray:
            return raw_design_stack(microstructures, coarse_mesh, catalog, threads)

        raw = cache.get_or_compute(dataset_hash, catalog, compute) if cache else compute()
        sca = np.array(
            [
                [
                    math.log(
                        effective_conductivity(
                            "sca",
                            ms.medium.lambda_hi,
                            ms.medium.lambda_lo,
                            float(np.mean(block == ms.medium.lambda_hi)),
                        )
                    )
                    for block in partition(ms, coarse_mesh)
                ]
                for ms in microstructures
            ]
        )
        return cls(
            design_raw=raw,
            outputs=outputs,
            coarse_mesh=coarse_mesh,
            fine_mesh=fine_mesh,
            boundary=boundary or BoundarySpec(),
            microstructures=list(microstructures),
            sca_targets=sca,
            dataset_hash=dataset_hash,
        )


@dataclass
class IterationRecord:
    iteration: int
    lower_bound: float
    lower_bound_stderr: float
    log_likelihood: float
    mean_accept_rate: float
    nnz_theta: int
    wall_time_s: float
    acceptance_warnings: int = 0
    rejected_solves: int = 0

    def log_row(self) -> tuple[Any, ...]:
        return (self.iteration, self.lower_bound, self.mean_accept_rate, self.nnz_theta, self.wall_time_s)


@dataclass
class EmState:
    params: ModelParams
    gamma: float = 0.0
    iteration: int = 0
    records: list[IterationRecord] = field(default_factory=list)
    chain_start: np.ndarray | None = None
    last_moments: EStepMoments | None = None
    converged: bool = False
    cv_rows: list[dict[str, Any]] = field(default_factory=list)

    @property
    def lower_bound_trace(self) -> np.ndarray:
        return np.array([r.lower_bound for r in self.records])

    @property
    def lower_bound_stderr(self) -> np.ndarray:
        return np.array([r.lower_bound_stderr for r in self.records])

    @property
    def log_likelihood_trace(self) -> np.ndarray:
        return np.array([r.log_likelihood for r in self.records])

    @property
    def e_step_stats(self) -> EStepMoments | None:
        return self.last_moments

    @property
    def mcmc_diagnostics(self) -> list[dict[str, Any]]:
        return [
            {
                "iteration": r.iteration,
                "mean_accept_rate": r.mean_accept_rate,
                "acceptance_warnings": r.acceptance_warnings,
                "rejected_solves": r.rejected_solves,
            }
            for r in self.records
        ]


def penalty_mask(catalog: FeatureCatalog) -> np.ndarray:
    mask = np.ones(len(catalog), dtype=bool)
    mask[catalog.constant_columns] = False
    return mask


def log_laplace_prior(theta: np.ndarray, gamma: float, penalized: np.ndarray | None = None) -> float:
    """Sum of log Laplace densities with rate sqrt(gamma); 0 for the flat gamma = 0 prior."""
    if gamma <= 0:
        return 0.0
    mask = np.ones(theta.size, dtype=bool) if penalized is None else np.asarray(penalized, dtype=bool)
    rate = math.sqrt(gamma)
    return float(mask.sum() * math.log(rate / 2.0) - rate * np.sum(np.abs(theta[mask])))


def _encoder_means(designs: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return np.einsum("nkf,f->nk", designs, theta)


def e_step(
    dataset: TrainingDataset,
    params: ModelParams,
    mcmc_config: McmcConfig | None = None,
    seed: int = 0,
    chain_start: np.ndarray | None = None,
    sampler: EStep | None = None,
) -> EStepMoments:
    sampler = sampler or McmcEStep(mcmc_config)
    designs = dataset.designs(params.catalog)
    return sampler.run(
        dataset.outputs,
        _encoder_means(designs, params.theta_c),
        params.sigma2,
        params.s,
        params.model,
        params.W,
        chain_start,
        seed,
    )


def m_step_theta(
    moments: EStepMoments,
    designs: np.ndarray,
    sigma2: np.ndarray,
    gamma: float,
    theta0: np.ndarray | None = None,
    penalized: np.ndarray | None = None,
    tol: float = DEFAULT_TOLERANCE,
    max_sweeps: int = DEFAULT_MAX_SWEEPS,
) -> np.ndarray:
    """Maximize the expected encoder log density minus sqrt(gamma) |theta|_1."""
    precision = 1.0 / np.asarray(sigma2, dtype=float)
    A = np.einsum("nkf,k,nkg->fg", designs, precision, designs)
    A = 0.5 * (A + A.T)
    c = np.einsum("nkf,k,nk->f", designs, precision, moments.z_mean)
    n_features = designs.shape[2]
    mask = np.ones(n_features, dtype=bool) if penalized is None else np.asarray(penalized, dtype=bool)
    penalty = np.where(mask, math.sqrt(max(gamma, 0.0)), 0.0)
    theta, _ = coordinate_descent(A, c, penalty, theta0=theta0, tol=tol, max_sweeps=max_sweeps)
    return theta


def m_step_sigma(moments: EStepMoments, designs: np.ndarray, theta: np.ndarray) -> np.ndarray:
    deviation = moments.z_mean - _encoder_means(designs, theta)
    sigma2 = np.mean(moments.z_var + deviation**2, axis=0)
    floored = sigma2 < VARIANCE_FLOOR
    if np.any(floored):
        logger.warning(
            "Encoder variances floored",
            extra={"context": {"elements": np.flatnonzero(floored).tolist(), "floor": VARIANCE_FLOOR}},
        )
    return np.maximum(sigma2, VARIANCE_FLOOR)


def m_step_s(moments: EStepMoments) -> np.ndarray:
    s = np.mean(moments.residual_sq, axis=0)
    floored = int(np.sum(s < VARIANCE_FLOOR))
    if floored:
        logger.debug("Decoder variances floored", extra={"context": {"nodes": floored}})
    return np.maximum(s, VARIANCE_FLOOR)


def init_params(
    dataset: TrainingDataset,
    catalog: FeatureCatalog,
    em_config: EmConfig | None = None,
    gamma: float = 0.0,
    forward: ForwardModel | None = None,
    interpolation: sparse.spmatrix | None = None,
) -> ModelParams:
    """Ridge fit of the encoder to log SCA, then variances from the fit residuals.

    sigma2 is the per-element residual variance of the ridge fit, floored at
    ``em_config.init_sigma2_floor`` where the catalog reproduces the target.
    """
    em_config = em_config or EmConfig()
    designs = dataset.designs(catalog)
    target = dataset.init_targets(catalog)
    A = np.einsum("nkf,nkg->fg", designs, designs)
    c = np.einsum("nkf,nk->f", designs, target)
    theta = np.linalg.solve(A + RIDGE * np.eye(A.shape[0]), c)
    residual = target - _encoder_means(designs, theta)
    sigma2 = np.mean(residual**2, axis=0)
    floored = sigma2 < em_config.init_sigma2_floor
    if np.any(floored):
        logger.debug(
            "Initial encoder variances floored",
            extra={"context": {"elements": int(floored.sum()), "floor": em_config.init_sigma2_floor}},
        )
    sigma2 = np.maximum(sigma2, em_config.init_sigma2_floor)

    forward = forward or CoarseModel(dataset.boundary.build(dataset.coarse_mesh))
    W = sparse.csr_matrix(interpolation) if interpolation is not None else interpolation_matrix(
        dataset.coarse_mesh, dataset.fine_mesh
    )
    u_c = forward.solve_batch(_encoder_means(designs, theta))
    if not np.all(np.isfinite(u_c)):
        raise NumericError("Coarse solve failed at the initial encoder means")
    s = np.maximum(np.mean((dataset.outputs - (W @ u_c.T).T) ** 2, axis=0), VARIANCE_FLOOR)
    return ModelParams(
        theta_c=theta,
        sigma2=sigma2,
        s=s,
        catalog=catalog,
        coarse_mesh=dataset.coarse_mesh,
        fine_mesh=dataset.fine_mesh,
        boundary=dataset.boundary,
        gamma=gamma,
        forward=forward,
        interpolation=W,
    )


def has_converged(trace: Sequence[float], window: int, tol: float) -> bool:
    """Relative change between the means of the last two windows of the trace."""
    if len(trace) < 2 * window:
        return False
    current = float(np.mean(trace[-window:]))
    previous = float(np.mean(trace[-2 * window : -window]))
    return abs(current - previous) <= tol * max(abs(previous), 1e-12)


def run_em(
    dataset: TrainingDataset,
    params: ModelParams,
    em_config: EmConfig,
    gamma: float,
    seed: int,
    sampler: EStep | None = None,
    max_iter: int | None = None,
) -> tuple[ModelParams, EmState]:
    sampler = sampler or em_config.sampler()
    designs = dataset.designs(params.catalog)
    penalized = penalty_mask(params.catalog)
    params = params.replace(gamma=gamma)
    state = EmState(params=params, gamma=gamma)
    started = time.perf_counter()
    limit = max_iter or em_config.max_iter

    for iteration in range(limit):
        moments = sampler.run(
            dataset.outputs,
            _encoder_means(designs, params.theta_c),
            params.sigma2,
            params.s,
            params.model,
            params.W,
            state.chain_start,
            indexed_seed(seed, iteration),
        )
        bound = moments.total_lower_bound + log_laplace_prior(params.theta_c, gamma, penalized)
        record = IterationRecord(
            iteration=iteration,
            lower_bound=bound,
            lower_bound_stderr=moments.lower_bound_stderr,
            log_likelihood=moments.total_log_likelihood + log_laplace_prior(params.theta_c, gamma, penalized),
            mean_accept_rate=float(np.mean(moments.accept_rate)),
            nnz_theta=params.nnz_theta,
            wall_time_s=time.perf_counter() - started,
            acceptance_warnings=moments.acceptance_warnings,
            rejected_solves=moments.rejected_solves,
        )
        state.records.append(record)

        try:
            theta = m_step_theta(moments, designs, params.sigma2, gamma, params.theta_c, penalized)
        except ConvergenceError as e:
            logger.warning(
                "Encoder weight update did not converge; keeping the last iterate",
                extra={"context": {"iteration": iteration, "sweeps": e.iterations}},
            )
            theta = np.asarray(e.last_iterate, dtype=float)
        sigma2 = m_step_sigma(moments, designs, theta)
        s = m_step_s(moments)
        params = params.replace(theta_c=theta, sigma2=sigma2, s=s)
        state.chain_start = moments.z_mean
        state.last_moments = moments
        state.iteration = iteration + 1

        logger.info(
            "EM iteration",
            extra={
                "context": {
                    "iteration": iteration,
                    "lower_bound": bound,
                    "stderr": record.lower_bound_stderr,
                    "accept": record.mean_accept_rate,
                    "nnz_theta": params.nnz_theta,
                }
            },
        )
        if has_converged(state.lower_bound_trace, em_config.window, em_config.tol):
            state.converged = True
            break

    state.params = params
    return params, state


def _folds(n_samples: int, folds: int, seed: int) -> list[np.ndarray]:
    k = min(folds, n_samples)
    if k < folds:
        logger.warning("Fewer samples than folds; using leave-one-out", extra={"context": {"folds": k}})
    order = np.random.default_rng(np.random.SeedSequence([seed, 1])).permutation(n_samples)
    return [np.sort(part) for part in np.array_split(order, k)]


def select_gamma(
    dataset: TrainingDataset,
    catalog: FeatureCatalog,
    em_config: EmConfig,
    selection: GammaSelection,
    seed: int,
    threads: int = 1,
    sampler: EStep | None = None,
    forward: ForwardModel | None = None,
    interpolation: sparse.spmatrix | None = None,
) -> tuple[float, list[dict[str, Any]]]:
    """Pick gamma by K-fold cross-validation on held-out predictive log density.

    Without a fitted normalization the features are standardized on each
    fold's training part only.
    """
    if dataset.n_samples < 2:
        raise ConfigError("Cross-validation needs at least two training samples")
    splits = _folds(dataset.n_samples, selection.folds, seed)
    grid = sorted(selection.grid)
    limit = min(selection.max_iter, em_config.max_iter)
    if forward is None:
        forward = CoarseModel(dataset.boundary.build(dataset.coarse_mesh))

    fold_catalogs = []
    for held_out in splits:
        train_idx = np.setdiff1d(np.arange(dataset.n_samples), held_out)
        if catalog.normalization is None and em_config.normalize:
            fold_catalogs.append(fit_normalization(dataset.design_raw[train_idx], catalog))
        else:
            fold_catalogs.append(catalog)

    def score(job: tuple[float, int]) -> dict[str, Any]:
        gamma, fold = job
        held_out = splits[fold]
        fold_catalog = fold_catalogs[fold]
        train = dataset.subset(np.setdiff1d(np.arange(dataset.n_samples), held_out))
        start = init_params(train, fold_catalog, em_config, gamma, forward, interpolation)
        params, _ = run_em(train, start, em_config, gamma, indexed_seed(seed, fold), sampler, limit)
        designs = normalize(dataset.design_raw[held_out], fold_catalog)
        scores = [
            predictive_log_density(
                dataset.outputs[i],
                None,
                params,
                selection.n_pred_samples,
                indexed_seed(seed, 100_000 + int(i)),
                design=design,
            )
            for i, design in zip(held_out, designs)
        ]
        return {"gamma": gamma, "fold": fold, "score": float(np.mean(scores)), "nnz_theta": params.nnz_theta}

    jobs = [(gamma, fold) for gamma in grid for fold in range(len(splits))]
    rows = parallel_map(score, jobs, threads)
    chosen = choose_gamma(rows, selection.rule)
    logger.info(
        "Cross-validated gamma",
        extra={"context": {"gamma": chosen, "rule": selection.rule, "scores": _score_summary(rows)}},
    )
    return chosen, rows


def _score_summary(rows: Sequence[dict[str, Any]]) -> dict[float, tuple[float, float]]:
    """Mean held-out score and its standard error across folds, per gamma."""
    summary = {}
    for gamma in sorted({r["gamma"] for r in rows}):
        scores = np.array([r["score"] for r in rows if r["gamma"] == gamma])
        stderr = float(np.std(scores, ddof=1) / math.sqrt(scores.size)) if scores.size > 1 else 0.0
        summary[gamma] = (float(np.mean(scores)), stderr)
    return summary


def choose_gamma(rows: Sequence[dict[str, Any]], rule: str = "one_se") -> float:
    if rule not in SELECTION_RULES:
        raise ConfigError(f"gamma rule must be one of {SELECTION_RULES}, got {rule!r}")
    summary = _score_summary(rows)
    if not summary:
        raise ConfigError("No cross-validation scores to choose from")
    best = max(summary, key=lambda g: (summary[g][0], g))
    if rule == "best":
        return best
    mean, stderr = summary[best]
    return max(g for g, (m, _) in summary.items() if m >= mean - stderr)


def fit(
    dataset: TrainingDataset,
    catalog: FeatureCatalog,
    coarse_mesh: MeshSpec,
    em_config: EmConfig | None = None,
    gamma_selection: GammaSelection | None = None,
    seed: int | None = None,
    *,
    threads: int = 1,
    sampler: EStep | None = None,
    forward: ForwardModel | None = None,
    interpolation: sparse.spmatrix | None = None,
) -> tuple[ModelParams, EmState]:
    em_config = em_config or EmConfig()
    selection = gamma_selection or em_config.gamma
    seed = em_config.seed if seed is None else seed

    if dataset.coarse_mesh != coarse_mesh:
        raise ConfigError(f"Dataset was built for coarse mesh {dataset.coarse_mesh}, not {coarse_mesh}")
    nested = MeshValidator.nested(
        (coarse_mesh.nel_x, coarse_mesh.nel_y), (dataset.fine_mesh.nel_x, dataset.fine_mesh.nel_y)
    )
    if not nested.is_valid:
        raise ConfigError(nested.error_message or "Meshes are not nested")
    if len(catalog) != dataset.n_features:
        raise ConfigError(f"Catalog has {len(catalog)} features, dataset has {dataset.n_features}")

    cv_rows: list[dict[str, Any]] = []
    if selection.mode == "cv":
        gamma, cv_rows = select_gamma(
            dataset, catalog, em_config, selection, seed, threads, sampler, forward, interpolation
        )
    else:
        gamma = selection.value

    if catalog.normalization is None and em_config.normalize:
        catalog = fit_normalization(dataset.design_raw, catalog)

    start = init_params(dataset, catalog, em_config, gamma, forward, interpolation)
    params, state = run_em(dataset, start, em_config, gamma, seed, sampler)
    state.cv_rows = cv_rows
    logger.info(
        "Training finished",
        extra={
            "context": {
                "iterations": state.iteration,
                "converged": state.converged,
                "gamma": gamma,
                "nnz_theta": params.nnz_theta,
            }
        },
    )
    return params, state


def synthesize_dataset(
    n_samples: int,
    coarse_mesh: MeshSpec,
    fine_mesh: MeshSpec,
    theta: np.ndarray,
    sigma2: np.ndarray | float,
    s: np.ndarray | float,
    seed: int,
    boundary: BoundarySpec | None = None,
    forward: ForwardModel | None = None,
    interpolation: sparse.spmatrix | None = None,
) -> tuple[TrainingDataset, FeatureCatalog]:
    """Draw (design, output) pairs from the generative model with known parameters.

    Column 0 of every design matrix is the constant 1; the other columns are
    independent standard normals, exposed as precomputed catalog entries.
    """
    theta = np.asarray(theta, dtype=float)
    boundary = boundary or BoundarySpec()
    forward = forward or CoarseModel(boundary.build(coarse_mesh))
    W = sparse.csr_matrix(interpolation) if interpolation is not None else interpolation_matrix(coarse_mesh, fine_mesh)
    rng = np.random.default_rng(seed)

    raw = rng.standard_normal((n_samples, coarse_mesh.n_elements, theta.size))
    raw[:, :, 0] = 1.0
    sigma = np.sqrt(np.broadcast_to(np.asarray(sigma2, dtype=float), (coarse_mesh.n_elements,)))
    z = np.einsum("nkf,f->nk", raw, theta) + sigma * rng.standard_normal((n_samples, coarse_mesh.n_elements))
    u_c = forward.solve_batch(z)
    if not np.all(np.isfinite(u_c)):
        raise NumericError("Coarse solve failed while synthesizing data")
    noise_sd = np.sqrt(np.broadcast_to(np.asarray(s, dtype=float), (W.shape[0],)))
    outputs = (W @ u_c.T).T + noise_sd * rng.standard_normal((n_samples, W.shape[0]))

    entries = [FeatureEntry(f"x{j:02d}", FeatureKind.EXTERNAL) for j in range(1, theta.size)]
    catalog = FeatureCatalog(entries=entries, normalization=FeatureNormalization.identity(theta.size))
    dataset = TrainingDataset(
        design_raw=raw,
        outputs=outputs,
        coarse_mesh=coarse_mesh,
        fine_mesh=fine_mesh,
        boundary=boundary,
    )
    return dataset, catalog


def write_training_log(path: Path, state: EmState) -> None:
    write_csv(path, TRAINING_LOG_COLUMNS, [r.log_row() for r in state.records])


def write_cv_table(path: Path, rows: list[dict[str, Any]]) -> None:
    write_csv(path, CV_COLUMNS, [[r[c] for c in CV_COLUMNS] for r in rows])


__all__ = [
    "CV_COLUMNS",
    "DEFAULT_GAMMA_GRID",
    "TRAINING_LOG_COLUMNS",
    "EmConfig",
    "EmState",
    "GammaSelection",
    "IterationRecord",
    "McmcConfig",
    "QuadratureEStep",
    "TrainingDataset",
    "choose_gamma",
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
    "synthesize_dataset",
    "write_cv_table",
    "write_training_log",
]
