"""Encoder/decoder densities of the coarse-grained surrogate and predictive sampling.

The encoder maps features of the fine microstructure to a diagonal Gaussian over
coarse log-conductivities z_c; the decoder maps the coarse solution U_c(z_c) to
a diagonal Gaussian over fine nodal temperatures with mean W U_c.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from scipy import sparse, special

from src.features.feature_functions import FeatureCatalog, build_design_matrix
from src.features.fem import BoundarySpec, CoarseModel, MeshSpec, interpolation_matrix
from src.features.microstructure import Microstructure
from src.shared.errors import ConfigError, DomainError, NumericError
from src.shared.logging import get_logger
from src.shared.protocols import ForwardModel
from src.shared.storage import read_json, write_json
from src.shared.workers import child_seeds, parallel_map

logger = get_logger(__name__)

MODEL_VERSION = 1
VARIANCE_FLOOR = 1e-12
DEFAULT_CHUNK_SIZE = 256
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class ModelParams:
    theta_c: np.ndarray
    sigma2: np.ndarray
    s: np.ndarray
    catalog: FeatureCatalog
    coarse_mesh: MeshSpec
    fine_mesh: MeshSpec
    boundary: BoundarySpec = field(default_factory=BoundarySpec)
    gamma: float = 0.0
    metadata: dict[str, Any] = field(default_factory=dict)
    forward: ForwardModel | None = field(default=None, repr=False, compare=False)
    interpolation: sparse.csr_matrix | None = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        self.theta_c = np.asarray(self.theta_c, dtype=float).reshape(-1)
        self.sigma2 = np.asarray(self.sigma2, dtype=float).reshape(-1)
        self.s = np.asarray(self.s, dtype=float).reshape(-1)
        if self.theta_c.size != len(self.catalog):
            raise ConfigError(f"theta_c has {self.theta_c.size} entries for {len(self.catalog)} features")
        if self.sigma2.size != self.model.n_latent:
            raise ConfigError(f"sigma2 has {self.sigma2.size} entries for {self.model.n_latent} coarse elements")
        if self.s.size != self.W.shape[0]:
            raise ConfigError(f"s has {self.s.size} entries for {self.W.shape[0]} fine nodes")
        if np.any(~(self.sigma2 > 0)) or np.any(~(self.s > 0)):
            raise DomainError("Encoder and decoder variances must be positive")

    @property
    def model(self) -> ForwardModel:
        if self.forward is None:
            self.forward = CoarseModel(self.boundary.build(self.coarse_mesh))
        return self.forward

    @property
    def W(self) -> sparse.csr_matrix:
        if self.interpolation is None:
            self.interpolation = interpolation_matrix(self.coarse_mesh, self.fine_mesh)
        return self.interpolation

    @property
    def catalog_hash(self) -> str:
        return self.catalog.catalog_hash()

    @property
    def nnz_theta(self) -> int:
        return int(np.count_nonzero(self.theta_c))

    def replace(self, **changes: Any) -> "ModelParams":
        values = {
            "theta_c": self.theta_c,
            "sigma2": self.sigma2,
            "s": self.s,
            "catalog": self.catalog,
            "coarse_mesh": self.coarse_mesh,
            "fine_mesh": self.fine_mesh,
            "boundary": self.boundary,
            "gamma": self.gamma,
            "metadata": dict(self.metadata),
            "forward": self.forward,
            "interpolation": self.interpolation,
        }
        values.update(changes)
        return ModelParams(**values)

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": MODEL_VERSION,
            "theta_c": self.theta_c.tolist(),
            "sigma2": self.sigma2.tolist(),
            "s": self.s.tolist(),
            "gamma": self.gamma,
            "catalog": self.catalog.to_dict(),
            "catalog_hash": self.catalog_hash,
            "coarse_mesh": self.coarse_mesh.to_dict(),
            "fine_mesh": self.fine_mesh.to_dict(),
            "boundary": self.boundary.to_dict(),
            "interpolation": {"kind": "bilinear_shape_functions"},
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelParams":
        version = int(data.get("version", MODEL_VERSION))
        if version != MODEL_VERSION:
            raise ConfigError(f"Unsupported model version {version}")
        catalog = FeatureCatalog.from_dict(data["catalog"])
        if data.get("catalog_hash") and data["catalog_hash"] != catalog.catalog_hash():
            raise ConfigError("Model catalog hash does not match its catalog entries")
        return cls(
            theta_c=np.array(data["theta_c"], dtype=float),
            sigma2=np.array(data["sigma2"], dtype=float),
            s=np.array(data["s"], dtype=float),
            catalog=catalog,
            coarse_mesh=MeshSpec.from_dict(data["coarse_mesh"]),
            fine_mesh=MeshSpec.from_dict(data["fine_mesh"]),
            boundary=BoundarySpec.from_dict(data.get("boundary", {})),
            gamma=float(data.get("gamma", 0.0)),
            metadata=dict(data.get("metadata", {})),
        )


@dataclass
class PredictiveEnsemble:
    mean: np.ndarray
    variance: np.ndarray
    n_samples: int
    samples: np.ndarray | None = None
    monitor_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    monitor_values: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    @property
    def std(self) -> np.ndarray:
        return np.sqrt(self.variance)


def encoder_log_density(z_c: np.ndarray, encoder_mean: np.ndarray, sigma2: np.ndarray) -> np.ndarray | float:
    """log N(z_c | encoder_mean, diag(sigma2)); leading axes of ``z_c`` are batch axes."""
    z = np.asarray(z_c, dtype=float)
    var = np.asarray(sigma2, dtype=float)
    value = -0.5 * np.sum(LOG_2PI + np.log(var) + (z - encoder_mean) ** 2 / var, axis=-1)
    return float(value) if np.ndim(value) == 0 else value


def decoder_log_density(
    u_f: np.ndarray, u_c: np.ndarray, W: sparse.spmatrix | np.ndarray, s: np.ndarray
) -> np.ndarray | float:
    """log N(u_f | W u_c, diag(s)); ``u_c`` may be a batch ``(m, n_c)``."""
    u_c = np.asarray(u_c, dtype=float)
    mean = (W @ u_c.T).T if u_c.ndim == 2 else W @ u_c
    var = np.asarray(s, dtype=float)
    value = -0.5 * np.sum(LOG_2PI + np.log(var) + (np.asarray(u_f) - mean) ** 2 / var, axis=-1)
    return float(value) if np.ndim(value) == 0 else value


def encoder_mean(
    params: ModelParams,
    lambda_f: Microstructure | None = None,
    design: np.ndarray | None = None,
) -> np.ndarray:
    if design is None:
        if lambda_f is None:
            raise DomainError("Either a microstructure or its design matrix is required")
        design = build_design_matrix(lambda_f, params.coarse_mesh, params.catalog).values
    return np.asarray(design, dtype=float) @ params.theta_c


def effective_conductivity(
    lambda_f: Microstructure | None,
    params: ModelParams,
    design: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Per-element mode exp(Phi theta) and mean exp(Phi theta + sigma2 / 2) of lambda_c."""
    mu = encoder_mean(params, lambda_f, design)
    return np.exp(mu), np.exp(mu + 0.5 * params.sigma2)


@dataclass
class _ChunkStats:
    count: int
    mean: np.ndarray
    m2: np.ndarray
    samples: np.ndarray | None
    monitored: np.ndarray


def _merge(left: _ChunkStats, right: _ChunkStats) -> _ChunkStats:
    count = left.count + right.count
    delta = right.mean - left.mean
    mean = left.mean + delta * (right.count / count)
    m2 = left.m2 + right.m2 + delta**2 * (left.count * right.count / count)
    samples = None
    if left.samples is not None and right.samples is not None:
        samples = np.vstack([left.samples, right.samples])
    return _ChunkStats(count, mean, m2, samples, np.vstack([left.monitored, right.monitored]))


def _draw_coarse(
    model: ForwardModel, mu: np.ndarray, sigma2: np.ndarray, rng: np.random.Generator, m: int
) -> tuple[np.ndarray, np.ndarray]:
    z = mu[None, :] + np.sqrt(np.maximum(sigma2, VARIANCE_FLOOR))[None, :] * rng.standard_normal((m, mu.size))
    return z, model.solve_batch(z)


def predict(
    lambda_f: Microstructure | None,
    params: ModelParams,
    n_samples: int,
    seed: int,
    *,
    design: np.ndarray | None = None,
    chunk_size: int = DEFAULT_CHUNK_SIZE,
    threads: int = 1,
    keep_samples: bool = False,
    monitor_nodes: list[int] | np.ndarray | None = None,
) -> PredictiveEnsemble:
    """Sample the predictive density of the fine temperatures for one microstructure.

    Draws are generated in fixed-size chunks, each with its own child seed, and
    merged in chunk order, so the result does not depend on ``threads``.
    """
    if n_samples < 1:
        raise DomainError(f"n_samples must be at least 1, got {n_samples}")
    mu = encoder_mean(params, lambda_f, design)
    model = params.model
    W = params.W
    s_std = np.sqrt(np.maximum(params.s, VARIANCE_FLOOR))
    if monitor_nodes is None:
        monitored = np.array([params.fine_mesh.node_id(params.fine_mesh.nel_x, 0)], dtype=np.int64)
    else:
        monitored = np.asarray(monitor_nodes, dtype=np.int64)

    sizes = [min(chunk_size, n_samples - start) for start in range(0, n_samples, chunk_size)]
    seeds = child_seeds(seed, len(sizes))

    def run_chunk(k: int) -> _ChunkStats:
        rng = np.random.default_rng(seeds[k])
        z, u_c = _draw_coarse(model, mu, params.sigma2, rng, sizes[k])
        failed = ~np.all(np.isfinite(u_c), axis=1)
        if np.any(failed):
            offending = z[np.flatnonzero(failed)[0]]
            raise NumericError(
                "Coarse solve failed for a predictive draw",
                context={"chunk": k, "z_c": offending.tolist()},
            )
        u_f = (W @ u_c.T).T + s_std[None, :] * rng.standard_normal((sizes[k], W.shape[0]))
        mean = u_f.mean(axis=0)
        return _ChunkStats(
            count=sizes[k],
            mean=mean,
            m2=((u_f - mean) ** 2).sum(axis=0),
            samples=u_f if keep_samples else None,
            monitored=u_f[:, monitored],
        )

    chunks = parallel_map(run_chunk, range(len(sizes)), threads)
    total = chunks[0]
    for chunk in chunks[1:]:
        total = _merge(total, chunk)
    logger.debug(
        "Predictive ensemble ready",
        extra={"context": {"n_samples": n_samples, "chunks": len(sizes), "seed": seed}},
    )
    return PredictiveEnsemble(
        mean=total.mean,
        variance=np.maximum(total.m2 / total.count, 0.0),
        n_samples=total.count,
        samples=total.samples,
        monitor_nodes=monitored,
        monitor_values=total.monitored,
    )


def predictive_log_density(
    u_f: np.ndarray,
    lambda_f: Microstructure | None,
    params: ModelParams,
    n_samples: int = 512,
    seed: int = 0,
    *,
    design: np.ndarray | None = None,
) -> float:
    """Monte-Carlo estimate of log p(u_f | lambda_f) under the predictive density."""
    mu = encoder_mean(params, lambda_f, design)
    rng = np.random.default_rng(seed)
    _, u_c = _draw_coarse(params.model, mu, params.sigma2, rng, n_samples)
    ok = np.all(np.isfinite(u_c), axis=1)
    if not np.any(ok):
        raise NumericError("Every coarse solve failed while scoring a held-out sample")
    if not np.all(ok):
        logger.warning(
            "Dropping failed coarse solves from the predictive score",
            extra={"context": {"failed": int((~ok).sum()), "n_samples": n_samples}},
        )
    log_terms = decoder_log_density(u_f, u_c[ok], params.W, np.maximum(params.s, VARIANCE_FLOOR))
    return float(special.logsumexp(log_terms) - math.log(int(ok.sum())))


def save_model(path: Path, params: ModelParams) -> None:
    write_json(path, params.to_dict())
    logger.info("Model saved", extra={"context": {"path": str(path), "nnz_theta": params.nnz_theta}})


def load_model(path: Path) -> ModelParams:
    return ModelParams.from_dict(read_json(path))
