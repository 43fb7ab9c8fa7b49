"""E-step samplers for the latent coarse log-conductivities.

For training sample i the target is

    q_i(z) ~ N(z | Phi_i theta, diag(sigma2)) * N(u_i | W U_c(z), diag(s))

``McmcEStep`` runs one adaptive random-walk Metropolis chain per sample, all
chains advancing together so every step is a single batched coarse solve.
``QuadratureEStep`` integrates a one-dimensional latent exactly on a fixed grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Protocol

import numpy as np
from scipy import sparse, special

from src.shared.errors import DomainError, NumericError
from src.shared.logging import get_logger
from src.shared.protocols import ForwardModel
from src.shared.workers import child_seeds

logger = get_logger(__name__)

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class McmcConfig:
    burn_in: int = 500
    samples: int = 500
    target_accept: float = 0.3
    adapt_exponent: float = 0.6
    n_importance: int = 64
    accept_low: float = 0.05
    accept_high: float = 0.9

    def __post_init__(self) -> None:
        if self.burn_in < 0 or self.samples < 2:
            raise DomainError("MCMC needs burn_in >= 0 and at least 2 retained samples")
        if not 0.0 < self.target_accept < 1.0:
            raise DomainError(f"target_accept must lie in (0, 1), got {self.target_accept}")
        if self.n_importance < 1:
            raise DomainError("n_importance must be at least 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "burn_in": self.burn_in,
            "samples": self.samples,
            "target_accept": self.target_accept,
            "adapt_exponent": self.adapt_exponent,
            "n_importance": self.n_importance,
            "accept_low": self.accept_low,
            "accept_high": self.accept_high,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "McmcConfig":
        return cls(
            burn_in=int(data.get("burn_in", 500)),
            samples=int(data.get("samples", 500)),
            target_accept=float(data.get("target_accept", 0.3)),
            adapt_exponent=float(data.get("adapt_exponent", 0.6)),
            n_importance=int(data.get("n_importance", 64)),
            accept_low=float(data.get("accept_low", 0.05)),
            accept_high=float(data.get("accept_high", 0.9)),
        )


@dataclass
class EStepMoments:
    """Per-sample posterior moments and evidence estimates from one E-step."""

    z_mean: np.ndarray
    z_var: np.ndarray
    residual_sq: np.ndarray
    accept_rate: np.ndarray
    lower_bound: np.ndarray
    lower_bound_var: np.ndarray
    log_likelihood: np.ndarray
    step_sizes: np.ndarray | None = None
    rejected_solves: int = 0
    acceptance_warnings: int = 0
    extra: dict[str, Any] = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return int(self.z_mean.shape[0])

    @property
    def total_lower_bound(self) -> float:
        return float(np.sum(self.lower_bound))

    @property
    def lower_bound_stderr(self) -> float:
        return float(np.sqrt(np.sum(self.lower_bound_var)))

    @property
    def total_log_likelihood(self) -> float:
        return float(np.sum(self.log_likelihood))


class EStep(Protocol):
    def run(
        self,
        outputs: np.ndarray,
        encoder_means: np.ndarray,
        sigma2: np.ndarray,
        s: np.ndarray,
        model: ForwardModel,
        W: sparse.spmatrix,
        chain_start: np.ndarray | None,
        seed: int,
    ) -> EStepMoments: ...


class DecoderTarget:
    """Unnormalized log q_i with the decoder quadratic form centered at reference solutions.

    With r0 = u - W U0 and delta = U_c(z) - U0 the residual norm is
    r0' S^-1 r0 - 2 b' delta + delta' G delta, b = W' S^-1 r0, G = W' S^-1 W.
    """

    def __init__(
        self,
        outputs: np.ndarray,
        encoder_means: np.ndarray,
        sigma2: np.ndarray,
        s: np.ndarray,
        W: sparse.spmatrix,
        reference: np.ndarray,
    ):
        self.mu = np.asarray(encoder_means, dtype=float)
        self.sigma2 = np.asarray(sigma2, dtype=float)
        self.s = np.asarray(s, dtype=float)
        self.W = sparse.csr_matrix(W)
        self.reference = np.asarray(reference, dtype=float)
        self.r0 = np.asarray(outputs, dtype=float) - (self.W @ self.reference.T).T
        weighted = self.r0 / self.s[None, :]
        self.b = np.asarray((self.W.T @ weighted.T).T)
        scaled_w = sparse.csr_matrix(self.W.multiply(1.0 / self.s[:, None]))
        self.G = np.asarray((self.W.T @ scaled_w).toarray())
        self.q0 = np.sum(self.r0 * weighted, axis=1)
        self.decoder_constant = -0.5 * float(np.sum(LOG_2PI + np.log(self.s)))
        self.encoder_constant = -0.5 * float(np.sum(LOG_2PI + np.log(self.sigma2)))

    def log_encoder(self, z: np.ndarray, rows: np.ndarray) -> np.ndarray:
        return self.encoder_constant - 0.5 * np.sum((z - self.mu[rows]) ** 2 / self.sigma2, axis=1)

    def log_decoder(self, u_c: np.ndarray, rows: np.ndarray) -> np.ndarray:
        delta = u_c - self.reference[rows]
        quadratic = (
            self.q0[rows]
            - 2.0 * np.sum(self.b[rows] * delta, axis=1)
            + np.einsum("ni,ij,nj->n", delta, self.G, delta)
        )
        return self.decoder_constant - 0.5 * np.maximum(quadratic, 0.0)

    def log_joint(self, z: np.ndarray, u_c: np.ndarray, rows: np.ndarray) -> np.ndarray:
        return self.log_encoder(z, rows) + self.log_decoder(u_c, rows)


def _padded_rows(W: sparse.csr_matrix) -> tuple[np.ndarray, np.ndarray]:
    """Column indices and values of each row of W, zero-padded to the widest row."""
    W = sparse.csr_matrix(W)
    counts = np.diff(W.indptr)
    width = max(int(counts.max(initial=0)), 1)
    cols = np.zeros((W.shape[0], width), dtype=np.int64)
    vals = np.zeros((W.shape[0], width))
    slot = np.arange(W.nnz) - np.repeat(W.indptr[:-1], counts)
    row = np.repeat(np.arange(W.shape[0]), counts)
    cols[row, slot] = W.indices
    vals[row, slot] = W.data
    return cols, vals


def decoder_residual_moments(
    r0: np.ndarray, W: sparse.spmatrix, delta_mean: np.ndarray, delta_cov: np.ndarray
) -> np.ndarray:
    """E[(r0 - W delta)_j^2] per sample from the mean and covariance of delta."""
    W = sparse.csr_matrix(W)
    mean_part = (r0 - (W @ delta_mean.T).T) ** 2
    cols, vals = _padded_rows(W)
    spread = np.empty_like(mean_part)
    for i in range(delta_cov.shape[0]):
        block = delta_cov[i][cols[:, :, None], cols[:, None, :]]
        spread[i] = np.einsum("fp,fpq,fq->f", vals, block, vals)
    return mean_part + np.maximum(spread, 0.0)


class _Welford:
    """Running mean and scatter matrix of a batch of vectors, one stream per row."""

    def __init__(self, n_rows: int, dim: int, full: bool = True):
        self.count = 0
        self.mean = np.zeros((n_rows, dim))
        self.full = full
        self.scatter = np.zeros((n_rows, dim, dim)) if full else np.zeros((n_rows, dim))

    def update(self, values: np.ndarray) -> None:
        self.count += 1
        delta = values - self.mean
        self.mean += delta / self.count
        after = values - self.mean
        if self.full:
            self.scatter += delta[:, :, None] * after[:, None, :]
        else:
            self.scatter += delta * after

    def covariance(self) -> np.ndarray:
        if self.count == 0:
            return np.zeros_like(self.scatter)
        if self.full:
            return 0.5 * (self.scatter + np.swapaxes(self.scatter, 1, 2)) / self.count
        return self.scatter / self.count

    def variance(self) -> np.ndarray:
        cov = self.covariance()
        return np.diagonal(cov, axis1=1, axis2=2).copy() if self.full else cov


class McmcEStep:
    def __init__(self, config: McmcConfig | None = None):
        self.config = config or McmcConfig()

    def _reference(self, model: ForwardModel, start: np.ndarray, mu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        z = start.copy()
        u = model.solve_batch(z)
        bad = ~np.all(np.isfinite(u), axis=1)
        if np.any(bad):
            z[bad] = mu[bad]
            u[bad] = model.solve_batch(z[bad])
        if not np.all(np.isfinite(u)):
            raise NumericError("Coarse solve failed at the chain starting points")
        return z, u

    def run(
        self,
        outputs: np.ndarray,
        encoder_means: np.ndarray,
        sigma2: np.ndarray,
        s: np.ndarray,
        model: ForwardModel,
        W: sparse.spmatrix,
        chain_start: np.ndarray | None,
        seed: int,
    ) -> EStepMoments:
        cfg = self.config
        mu = np.asarray(encoder_means, dtype=float)
        n_chains, dim = mu.shape
        rows = np.arange(n_chains)
        start = mu if chain_start is None else np.asarray(chain_start, dtype=float)
        z, u = self._reference(model, start, mu)
        target = DecoderTarget(outputs, mu, sigma2, s, W, reference=u)
        log_p = target.log_joint(z, u, rows)

        streams = [np.random.default_rng(sq) for sq in child_seeds(seed, 2 * n_chains)]
        n_steps = cfg.burn_in + cfg.samples
        noise = np.stack([streams[i].standard_normal((n_steps, dim)) for i in range(n_chains)])
        log_uniform = np.stack([np.log(streams[i].uniform(size=n_steps)) for i in range(n_chains)])

        prior_sd = np.sqrt(np.asarray(sigma2, dtype=float))
        sd = np.tile(prior_sd, (n_chains, 1))
        log_scale = np.full(n_chains, math.log(2.38 / math.sqrt(dim)))
        burn_stats = _Welford(n_chains, dim, full=False)
        z_stats = _Welford(n_chains, dim)
        delta_stats = _Welford(n_chains, u.shape[1])
        accepted = np.zeros(n_chains)
        rejected_solves = 0

        for t in range(n_steps):
            step = np.exp(log_scale)[:, None] * sd
            proposal = z + step * noise[:, t]
            u_prop = model.solve_batch(proposal)
            finite = np.all(np.isfinite(u_prop), axis=1)
            rejected_solves += int((~finite).sum())
            log_p_prop = np.full(n_chains, -np.inf)
            if np.any(finite):
                log_p_prop[finite] = target.log_joint(proposal[finite], u_prop[finite], rows[finite])
            accept = log_uniform[:, t] < log_p_prop - log_p
            z[accept] = proposal[accept]
            u[accept] = u_prop[accept]
            log_p[accept] = log_p_prop[accept]

            if t < cfg.burn_in:
                log_scale += (t + 1) ** (-cfg.adapt_exponent) * (accept - cfg.target_accept)
                burn_stats.update(z)
                if burn_stats.count >= 20:
                    running = burn_stats.variance()
                    sd = np.where(running > 0.0, np.sqrt(running), prior_sd[None, :])
            else:
                accepted += accept
                z_stats.update(z)
                delta_stats.update(u - target.reference)

        if rejected_solves:
            logger.warning(
                "Rejected proposals whose coarse solve failed",
                extra={"context": {"rejected": rejected_solves, "steps": n_steps * n_chains}},
            )
        accept_rate = accepted / cfg.samples
        outside = (accept_rate < cfg.accept_low) | (accept_rate > cfg.accept_high)
        if np.any(outside):
            logger.warning(
                "MCMC acceptance rate outside the healthy range",
                extra={
                    "context": {
                        "chains": np.flatnonzero(outside).tolist(),
                        "min_rate": float(accept_rate.min()),
                        "max_rate": float(accept_rate.max()),
                    }
                },
            )

        z_cov = z_stats.covariance()
        residual_sq = decoder_residual_moments(target.r0, W, delta_stats.mean, delta_stats.covariance())
        lower_bound, lower_var, log_lik = self._evidence(
            target, model, z_stats.mean, z_cov, np.asarray(sigma2, dtype=float), streams[n_chains:]
        )
        return EStepMoments(
            z_mean=z_stats.mean.copy(),
            z_var=np.diagonal(z_cov, axis1=1, axis2=2).copy(),
            residual_sq=residual_sq,
            accept_rate=accept_rate,
            lower_bound=lower_bound,
            lower_bound_var=lower_var,
            log_likelihood=log_lik,
            step_sizes=np.exp(log_scale)[:, None] * sd,
            rejected_solves=rejected_solves,
            acceptance_warnings=int(outside.sum()),
        )

    def _evidence(
        self,
        target: DecoderTarget,
        model: ForwardModel,
        mean: np.ndarray,
        cov: np.ndarray,
        sigma2: np.ndarray,
        streams: list[np.random.Generator],
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Evidence lower bound with q_i the Gaussian fit of the chain, and the
        importance-sampling log-likelihood estimate from the same weights."""
        n_chains, dim = mean.shape
        k = self.config.n_importance
        jitter = np.maximum(1e-8 * sigma2, 1e-12)
        draws = np.empty((n_chains, k, dim))
        log_q = np.empty((n_chains, k))
        for i in range(n_chains):
            eps = streams[i].standard_normal((k, dim))
            regularized = cov[i] + np.diag(jitter)
            try:
                chol = np.linalg.cholesky(regularized)
            except np.linalg.LinAlgError:
                chol = np.diag(np.sqrt(np.diag(regularized)))
            draws[i] = mean[i] + eps @ chol.T
            log_q[i] = (
                -0.5 * np.sum(eps**2, axis=1) - np.sum(np.log(np.diag(chol))) - 0.5 * dim * LOG_2PI
            )

        flat = draws.reshape(-1, dim)
        rows = np.repeat(np.arange(n_chains), k)
        u_imp = model.solve_batch(flat)
        finite = np.all(np.isfinite(u_imp), axis=1)
        log_p = np.full(flat.shape[0], np.nan)
        if np.any(finite):
            log_p[finite] = target.log_joint(flat[finite], u_imp[finite], rows[finite])
        weights = log_p.reshape(n_chains, k) - log_q

        lower_bound = np.empty(n_chains)
        lower_var = np.empty(n_chains)
        log_lik = np.empty(n_chains)
        for i in range(n_chains):
            w = weights[i][np.isfinite(weights[i])]
            if w.size == 0:
                raise NumericError("Every importance draw failed for a training sample", context={"sample": i})
            lower_bound[i] = float(np.mean(w))
            lower_var[i] = float(np.var(w) / w.size)
            log_lik[i] = float(special.logsumexp(w) - math.log(w.size))
        return lower_bound, lower_var, log_lik


class QuadratureEStep:
    """Exact E-step for a single coarse element on a fixed grid of z values.

    The grid and its trapezoid weights define the latent measure, so the
    reported evidence is the exact log-likelihood of that discretized model.
    """

    def __init__(self, z_min: float = -8.0, z_max: float = 8.0, n_points: int = 2001):
        if not z_max > z_min or n_points < 3:
            raise DomainError("Quadrature grid needs z_max > z_min and at least 3 points")
        self.grid = np.linspace(z_min, z_max, n_points)
        spacing = self.grid[1] - self.grid[0]
        weights = np.full(n_points, spacing)
        weights[[0, -1]] *= 0.5
        self.log_weights = np.log(weights)
        self._cached: tuple[ForwardModel, np.ndarray] | None = None

    def run(
        self,
        outputs: np.ndarray,
        encoder_means: np.ndarray,
        sigma2: np.ndarray,
        s: np.ndarray,
        model: ForwardModel,
        W: sparse.spmatrix,
        chain_start: np.ndarray | None,
        seed: int,
    ) -> EStepMoments:
        mu = np.asarray(encoder_means, dtype=float)
        if mu.shape[1] != 1:
            raise DomainError("Quadrature E-step supports exactly one latent dimension")
        if self._cached is None or self._cached[0] is not model:
            self._cached = (model, model.solve_batch(self.grid[:, None]))
        u_grid = self._cached[1]
        valid = np.all(np.isfinite(u_grid), axis=1)
        grid = self.grid[valid]
        log_w = self.log_weights[valid]
        mean_f = np.asarray((sparse.csr_matrix(W) @ u_grid[valid].T).T)

        var = float(np.asarray(sigma2).reshape(-1)[0])
        s = np.asarray(s, dtype=float)
        n = mu.shape[0]
        z_mean = np.empty((n, 1))
        z_var = np.empty((n, 1))
        residual_sq = np.empty((n, s.size))
        log_lik = np.empty(n)
        for i in range(n):
            log_enc = -0.5 * (LOG_2PI + math.log(var) + (grid - mu[i, 0]) ** 2 / var)
            residual = outputs[i][None, :] - mean_f
            log_dec = -0.5 * np.sum(LOG_2PI + np.log(s)) - 0.5 * np.sum(residual**2 / s, axis=1)
            log_terms = log_enc + log_dec + log_w
            log_lik[i] = float(special.logsumexp(log_terms))
            posterior = np.exp(log_terms - log_lik[i])
            z_mean[i, 0] = float(np.sum(posterior * grid))
            z_var[i, 0] = float(np.sum(posterior * (grid - z_mean[i, 0]) ** 2))
            residual_sq[i] = posterior @ residual**2
        return EStepMoments(
            z_mean=z_mean,
            z_var=z_var,
            residual_sq=residual_sq,
            accept_rate=np.ones(n),
            lower_bound=log_lik.copy(),
            lower_bound_var=np.zeros(n),
            log_likelihood=log_lik,
        )
