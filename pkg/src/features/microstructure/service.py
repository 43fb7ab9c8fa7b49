"""Random binary media from thresholded stationary Gaussian random fields.

Fields live on the cell centers of a regular grid over the unit square and are
stored as ``(ny, nx)`` arrays, so flattening in C order is row-major with y
varying slowest. One conductivity value belongs to each fine finite element.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Any

import numpy as np
from scipy import optimize, special

from src.shared.errors import DomainError, NumericError
from src.shared.logging import get_logger
from src.shared.storage import read_array, write_array
from src.shared.validation import ConfigValidator, RangeValidator

logger = get_logger(__name__)

MIN_PAD_FACTOR = 2
MAX_PAD_FACTOR = 64
EIGENVALUE_CLIP_RATIO = 1e-8
QUANTILE_TOLERANCE = 1e-12
QUANTILE_BRACKET = 40.0


@dataclass(frozen=True)
class GrfSpec:
    grid_nx: int
    grid_ny: int
    length_scale: float

    def __post_init__(self) -> None:
        result = ConfigValidator.collect(
            [
                RangeValidator.positive_int(self.grid_nx, "grid_nx"),
                RangeValidator.positive_int(self.grid_ny, "grid_ny"),
                RangeValidator.positive(self.length_scale, "length_scale"),
            ]
        )
        if not result.is_valid:
            raise DomainError(result.error_message or "Invalid GRF spec")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.grid_ny, self.grid_nx)

    @property
    def cell_spacing(self) -> tuple[float, float]:
        return (1.0 / self.grid_nx, 1.0 / self.grid_ny)

    def covariance(self, distance: np.ndarray | float) -> np.ndarray:
        """Squared-exponential covariance, equal to 1 at zero lag."""
        r = np.asarray(distance, dtype=float)
        return np.exp(-(r**2) / self.length_scale**2)

    def to_dict(self) -> dict[str, Any]:
        return {
            "grid_nx": self.grid_nx,
            "grid_ny": self.grid_ny,
            "length_scale": self.length_scale,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "GrfSpec":
        return cls(
            grid_nx=int(data["grid_nx"]),
            grid_ny=int(data["grid_ny"]),
            length_scale=float(data["length_scale"]),
        )


@dataclass(frozen=True)
class MediumSpec:
    lambda_hi: float
    lambda_lo: float
    phi_hi: float
    contrast_ratio: float = field(init=False)

    def __post_init__(self) -> None:
        result = ConfigValidator.collect(
            [
                RangeValidator.positive(self.lambda_hi, "lambda_hi"),
                RangeValidator.positive(self.lambda_lo, "lambda_lo"),
                RangeValidator.open_unit_interval(self.phi_hi, "phi_hi"),
            ]
        )
        if not result.is_valid:
            raise DomainError(result.error_message or "Invalid medium spec")
        if not self.lambda_hi > self.lambda_lo:
            raise DomainError(
                f"lambda_hi ({self.lambda_hi}) must exceed lambda_lo ({self.lambda_lo})"
            )
        object.__setattr__(self, "contrast_ratio", self.lambda_hi / self.lambda_lo)

    def to_dict(self) -> dict[str, Any]:
        return {
            "lambda_hi": self.lambda_hi,
            "lambda_lo": self.lambda_lo,
            "phi_hi": self.phi_hi,
            "contrast_ratio": self.contrast_ratio,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "MediumSpec":
        if "lambda_hi" not in data and "contrast_ratio" in data:
            lambda_lo = float(data.get("lambda_lo", 1.0))
            return cls(
                lambda_hi=lambda_lo * float(data["contrast_ratio"]),
                lambda_lo=lambda_lo,
                phi_hi=float(data["phi_hi"]),
            )
        return cls(
            lambda_hi=float(data["lambda_hi"]),
            lambda_lo=float(data["lambda_lo"]),
            phi_hi=float(data["phi_hi"]),
        )


@dataclass
class Microstructure:
    cells: np.ndarray
    medium: MediumSpec
    grf: GrfSpec | None = None
    seed: int | None = None

    def __post_init__(self) -> None:
        self.cells = np.asarray(self.cells, dtype=np.float64)
        if self.cells.ndim != 2 or self.cells.size == 0:
            raise DomainError(f"Microstructure cells must be a non-empty 2D grid, got shape {self.cells.shape}")
        valid = (self.cells == self.medium.lambda_hi) | (self.cells == self.medium.lambda_lo)
        if not np.all(valid):
            raise DomainError("Microstructure cells must equal lambda_hi or lambda_lo")

    @property
    def nx(self) -> int:
        return int(self.cells.shape[1])

    @property
    def ny(self) -> int:
        return int(self.cells.shape[0])

    @property
    def high_mask(self) -> np.ndarray:
        return self.cells == self.medium.lambda_hi

    @property
    def flat(self) -> np.ndarray:
        return self.cells.reshape(-1)

    def volume_fraction(self) -> float:
        return float(np.mean(self.high_mask))


def threshold_level(phi_hi: float) -> float:
    """Gaussian cutoff c with P(xi > c) = phi_hi for a standard normal xi."""
    result = RangeValidator.open_unit_interval(phi_hi, "phi_hi")
    if not result.is_valid:
        raise DomainError(result.error_message or "phi_hi out of range")
    target = 1.0 - float(phi_hi)
    return float(
        optimize.bisect(
            lambda c: special.ndtr(c) - target,
            -QUANTILE_BRACKET,
            QUANTILE_BRACKET,
            xtol=QUANTILE_TOLERANCE,
            maxiter=500,
        )
    )


@lru_cache(maxsize=32)
def _embedding_spectrum(nx: int, ny: int, length_scale: float) -> np.ndarray:
    """Square roots of the normalized eigenvalues of the periodic covariance embedding."""
    pad = MIN_PAD_FACTOR
    while pad <= MAX_PAD_FACTOR:
        mx, my = pad * nx, pad * ny
        kx = np.arange(mx)
        ky = np.arange(my)
        dx = np.minimum(kx, mx - kx) / nx
        dy = np.minimum(ky, my - ky) / ny
        r2 = dy[:, None] ** 2 + dx[None, :] ** 2
        base = np.exp(-r2 / length_scale**2)
        eigenvalues = np.real(np.fft.fft2(base))
        lam_max = float(eigenvalues.max())
        lam_min = float(eigenvalues.min())
        if lam_min >= 0.0 or -lam_min < EIGENVALUE_CLIP_RATIO * lam_max:
            eigenvalues = np.clip(eigenvalues, 0.0, None)
            logger.debug(
                "Circulant embedding ready",
                extra={"context": {"nx": nx, "ny": ny, "pad": pad, "min_eigenvalue": lam_min}},
            )
            return np.sqrt(eigenvalues / (mx * my))
        logger.debug(
            "Embedding not positive semidefinite, enlarging padding",
            extra={"context": {"pad": pad, "min_eigenvalue": lam_min, "max_eigenvalue": lam_max}},
        )
        pad *= 2
    raise NumericError(
        f"Circulant embedding stayed indefinite up to pad factor {MAX_PAD_FACTOR} "
        f"for length scale {length_scale}",
        context={"nx": nx, "ny": ny, "length_scale": length_scale},
    )


def sample_grf(spec: GrfSpec, seed: int) -> np.ndarray:
    """One zero-mean, unit-variance field on the cell centers, shape ``(ny, nx)``."""
    sqrt_spectrum = _embedding_spectrum(spec.grid_nx, spec.grid_ny, float(spec.length_scale))
    rng = np.random.default_rng(seed)
    noise = rng.standard_normal(sqrt_spectrum.shape) + 1j * rng.standard_normal(sqrt_spectrum.shape)
    periodic = np.fft.fft2(sqrt_spectrum * noise)
    return np.ascontiguousarray(periodic.real[: spec.grid_ny, : spec.grid_nx])


def threshold_field(
    field: np.ndarray,
    medium: MediumSpec,
    grf: GrfSpec | None = None,
    seed: int | None = None,
) -> Microstructure:
    values = np.asarray(field, dtype=float)
    if grf is not None and values.shape != grf.shape:
        raise DomainError(f"Field shape {values.shape} does not match grid {grf.shape}")
    cutoff = threshold_level(medium.phi_hi)
    cells = np.where(values > cutoff, medium.lambda_hi, medium.lambda_lo)
    return Microstructure(cells=cells, medium=medium, grf=grf, seed=seed)


def sample_microstructure(grf: GrfSpec, medium: MediumSpec, seed: int) -> Microstructure:
    return threshold_field(sample_grf(grf, seed), medium, grf=grf, seed=seed)


def save_microstructure(stem: Path, microstructure: Microstructure) -> tuple[Path, Path]:
    metadata = {
        "nx": microstructure.nx,
        "ny": microstructure.ny,
        "lambda_hi": microstructure.medium.lambda_hi,
        "lambda_lo": microstructure.medium.lambda_lo,
        "phi_hi": microstructure.medium.phi_hi,
        "l": microstructure.grf.length_scale if microstructure.grf else None,
        "seed": microstructure.seed,
    }
    return write_array(stem, microstructure.cells, metadata)


def load_microstructure(stem: Path) -> Microstructure:
    values, sidecar = read_array(stem)
    medium = MediumSpec(
        lambda_hi=float(sidecar["lambda_hi"]),
        lambda_lo=float(sidecar["lambda_lo"]),
        phi_hi=float(sidecar["phi_hi"]),
    )
    nx, ny = int(sidecar["nx"]), int(sidecar["ny"])
    grf = GrfSpec(nx, ny, float(sidecar["l"])) if sidecar.get("l") is not None else None
    return Microstructure(
        cells=values.reshape(ny, nx),
        medium=medium,
        grf=grf,
        seed=sidecar.get("seed"),
    )
