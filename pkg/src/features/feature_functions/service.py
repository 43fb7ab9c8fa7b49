"""Design matrices: feature functions evaluated on the fine cells of each coarse element."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from src.features.feature_functions.catalog import FeatureCatalog, FeatureKind, FeatureNormalization
from src.features.feature_functions.effective_medium import effective_conductivity
from src.features.feature_functions.morphology import morphology_features
from src.features.fem import MeshSpec
from src.features.microstructure import MediumSpec, Microstructure
from src.shared.errors import ConfigError, DataError, DomainError
from src.shared.logging import get_logger
from src.shared.storage import array_paths, read_array, write_array
from src.shared.validation import MeshValidator
from src.shared.workers import parallel_map

logger = get_logger(__name__)


@dataclass
class DesignMatrix:
    values: np.ndarray
    catalog: FeatureCatalog
    normalized: bool = True

    @property
    def n_elements(self) -> int:
        return int(self.values.shape[0])


def partition(fine_grid: Microstructure | np.ndarray, coarse: MeshSpec) -> list[np.ndarray]:
    """Split the cell grid into one block per coarse element, in coarse element order."""
    cells = fine_grid.cells if isinstance(fine_grid, Microstructure) else np.asarray(fine_grid)
    ny, nx = cells.shape
    nested = MeshValidator.nested((coarse.nel_x, coarse.nel_y), (nx, ny))
    if not nested.is_valid:
        raise DomainError(nested.error_message or "Grid is not divisible by the coarse mesh")
    rx, ry = nested.normalized_value
    blocks = cells.reshape(coarse.nel_y, ry, coarse.nel_x, rx).transpose(0, 2, 1, 3)
    return [np.ascontiguousarray(block) for block in blocks.reshape(-1, ry, rx)]


def feature_row(cells: np.ndarray, medium: MediumSpec, catalog: FeatureCatalog) -> np.ndarray:
    """Raw (unnormalized) feature values of one sub-grid in catalog order."""
    phi_hi = float(np.mean(cells == medium.lambda_hi))
    morphology: dict[str, dict[str, float]] = {}
    row = np.empty(len(catalog))
    for j, entry in enumerate(catalog.entries):
        if entry.kind == FeatureKind.CONSTANT:
            row[j] = 1.0
        elif entry.kind == FeatureKind.EFFECTIVE_MEDIUM:
            value = effective_conductivity(
                entry.params["formula"],
                medium.lambda_hi,
                medium.lambda_lo,
                phi_hi,
                entry.params.get("matrix", "auto"),
            )
            row[j] = np.log(value)
        elif entry.kind == FeatureKind.EXTERNAL:
            raise ConfigError(f"Feature {entry.name!r} holds precomputed values and cannot be evaluated")
        else:
            metric = entry.params.get("metric", "euclidean")
            if metric not in morphology:
                morphology[metric] = morphology_features(cells, medium.lambda_hi, metric)
            row[j] = morphology[metric][entry.morphology_key]
    return row


def raw_design_matrix(fine_grid: Microstructure, coarse: MeshSpec, catalog: FeatureCatalog) -> np.ndarray:
    rows = [feature_row(block, fine_grid.medium, catalog) for block in partition(fine_grid, coarse)]
    return np.vstack(rows)


def _check_finite(values: np.ndarray, catalog: FeatureCatalog) -> None:
    bad = ~np.isfinite(values)
    if np.any(bad):
        element, column = (int(i) for i in np.argwhere(bad)[0])
        raise DataError(
            f"Feature {catalog.names[column]!r} is non-finite on coarse element {element}",
            context={"feature": catalog.names[column], "element": element},
        )


def normalize(raw: np.ndarray, catalog: FeatureCatalog) -> np.ndarray:
    if catalog.normalization is None:
        return np.asarray(raw, dtype=float)
    return catalog.normalization.apply(raw)


def build_design_matrix(fine_grid: Microstructure, coarse: MeshSpec, catalog: FeatureCatalog) -> DesignMatrix:
    raw = raw_design_matrix(fine_grid, coarse, catalog)
    _check_finite(raw, catalog)
    values = normalize(raw, catalog)
    _check_finite(values, catalog)
    return DesignMatrix(values=values, catalog=catalog, normalized=catalog.normalization is not None)


def raw_design_stack(
    microstructures: Sequence[Microstructure],
    coarse: MeshSpec,
    catalog: FeatureCatalog,
    threads: int = 1,
) -> np.ndarray:
    """Raw design matrices of many samples, shape ``(N, n_elements, n_features)``."""
    matrices = parallel_map(lambda ms: raw_design_matrix(ms, coarse, catalog), microstructures, threads)
    stack = np.stack(matrices)
    for i, matrix in enumerate(stack):
        try:
            _check_finite(matrix, catalog)
        except DataError as e:
            e.context["sample"] = i
            raise
    return stack


def fit_normalization(raw_stack: np.ndarray, catalog: FeatureCatalog) -> FeatureCatalog:
    """Standardize every non-constant column over all rows of the training stack."""
    normalization = FeatureNormalization.fit(
        np.asarray(raw_stack).reshape(-1, len(catalog)), catalog.constant_columns
    )
    return catalog.with_normalization(normalization)


class DesignMatrixCache:
    """On-disk cache of raw design stacks keyed by (dataset hash, catalog hash)."""

    def __init__(self, directory: Path):
        self.directory = Path(directory)

    def stem(self, dataset_hash: str, catalog: FeatureCatalog) -> Path:
        return self.directory / f"design_{dataset_hash[:16]}_{catalog.catalog_hash()[:16]}"

    def get_or_compute(
        self,
        dataset_hash: str,
        catalog: FeatureCatalog,
        compute: Callable[[], np.ndarray],
    ) -> np.ndarray:
        stem = self.stem(dataset_hash, catalog)
        bin_path, _ = array_paths(stem)
        if bin_path.exists():
            values, sidecar = read_array(stem)
            if sidecar.get("catalog_hash") == catalog.catalog_hash():
                logger.debug("Design matrix cache hit", extra={"context": {"stem": str(stem)}})
                return values
        values = compute()
        write_array(
            stem,
            values,
            {"dataset_hash": dataset_hash, "catalog_hash": catalog.catalog_hash(), "features": catalog.names},
        )
        return values
