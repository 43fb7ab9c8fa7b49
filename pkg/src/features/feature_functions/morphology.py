"""Morphological descriptors of binary sub-grids.

Blobs are 8-connected same-phase pixel sets. Areas, extents and distances are in
pixel units; a convex hull is taken over the corner points of member pixels, so
a single pixel has hull area 1. Statistics of a phase that does not occur in
the sub-grid are 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage

from src.shared.errors import DomainError

PHASES = ("high", "low")
DISTANCE_METRICS = ("euclidean", "chessboard", "taxicab")

PHASE_STATISTICS = (
    "convex_area_max",
    "convex_area_mean",
    "blob_area_max",
    "blob_area_min",
    "blob_area_mean",
    "blob_area_var",
    "blob_count",
    "extent_x_max",
    "extent_x_mean",
    "extent_y_max",
    "extent_y_mean",
    "distance_mean",
    "distance_max",
    "pixel_cross_x_mean",
    "pixel_cross_x_max",
    "pixel_cross_x_min",
    "pixel_cross_y_mean",
    "pixel_cross_y_max",
    "pixel_cross_y_min",
)

PATH_MEANS = ("harmonic", "geometric", "arithmetic")
PATH_STATISTICS = tuple(
    f"log_{kind}_mean_{axis}_{stat}" for kind in PATH_MEANS for axis in ("x", "y") for stat in ("max", "mean")
)


@dataclass
class BlobTable:
    """Per-blob measurements of one phase, in label order."""

    labels: np.ndarray
    areas: np.ndarray
    extent_x: np.ndarray
    extent_y: np.ndarray
    convex_areas: np.ndarray

    @property
    def count(self) -> int:
        return int(self.areas.size)


def _as_mask(mask: np.ndarray) -> np.ndarray:
    values = np.asarray(mask)
    if values.ndim != 2 or values.size == 0:
        raise DomainError(f"Expected a non-empty 2D binary grid, got shape {values.shape}")
    return values.astype(bool)


def convex_hull_area(rows: np.ndarray, cols: np.ndarray) -> float:
    """Area of the convex hull of the corner points of the given pixels."""
    corners = np.concatenate(
        [
            np.stack([cols, rows], axis=1),
            np.stack([cols + 1, rows], axis=1),
            np.stack([cols, rows + 1], axis=1),
            np.stack([cols + 1, rows + 1], axis=1),
        ]
    ).astype(np.float32)
    hull = cv2.convexHull(corners)
    return float(cv2.contourArea(hull))


def label_blobs(mask: np.ndarray) -> BlobTable:
    binary = _as_mask(mask).astype(np.uint8)
    n_labels, labels, stats, _ = cv2.connectedComponentsWithStats(binary, connectivity=8, ltype=cv2.CV_32S)
    # label 0 is the background
    blob_stats = stats[1:n_labels]
    convex = np.zeros(n_labels - 1)
    for k in range(1, n_labels):
        rows, cols = np.nonzero(labels == k)
        convex[k - 1] = convex_hull_area(rows, cols)
    return BlobTable(
        labels=labels,
        areas=blob_stats[:, cv2.CC_STAT_AREA].astype(float),
        extent_x=blob_stats[:, cv2.CC_STAT_WIDTH].astype(float),
        extent_y=blob_stats[:, cv2.CC_STAT_HEIGHT].astype(float),
        convex_areas=convex,
    )


def distance_map(mask: np.ndarray, metric: str = "euclidean") -> np.ndarray:
    """Distance from every pixel to the nearest pixel set in ``mask``."""
    binary = _as_mask(mask)
    if not binary.any():
        return np.zeros(binary.shape)
    if metric == "euclidean":
        return ndimage.distance_transform_edt(~binary)
    if metric in ("chessboard", "taxicab"):
        return ndimage.distance_transform_cdt(~binary, metric=metric).astype(float)
    raise DomainError(f"Unknown distance metric {metric!r}; expected one of {DISTANCE_METRICS}")


def pixel_cross_counts(mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Phase pixels crossed by each straight line along x (rows) and along y (columns)."""
    binary = _as_mask(mask)
    return binary.sum(axis=1).astype(float), binary.sum(axis=0).astype(float)


def log_path_means(cells: np.ndarray, axis: int) -> dict[str, np.ndarray]:
    """Log harmonic, geometric and arithmetic conductivity means of each line.

    ``axis=1`` averages along x (one value per row), ``axis=0`` along y.
    """
    values = np.asarray(cells, dtype=float)
    n = values.shape[axis]
    return {
        "harmonic": np.log(n) - np.log(np.sum(1.0 / values, axis=axis)),
        "geometric": np.mean(np.log(values), axis=axis),
        "arithmetic": np.log(np.mean(values, axis=axis)),
    }


def _stat(values: np.ndarray, how: str) -> float:
    if values.size == 0:
        return 0.0
    return float(getattr(np, how)(values))


def phase_features(mask: np.ndarray, metric: str = "euclidean") -> dict[str, float]:
    blobs = label_blobs(mask)
    distances = distance_map(mask, metric)
    cross_x, cross_y = pixel_cross_counts(mask)
    return {
        "convex_area_max": _stat(blobs.convex_areas, "max"),
        "convex_area_mean": _stat(blobs.convex_areas, "mean"),
        "blob_area_max": _stat(blobs.areas, "max"),
        "blob_area_min": _stat(blobs.areas, "min"),
        "blob_area_mean": _stat(blobs.areas, "mean"),
        "blob_area_var": _stat(blobs.areas, "var"),
        "blob_count": float(blobs.count),
        "extent_x_max": _stat(blobs.extent_x, "max"),
        "extent_x_mean": _stat(blobs.extent_x, "mean"),
        "extent_y_max": _stat(blobs.extent_y, "max"),
        "extent_y_mean": _stat(blobs.extent_y, "mean"),
        "distance_mean": float(distances.mean()),
        "distance_max": float(distances.max()),
        "pixel_cross_x_mean": _stat(cross_x, "mean"),
        "pixel_cross_x_max": _stat(cross_x, "max"),
        "pixel_cross_x_min": _stat(cross_x, "min"),
        "pixel_cross_y_mean": _stat(cross_y, "mean"),
        "pixel_cross_y_max": _stat(cross_y, "max"),
        "pixel_cross_y_min": _stat(cross_y, "min"),
    }


def morphology_features(
    cells: np.ndarray, lambda_hi: float, metric: str = "euclidean"
) -> dict[str, float]:
    """All morphological statistics of a two-phase conductivity sub-grid.

    Phase statistics are keyed ``"<phase>.<statistic>"``; straight-path means
    are keyed by statistic alone, e.g. ``log_geometric_mean_y_max``.
    """
    values = np.asarray(cells, dtype=float)
    high = _as_mask(values == lambda_hi)
    features: dict[str, float] = {}
    for phase, mask in (("high", high), ("low", ~high)):
        for name, value in phase_features(mask, metric).items():
            features[f"{phase}.{name}"] = value
    for axis_name, axis in (("x", 1), ("y", 0)):
        for kind, line_values in log_path_means(values, axis).items():
            features[f"log_{kind}_mean_{axis_name}_max"] = float(np.max(line_values))
            features[f"log_{kind}_mean_{axis_name}_mean"] = float(np.mean(line_values))
    return features
