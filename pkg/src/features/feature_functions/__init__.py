"""Feature functions of fine-scale sub-grids and the design matrices built from them.

Usage:
    from src.features.feature_functions import FeatureCatalog, build_design_matrix

    catalog = FeatureCatalog.default()
    phi = build_design_matrix(microstructure, MeshSpec(4, 4), catalog).values
"""

from src.features.feature_functions.catalog import (
    FeatureCatalog,
    FeatureEntry,
    FeatureKind,
    FeatureNormalization,
)
from src.features.feature_functions.effective_medium import dem, dem_array, dem_residual, mga, sca
from src.features.feature_functions.morphology import (
    PATH_STATISTICS,
    PHASE_STATISTICS,
    convex_hull_area,
    distance_map,
    label_blobs,
    morphology_features,
    pixel_cross_counts,
)
from src.features.feature_functions.service import (
    DesignMatrix,
    DesignMatrixCache,
    build_design_matrix,
    feature_row,
    fit_normalization,
    normalize,
    partition,
    raw_design_matrix,
    raw_design_stack,
)

__all__ = [
    "FeatureCatalog",
    "FeatureEntry",
    "FeatureKind",
    "FeatureNormalization",
    "dem",
    "dem_array",
    "dem_residual",
    "mga",
    "sca",
    "PATH_STATISTICS",
    "PHASE_STATISTICS",
    "convex_hull_area",
    "distance_map",
    "label_blobs",
    "morphology_features",
    "pixel_cross_counts",
    "DesignMatrix",
    "DesignMatrixCache",
    "build_design_matrix",
    "feature_row",
    "fit_normalization",
    "normalize",
    "partition",
    "raw_design_matrix",
    "raw_design_stack",
]
