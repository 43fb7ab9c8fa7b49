"""Random binary microstructures (the fine-scale input of the surrogate).

Usage:
    from src.features.microstructure import GrfSpec, MediumSpec, sample_microstructure
"""

from src.features.microstructure.service import (
    GrfSpec,
    MediumSpec,
    Microstructure,
    load_microstructure,
    sample_grf,
    sample_microstructure,
    save_microstructure,
    threshold_field,
    threshold_level,
)

__all__ = [
    "GrfSpec",
    "MediumSpec",
    "Microstructure",
    "load_microstructure",
    "sample_grf",
    "sample_microstructure",
    "save_microstructure",
    "threshold_field",
    "threshold_level",
]
