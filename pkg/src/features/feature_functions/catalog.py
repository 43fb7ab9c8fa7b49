"""Ordered feature catalogs and their training-set standardization."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from src.features.feature_functions.effective_medium import EFFECTIVE_MEDIUM_FORMULAS
from src.features.feature_functions.morphology import (
    DISTANCE_METRICS,
    PATH_STATISTICS,
    PHASE_STATISTICS,
    PHASES,
)
from src.shared.errors import ConfigError
from src.shared.logging import get_logger
from src.shared.storage import read_json, stable_hash, write_json

logger = get_logger(__name__)

CATALOG_VERSION = 1
CONSTANT_NAME = "constant"


class FeatureKind(Enum):
    CONSTANT = "constant"
    EFFECTIVE_MEDIUM = "effective_medium"
    MORPHOLOGICAL = "morphological"
    EXTERNAL = "external"


@dataclass(frozen=True)
class FeatureEntry:
    name: str
    kind: FeatureKind
    params: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if self.kind == FeatureKind.EFFECTIVE_MEDIUM:
            formula = self.params.get("formula")
            if formula not in EFFECTIVE_MEDIUM_FORMULAS:
                raise ConfigError(f"Feature {self.name!r}: unknown formula {formula!r}")
            if self.params.get("matrix", "auto") not in ("auto", "low", "high"):
                raise ConfigError(f"Feature {self.name!r}: matrix must be auto, low or high")
        elif self.kind == FeatureKind.MORPHOLOGICAL:
            statistic = self.params.get("statistic")
            phase = self.params.get("phase")
            if phase is None:
                if statistic not in PATH_STATISTICS:
                    raise ConfigError(f"Feature {self.name!r}: unknown statistic {statistic!r}")
            else:
                if phase not in PHASES:
                    raise ConfigError(f"Feature {self.name!r}: unknown phase {phase!r}")
                if statistic not in PHASE_STATISTICS:
                    raise ConfigError(f"Feature {self.name!r}: unknown statistic {statistic!r}")
            if self.params.get("metric", "euclidean") not in DISTANCE_METRICS:
                raise ConfigError(f"Feature {self.name!r}: unknown distance metric")

    @property
    def morphology_key(self) -> str:
        phase = self.params.get("phase")
        statistic = self.params["statistic"]
        return f"{phase}.{statistic}" if phase else statistic

    def to_dict(self) -> dict[str, Any]:
        return {"name": self.name, "kind": self.kind.value, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FeatureEntry":
        try:
            kind = FeatureKind(data["kind"])
        except (KeyError, ValueError) as e:
            raise ConfigError(f"Invalid feature kind in {data!r}", original_error=e) from e
        return cls(name=str(data["name"]), kind=kind, params=dict(data.get("params", {})))


@dataclass
class FeatureNormalization:
    """Per-column affine map ``(raw - shift) / scale``; constant columns map to themselves."""

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self) -> None:
        self.shift = np.asarray(self.shift, dtype=float)
        self.scale = np.asarray(self.scale, dtype=float)
        if np.any(self.scale <= 0) or not np.all(np.isfinite(self.scale)):
            raise ConfigError("Normalization scales must be finite and positive")

    @classmethod
    def fit(cls, raw_rows: np.ndarray, constant_columns: np.ndarray | None = None) -> "FeatureNormalization":
        rows = np.asarray(raw_rows, dtype=float).reshape(-1, np.shape(raw_rows)[-1])
        shift = rows.mean(axis=0)
        scale = rows.std(axis=0, ddof=0)
        degenerate = scale <= 0
        if np.any(degenerate):
            logger.info(
                "Constant feature columns keep unit scale",
                extra={"context": {"columns": np.flatnonzero(degenerate).tolist()}},
            )
        scale = np.where(degenerate, 1.0, scale)
        exempt = np.zeros(rows.shape[1], dtype=bool)
        if constant_columns is not None:
            exempt[np.asarray(constant_columns, dtype=np.int64)] = True
        shift = np.where(exempt, 0.0, shift)
        scale = np.where(exempt, 1.0, scale)
        return cls(shift=shift, scale=scale)

    @classmethod
    def identity(cls, n_features: int) -> "FeatureNormalization":
        return cls(shift=np.zeros(n_features), scale=np.ones(n_features))

    def apply(self, raw: np.ndarray) -> np.ndarray:
        return (np.asarray(raw, dtype=float) - self.shift) / self.scale

    def to_dict(self) -> dict[str, Any]:
        return {"shift": self.shift.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "FeatureNormalization":
        return cls(shift=np.array(data["shift"], dtype=float), scale=np.array(data["scale"], dtype=float))


@dataclass
class FeatureCatalog:
    entries: list[FeatureEntry]
    normalization: FeatureNormalization | None = None

    def __post_init__(self) -> None:
        if not self.entries or self.entries[0].kind != FeatureKind.CONSTANT:
            self.entries = [FeatureEntry(CONSTANT_NAME, FeatureKind.CONSTANT)] + [
                e for e in self.entries if e.kind != FeatureKind.CONSTANT
            ]
        names = [e.name for e in self.entries]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise ConfigError(f"Feature names must be unique; duplicated: {duplicates}")
        for entry in self.entries:
            entry.validate()
        if self.normalization is not None and self.normalization.shift.size != len(self.entries):
            raise ConfigError(
                f"Normalization covers {self.normalization.shift.size} columns, catalog has {len(self.entries)}"
            )

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    @property
    def constant_columns(self) -> np.ndarray:
        return np.array([i for i, e in enumerate(self.entries) if e.kind == FeatureKind.CONSTANT], dtype=np.int64)

    def index(self, name: str) -> int:
        return self.names.index(name)

    def catalog_hash(self) -> str:
        return stable_hash([e.to_dict() for e in self.entries])

    def with_normalization(self, normalization: FeatureNormalization | None) -> "FeatureCatalog":
        return FeatureCatalog(entries=list(self.entries), normalization=normalization)

    def subset(self, names: list[str]) -> "FeatureCatalog":
        wanted = set(names)
        return FeatureCatalog(entries=[e for e in self.entries if e.name in wanted])

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "version": CATALOG_VERSION,
            "entries": [e.to_dict() for e in self.entries],
        }
        if self.normalization is not None:
            data["normalization"] = self.normalization.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any] | list[dict[str, Any]]) -> "FeatureCatalog":
        if isinstance(data, list):
            return cls(entries=[FeatureEntry.from_dict(e) for e in data])
        normalization = data.get("normalization")
        return cls(
            entries=[FeatureEntry.from_dict(e) for e in data["entries"]],
            normalization=FeatureNormalization.from_dict(normalization) if normalization else None,
        )

    def save(self, path: Path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path: Path) -> "FeatureCatalog":
        return cls.from_dict(read_json(path))

    @classmethod
    def default(cls) -> "FeatureCatalog":
        entries = [FeatureEntry(CONSTANT_NAME, FeatureKind.CONSTANT)]
        for formula in ("mga", "dem"):
            for matrix in ("auto", "low", "high"):
                suffix = "" if matrix == "auto" else f"_{matrix}_matrix"
                entries.append(
                    FeatureEntry(
                        f"log_{formula}{suffix}",
                        FeatureKind.EFFECTIVE_MEDIUM,
                        {"formula": formula, "matrix": matrix},
                    )
                )
        entries.append(FeatureEntry("log_sca", FeatureKind.EFFECTIVE_MEDIUM, {"formula": "sca"}))
        for phase in PHASES:
            for statistic in DEFAULT_PHASE_STATISTICS:
                entries.append(
                    FeatureEntry(
                        f"{phase}_{statistic}",
                        FeatureKind.MORPHOLOGICAL,
                        {"statistic": statistic, "phase": phase, "metric": "euclidean"},
                    )
                )
        for statistic in PATH_STATISTICS:
            entries.append(FeatureEntry(statistic, FeatureKind.MORPHOLOGICAL, {"statistic": statistic}))
        return cls(entries=entries)


DEFAULT_PHASE_STATISTICS = (
    "convex_area_max",
    "convex_area_mean",
    "blob_area_max",
    "blob_count",
    "extent_x_max",
    "extent_y_max",
    "distance_mean",
    "distance_max",
    "pixel_cross_x_max",
    "pixel_cross_y_max",
)
