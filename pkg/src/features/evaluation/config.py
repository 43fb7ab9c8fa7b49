"""Experiment configuration: one JSON document drives generate, train, evaluate and sweep."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

from src.features.feature_functions import FeatureCatalog
from src.features.fem import BoundarySpec, LinearSolverConfig, MeshSpec
from src.features.microstructure import GrfSpec, MediumSpec
from src.features.training import EmConfig
from src.shared.errors import ConfigError
from src.shared.logging import get_logger
from src.shared.storage import read_json, write_json
from src.shared.validation import ConfigValidator, MeshValidator, RangeValidator, ValidationResult
from src.shared.workers import indexed_seed

logger = get_logger(__name__)

CONFIG_VERSION = 1
SPLITS = ("train", "test", "reference")
COVERAGE_MODES = ("gaussian", "empirical")


@dataclass(frozen=True)
class ExperimentConfig:
    medium: MediumSpec = field(default_factory=lambda: MediumSpec(lambda_hi=10.0, lambda_lo=1.0, phi_hi=0.2))
    length_scale: float = 0.0781
    fine_mesh: MeshSpec = field(default_factory=lambda: MeshSpec(64, 64))
    coarse_mesh: MeshSpec = field(default_factory=lambda: MeshSpec(4, 4))
    boundary: BoundarySpec = field(default_factory=BoundarySpec)
    solver: LinearSolverConfig = field(default_factory=LinearSolverConfig)
    n_train: int = 64
    n_test: int = 64
    n_reference: int = 256
    n_pred_samples: int = 10_000
    coverage_mode: str = "gaussian"
    catalog_path: str | None = None
    em: EmConfig = field(default_factory=EmConfig)
    seed: int = 0
    split_seeds: dict[str, int] = field(default_factory=dict)
    sweep_n_train: tuple[int, ...] = (8, 16, 32, 64)
    sweep_coarse: tuple[MeshSpec, ...] = (MeshSpec(2, 2), MeshSpec(4, 4))

    @property
    def grf(self) -> GrfSpec:
        return GrfSpec(self.fine_mesh.nel_x, self.fine_mesh.nel_y, self.length_scale)

    def count(self, split: str) -> int:
        return {"train": self.n_train, "test": self.n_test, "reference": self.n_reference}[split]

    def split_seed(self, split: str) -> int:
        if split not in SPLITS:
            raise ConfigError(f"Unknown split {split!r}; expected one of {SPLITS}")
        if split in self.split_seeds:
            return int(self.split_seeds[split])
        return indexed_seed(self.seed, SPLITS.index(split))

    def with_seed(self, seed: int | None) -> "ExperimentConfig":
        return self if seed is None else replace(self, seed=int(seed), em=replace(self.em, seed=int(seed)))

    def catalog(self) -> FeatureCatalog:
        if self.catalog_path is None:
            return FeatureCatalog.default()
        return FeatureCatalog.load(Path(self.catalog_path))

    def validate(self) -> ValidationResult:
        results = [
            RangeValidator.positive(self.length_scale, "length_scale"),
            RangeValidator.positive_int(self.n_train, "n_train"),
            RangeValidator.positive_int(self.n_test, "n_test"),
            RangeValidator.positive_int(self.n_reference, "n_reference"),
            RangeValidator.positive_int(self.n_pred_samples, "n_pred_samples"),
        ]
        for coarse in (self.coarse_mesh, *self.sweep_coarse):
            results.append(
                MeshValidator.nested(
                    (coarse.nel_x, coarse.nel_y), (self.fine_mesh.nel_x, self.fine_mesh.nel_y)
                )
            )
        results.extend(RangeValidator.positive_int(n, "sweep_n_train") for n in self.sweep_n_train)
        if self.coverage_mode not in COVERAGE_MODES:
            results.append(ValidationResult(False, f"coverage_mode must be one of {COVERAGE_MODES}"))
        if self.catalog_path is not None and not Path(self.catalog_path).is_file():
            results.append(ValidationResult(False, f"Catalog file not found: {self.catalog_path}"))
        return ConfigValidator.collect(results)

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": CONFIG_VERSION,
            "medium": self.medium.to_dict(),
            "length_scale": self.length_scale,
            "fine_mesh": self.fine_mesh.to_dict(),
            "coarse_mesh": self.coarse_mesh.to_dict(),
            "boundary": self.boundary.to_dict(),
            "solver": self.solver.to_dict(),
            "n_train": self.n_train,
            "n_test": self.n_test,
            "n_reference": self.n_reference,
            "n_pred_samples": self.n_pred_samples,
            "coverage_mode": self.coverage_mode,
            "catalog_path": self.catalog_path,
            "em": self.em.to_dict(),
            "seed": self.seed,
            "split_seeds": dict(self.split_seeds),
            "sweep": {
                "n_train": list(self.sweep_n_train),
                "coarse_meshes": [m.to_dict() for m in self.sweep_coarse],
            },
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any], base_dir: Path | None = None) -> "ExperimentConfig":
        version = int(data.get("version", CONFIG_VERSION))
        if version != CONFIG_VERSION:
            raise ConfigError(f"Unsupported config version {version}")
        defaults = cls()
        catalog_path = data.get("catalog_path")
        if catalog_path is not None and base_dir is not None and not Path(catalog_path).is_absolute():
            catalog_path = str(base_dir / catalog_path)
        sweep = data.get("sweep", {})
        try:
            config = cls(
                medium=MediumSpec.from_dict(data["medium"]) if "medium" in data else defaults.medium,
                length_scale=float(data.get("length_scale", defaults.length_scale)),
                fine_mesh=MeshSpec.from_dict(data["fine_mesh"]) if "fine_mesh" in data else defaults.fine_mesh,
                coarse_mesh=MeshSpec.from_dict(data["coarse_mesh"]) if "coarse_mesh" in data else defaults.coarse_mesh,
                boundary=BoundarySpec.from_dict(data.get("boundary", {})),
                solver=LinearSolverConfig.from_dict(data.get("solver", {})),
                n_train=int(data.get("n_train", defaults.n_train)),
                n_test=int(data.get("n_test", defaults.n_test)),
                n_reference=int(data.get("n_reference", defaults.n_reference)),
                n_pred_samples=int(data.get("n_pred_samples", defaults.n_pred_samples)),
                coverage_mode=str(data.get("coverage_mode", defaults.coverage_mode)),
                catalog_path=catalog_path,
                em=EmConfig.from_dict(data.get("em", {})),
                seed=int(data.get("seed", defaults.seed)),
                split_seeds={str(k): int(v) for k, v in data.get("split_seeds", {}).items()},
                sweep_n_train=tuple(int(n) for n in sweep.get("n_train", defaults.sweep_n_train)),
                sweep_coarse=tuple(
                    MeshSpec.from_dict(m) for m in sweep.get("coarse_meshes", [])
                )
                or defaults.sweep_coarse,
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(f"Malformed experiment config: {e}", original_error=e) from e
        return config

    @classmethod
    def load(cls, path: Path) -> "ExperimentConfig":
        path = Path(path)
        config = cls.from_dict(read_json(path), base_dir=path.parent)
        result = config.validate()
        if not result.is_valid:
            raise ConfigError(result.error_message or f"Invalid config {path}")
        logger.info("Experiment config loaded", extra={"context": {"path": str(path)}})
        return config

    def save(self, path: Path) -> None:
        write_json(path, self.to_dict())
