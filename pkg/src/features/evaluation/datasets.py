"""Fine-scale datasets on disk: microstructures, FEM solutions and a hashed manifest.

Layout of one split directory::

    <root>/<split>/manifest.json
    <root>/<split>/sample_0000.lambda.bin + .json
    <root>/<split>/sample_0000.u.bin + .json
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from src.features.evaluation.config import SPLITS, ExperimentConfig
from src.features.fem import FemSolution, load_solution, save_solution, solve_fine
from src.features.microstructure import (
    Microstructure,
    load_microstructure,
    sample_microstructure,
    save_microstructure,
)
from src.shared.errors import ConfigError, NumericError, StorageError
from src.shared.logging import get_logger
from src.shared.storage import array_paths, file_sha256, read_json, write_json
from src.shared.workers import indexed_seed, parallel_map

logger = get_logger(__name__)

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"


def sample_stem(split_dir: Path, index: int, kind: str) -> Path:
    return Path(split_dir) / f"sample_{index:04d}.{kind}"


@dataclass
class SampleRecord:
    index: int
    seed: int
    lambda_sha256: str = ""
    u_sha256: str = ""
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {"index": self.index, "seed": self.seed}
        if self.ok:
            data.update({"lambda_sha256": self.lambda_sha256, "u_sha256": self.u_sha256})
        else:
            data["error"] = self.error
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "SampleRecord":
        return cls(
            index=int(data["index"]),
            seed=int(data["seed"]),
            lambda_sha256=str(data.get("lambda_sha256", "")),
            u_sha256=str(data.get("u_sha256", "")),
            error=data.get("error"),
        )


@dataclass
class DatasetManifest:
    split: str
    split_seed: int
    count: int
    config: dict[str, Any]
    samples: list[SampleRecord] = field(default_factory=list)

    @property
    def completed(self) -> list[SampleRecord]:
        return [s for s in self.samples if s.ok]

    @property
    def failed(self) -> list[SampleRecord]:
        return [s for s in self.samples if not s.ok]

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": MANIFEST_VERSION,
            "split": self.split,
            "split_seed": self.split_seed,
            "count": self.count,
            "config": self.config,
            "samples": [s.to_dict() for s in self.samples],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "DatasetManifest":
        if int(data.get("version", MANIFEST_VERSION)) != MANIFEST_VERSION:
            raise ConfigError(f"Unsupported manifest version {data.get('version')}")
        return cls(
            split=str(data["split"]),
            split_seed=int(data["split_seed"]),
            count=int(data["count"]),
            config=dict(data.get("config", {})),
            samples=[SampleRecord.from_dict(s) for s in data.get("samples", [])],
        )


@dataclass
class SplitData:
    microstructures: list[Microstructure]
    solutions: list[FemSolution]
    manifest: DatasetManifest

    def __len__(self) -> int:
        return len(self.microstructures)


def _generation_config(config: ExperimentConfig) -> dict[str, Any]:
    return {
        "medium": config.medium.to_dict(),
        "length_scale": config.length_scale,
        "fine_mesh": config.fine_mesh.to_dict(),
        "boundary": config.boundary.to_dict(),
        "solver": config.solver.to_dict(),
    }


def generate_data(
    config: ExperimentConfig,
    split: str,
    out_dir: Path,
    threads: int = 1,
    count: int | None = None,
) -> DatasetManifest:
    """Sample microstructures of one split, solve the fine model and write both with a manifest.

    Sample ``i`` uses seed ``indexed_seed(split_seed, i)``, so any prefix of a
    split is reproducible on its own and independent of ``threads``.
    """
    if split not in SPLITS:
        raise ConfigError(f"Unknown split {split!r}; expected one of {SPLITS}")
    count = config.count(split) if count is None else count
    if count < 1:
        raise ConfigError(f"Split {split!r} needs at least one sample")
    split_dir = Path(out_dir) / split
    split_seed = config.split_seed(split)
    grf = config.grf
    bc = config.boundary.build(config.fine_mesh)

    def make(index: int) -> SampleRecord:
        seed = indexed_seed(split_seed, index)
        started = time.perf_counter()
        microstructure = sample_microstructure(grf, config.medium, seed)
        try:
            solution = solve_fine(config.fine_mesh, microstructure.flat, bc, config.solver)
        except NumericError as e:
            logger.error(
                "Fine solve failed; sample skipped",
                extra={"context": {"split": split, "index": index, "seed": seed, "error": str(e)}},
            )
            return SampleRecord(index=index, seed=seed, error=str(e))
        lambda_bin, _ = save_microstructure(sample_stem(split_dir, index, "lambda"), microstructure)
        u_bin, _ = save_solution(sample_stem(split_dir, index, "u"), solution, {"seed": seed})
        logger.info(
            "Sample generated",
            extra={
                "context": {
                    "split": split,
                    "index": index,
                    "seed": seed,
                    "wall_time_s": time.perf_counter() - started,
                }
            },
        )
        return SampleRecord(
            index=index,
            seed=seed,
            lambda_sha256=file_sha256(lambda_bin),
            u_sha256=file_sha256(u_bin),
        )

    records = parallel_map(make, range(count), threads)
    manifest = DatasetManifest(
        split=split,
        split_seed=split_seed,
        count=count,
        config=_generation_config(config),
        samples=records,
    )
    write_json(split_dir / MANIFEST_NAME, manifest.to_dict())
    if manifest.failed:
        logger.warning(
            "Some samples failed",
            extra={"context": {"split": split, "failed": [s.index for s in manifest.failed]}},
        )
    return manifest


def read_manifest(split_dir: Path) -> DatasetManifest:
    return DatasetManifest.from_dict(read_json(Path(split_dir) / MANIFEST_NAME))


def load_split(root: Path, split: str, limit: int | None = None) -> SplitData:
    split_dir = Path(root) / split
    manifest = read_manifest(split_dir)
    records = manifest.completed[:limit] if limit is not None else manifest.completed
    if not records:
        raise ConfigError(f"Split {split!r} under {root} holds no usable samples")
    microstructures = [load_microstructure(sample_stem(split_dir, r.index, "lambda")) for r in records]
    solutions = [load_solution(sample_stem(split_dir, r.index, "u")) for r in records]
    return SplitData(microstructures=microstructures, solutions=solutions, manifest=manifest)


def ensure_split(
    config: ExperimentConfig, root: Path, split: str, count: int | None = None, threads: int = 1
) -> SplitData:
    """Load a split, generating it first when missing, too small or made with another config."""
    count = config.count(split) if count is None else count
    split_dir = Path(root) / split
    try:
        manifest = read_manifest(split_dir)
        usable = (
            manifest.config == _generation_config(config)
            and manifest.split_seed == config.split_seed(split)
            and manifest.count >= count
        )
    except StorageError:
        usable = False
    if not usable:
        generate_data(config, split, root, threads, count)
    return load_split(root, split, limit=count)


def verify_manifest(split_dir: Path) -> list[str]:
    """Names of artifacts whose current hash differs from the manifest."""
    manifest = read_manifest(split_dir)
    mismatches = []
    for record in manifest.completed:
        for kind, expected in (("lambda", record.lambda_sha256), ("u", record.u_sha256)):
            bin_path, _ = array_paths(sample_stem(split_dir, record.index, kind))
            if not bin_path.exists() or file_sha256(bin_path) != expected:
                mismatches.append(bin_path.name)
    return mismatches
