from pathlib import Path

import numpy as np
import pytest

from src.features.evaluation import SPLITS, ExperimentConfig, ensure_split
from src.features.fem import BoundarySpec, CoarseModel, MeshSpec
from src.features.microstructure import GrfSpec, MediumSpec, Microstructure, sample_microstructure
from src.features.training import TrainingDataset, fit


class ExponentialToyModel:
    """Analytic forward map U_c(z) = base * exp(-mean(z)), one column per node."""

    def __init__(self, base: np.ndarray, n_latent: int = 1):
        self.base = np.asarray(base, dtype=float)
        self._n_latent = n_latent

    @property
    def n_latent(self) -> int:
        return self._n_latent

    @property
    def n_nodes(self) -> int:
        return int(self.base.size)

    def solve_batch(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return np.exp(-z.mean(axis=1))[:, None] * self.base[None, :]


class LinearToyModel:
    """U_c(z) = offset + slope * z for a single latent; conjugate to a Gaussian encoder."""

    def __init__(self, slope: np.ndarray, offset: np.ndarray):
        self.slope = np.asarray(slope, dtype=float)
        self.offset = np.asarray(offset, dtype=float)

    @property
    def n_latent(self) -> int:
        return 1

    @property
    def n_nodes(self) -> int:
        return int(self.slope.size)

    def solve_batch(self, z: np.ndarray) -> np.ndarray:
        z = np.atleast_2d(np.asarray(z, dtype=float))
        return self.offset[None, :] + z[:, :1] * self.slope[None, :]


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run acceptance-scale statistical experiments marked slow",
    )


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def medium() -> MediumSpec:
    return MediumSpec(lambda_hi=10.0, lambda_lo=1.0, phi_hi=0.2)


@pytest.fixture
def small_grf() -> GrfSpec:
    return GrfSpec(grid_nx=16, grid_ny=16, length_scale=0.2)


@pytest.fixture
def fine_mesh() -> MeshSpec:
    return MeshSpec(16, 16)


@pytest.fixture
def coarse_mesh() -> MeshSpec:
    return MeshSpec(2, 2)


@pytest.fixture
def boundary() -> BoundarySpec:
    return BoundarySpec()


@pytest.fixture
def microstructure(small_grf: GrfSpec, medium: MediumSpec) -> Microstructure:
    return sample_microstructure(small_grf, medium, seed=11)


@pytest.fixture
def microstructures(small_grf: GrfSpec, medium: MediumSpec) -> list[Microstructure]:
    return [sample_microstructure(small_grf, medium, seed=100 + i) for i in range(4)]


@pytest.fixture
def single_element_model(boundary: BoundarySpec) -> CoarseModel:
    return CoarseModel(boundary.build(MeshSpec(1, 1)))


@pytest.fixture
def toy_model() -> ExponentialToyModel:
    return ExponentialToyModel(base=np.array([1.0, 2.0, 3.0, 4.0]))


@pytest.fixture
def linear_model() -> LinearToyModel:
    return LinearToyModel(slope=np.array([1.0, -0.5, 2.0, 0.3]), offset=np.array([0.0, 1.0, 2.0, 3.0]))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture
def out_dir(tmp_path: Path) -> Path:
    path = tmp_path / "out"
    path.mkdir()
    return path


@pytest.fixture(scope="session")
def desk_config() -> ExperimentConfig:
    """64x64 fine mesh, phi_hi = 0.2, l = 0.0781, contrast 10, coarse sweep over 2x2 and 4x4."""
    return ExperimentConfig(n_pred_samples=2000)


@pytest.fixture(scope="session")
def desk_data(desk_config, tmp_path_factory: pytest.TempPathFactory) -> Path:
    root = tmp_path_factory.mktemp("desk")
    for split in SPLITS:
        ensure_split(desk_config, root, split, threads=4)
    return root


@pytest.fixture(scope="session")
def desk_model(desk_config, desk_data):
    """The 4x4 model trained on N = 64 generated samples with cross-validated gamma."""
    train = ensure_split(desk_config, desk_data, "train", threads=4)
    catalog = desk_config.catalog()
    dataset = TrainingDataset.from_microstructures(
        train.microstructures, train.solutions, desk_config.coarse_mesh, catalog, desk_config.boundary, threads=4
    )
    return fit(dataset, catalog, desk_config.coarse_mesh, desk_config.em, threads=4)
