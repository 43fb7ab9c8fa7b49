import numpy as np
import pytest

from src.features.evaluation import (
    ExperimentConfig,
    ensure_split,
    generate_data,
    load_split,
    read_manifest,
    sample_stem,
    verify_manifest,
)
from src.features.fem import MeshSpec, solve_fine
from src.features.microstructure import sample_microstructure
from src.shared.errors import ConfigError
from src.shared.storage import array_paths
from src.shared.workers import indexed_seed


@pytest.fixture
def tiny_config():
    return ExperimentConfig(
        fine_mesh=MeshSpec(4, 4),
        coarse_mesh=MeshSpec(2, 2),
        length_scale=0.3,
        n_train=3,
        n_test=2,
        n_reference=2,
        seed=7,
        sweep_coarse=(MeshSpec(2, 2),),
    )


class TestGenerateData:
    def test_single_sample_layout(self, tiny_config, tmp_path):
        manifest = generate_data(tiny_config, "train", tmp_path, count=1)
        split_dir = tmp_path / "train"
        lambda_bin, lambda_json = array_paths(sample_stem(split_dir, 0, "lambda"))
        u_bin, _ = array_paths(sample_stem(split_dir, 0, "u"))
        assert lambda_bin.stat().st_size == 16 * 8
        assert u_bin.stat().st_size == 25 * 8
        assert lambda_json.exists()
        assert manifest.count == 1
        assert len(manifest.completed) == 1
        assert (split_dir / "manifest.json").exists()

    def test_sample_seed_is_indexed(self, tiny_config, tmp_path):
        manifest = generate_data(tiny_config, "test", tmp_path)
        split_seed = tiny_config.split_seed("test")
        assert [r.seed for r in manifest.samples] == [indexed_seed(split_seed, i) for i in range(2)]

    def test_files_match_direct_computation(self, tiny_config, tmp_path):
        manifest = generate_data(tiny_config, "train", tmp_path, count=2)
        data = load_split(tmp_path, "train")
        seed = manifest.samples[1].seed
        ms = sample_microstructure(tiny_config.grf, tiny_config.medium, seed)
        np.testing.assert_array_equal(data.microstructures[1].cells, ms.cells)
        solution = solve_fine(tiny_config.fine_mesh, ms.flat, tiny_config.boundary.build(tiny_config.fine_mesh))
        np.testing.assert_array_equal(data.solutions[1].nodal_values, solution.nodal_values)

    def test_regeneration_is_byte_identical(self, tiny_config, tmp_path):
        generate_data(tiny_config, "train", tmp_path / "a")
        generate_data(tiny_config, "train", tmp_path / "b", threads=3)
        for name in ("manifest.json", "sample_0002.lambda.bin", "sample_0002.u.bin"):
            assert (tmp_path / "a" / "train" / name).read_bytes() == (tmp_path / "b" / "train" / name).read_bytes()

    def test_prefix_is_reproducible(self, tiny_config, tmp_path):
        full = generate_data(tiny_config, "train", tmp_path / "full")
        prefix = generate_data(tiny_config, "train", tmp_path / "prefix", count=2)
        assert [r.to_dict() for r in prefix.samples] == [r.to_dict() for r in full.samples[:2]]

    def test_rejects_unknown_split(self, tiny_config, tmp_path):
        with pytest.raises(ConfigError):
            generate_data(tiny_config, "validation", tmp_path)

    def test_rejects_empty_split(self, tiny_config, tmp_path):
        with pytest.raises(ConfigError):
            generate_data(tiny_config, "train", tmp_path, count=0)


class TestManifest:
    def test_verify_detects_tampering(self, tiny_config, tmp_path):
        generate_data(tiny_config, "test", tmp_path)
        split_dir = tmp_path / "test"
        assert verify_manifest(split_dir) == []
        u_bin, _ = array_paths(sample_stem(split_dir, 1, "u"))
        payload = bytearray(u_bin.read_bytes())
        payload[0] ^= 0xFF
        u_bin.write_bytes(bytes(payload))
        assert verify_manifest(split_dir) == [u_bin.name]

    def test_verify_reports_missing_file(self, tiny_config, tmp_path):
        generate_data(tiny_config, "test", tmp_path)
        lambda_bin, _ = array_paths(sample_stem(tmp_path / "test", 0, "lambda"))
        lambda_bin.unlink()
        assert verify_manifest(tmp_path / "test") == [lambda_bin.name]

    def test_round_trip(self, tiny_config, tmp_path):
        manifest = generate_data(tiny_config, "reference", tmp_path)
        loaded = read_manifest(tmp_path / "reference")
        assert loaded.to_dict() == manifest.to_dict()
        assert loaded.split == "reference"


class TestLoadSplit:
    def test_limit(self, tiny_config, tmp_path):
        generate_data(tiny_config, "train", tmp_path)
        data = load_split(tmp_path, "train", limit=2)
        assert len(data) == 2
        assert len(data.solutions) == 2
        assert data.microstructures[0].cells.shape == (4, 4)

    def test_ensure_split_reuses_matching_data(self, tiny_config, tmp_path):
        generate_data(tiny_config, "train", tmp_path)
        manifest_path = tmp_path / "train" / "manifest.json"
        before = manifest_path.stat().st_mtime_ns
        data = ensure_split(tiny_config, tmp_path, "train", count=2)
        assert len(data) == 2
        assert manifest_path.stat().st_mtime_ns == before

    def test_ensure_split_regenerates_on_config_change(self, tiny_config, tmp_path):
        generate_data(tiny_config, "train", tmp_path)
        changed = tiny_config.with_seed(8)
        data = ensure_split(changed, tmp_path, "train")
        assert read_manifest(tmp_path / "train").split_seed == changed.split_seed("train")
        assert len(data) == 3

    def test_ensure_split_generates_missing(self, tiny_config, tmp_path):
        data = ensure_split(tiny_config, tmp_path, "test")
        assert len(data) == 2
