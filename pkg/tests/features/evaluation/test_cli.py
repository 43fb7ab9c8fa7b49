import hashlib
import json
from pathlib import Path

import pytest

from src.__main__ import build_parser, main
from src.features.evaluation import ExperimentConfig
from src.features.feature_functions import FeatureCatalog, FeatureEntry, FeatureKind
from src.features.fem import MeshSpec
from src.features.training import EmConfig, GammaSelection, McmcConfig
from src.shared.storage import file_sha256, read_csv, write_json


@pytest.fixture
def config_path(tmp_path):
    catalog_path = tmp_path / "catalog.json"
    FeatureCatalog(entries=[FeatureEntry("log_sca", FeatureKind.EFFECTIVE_MEDIUM, {"formula": "sca"})]).save(
        catalog_path
    )
    config = ExperimentConfig(
        fine_mesh=MeshSpec(8, 8),
        coarse_mesh=MeshSpec(2, 2),
        length_scale=0.25,
        n_train=3,
        n_test=2,
        n_reference=3,
        n_pred_samples=16,
        catalog_path=str(catalog_path),
        em=EmConfig(
            max_iter=2,
            mcmc=McmcConfig(burn_in=10, samples=10, n_importance=4),
            gamma=GammaSelection(grid=(0.1, 10.0), folds=2, n_pred_samples=8, max_iter=2),
        ),
        sweep_n_train=(2, 3),
        sweep_coarse=(MeshSpec(2, 2),),
    )
    path = tmp_path / "experiment.json"
    config.save(path)
    return path


class TestParser:
    def test_subcommands(self):
        parser = build_parser()
        for command in ("generate", "train", "predict", "evaluate", "sweep"):
            assert parser.parse_args([command]).command == command

    def test_coarse_mesh_argument(self):
        args = build_parser().parse_args(["sweep", "--coarse", "2x2", "4x1", "--n-train", "8", "16"])
        assert args.coarse == [MeshSpec(2, 2), MeshSpec(4, 1)]
        assert args.n_train == [8, 16]

    def test_bad_mesh_argument(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["sweep", "--coarse", "four"])


@pytest.mark.integration
class TestPipeline:
    def test_generate_train_predict_evaluate(self, config_path, tmp_path):
        out = tmp_path / "run"
        common = ["--config", str(config_path), "--out", str(out)]
        assert main(["generate", *common]) == 0
        assert (out / "data" / "train" / "manifest.json").exists()
        assert (out / "config.json").exists()

        assert main(["train", *common]) == 0
        model = json.loads((out / "model.json").read_text())
        assert model["metadata"]["n_train"] == 3
        assert len(read_csv(out / "training_log.csv")) >= 1
        assert len(read_csv(out / "cv_scores.csv")) == 4

        assert main(["predict", *common, "--sample", "1", "--n-samples", "8"]) == 0
        assert (out / "prediction" / "sample_0001" / "predictive_mean.bin").exists()

        assert main(["evaluate", *common]) == 0
        metrics = json.loads((out / "metrics.json").read_text())
        assert metrics["n_test"] == 2

    def test_sweep(self, config_path, tmp_path):
        out = tmp_path / "run"
        assert main(["sweep", "--config", str(config_path), "--out", str(out)]) == 0
        assert len(read_csv(out / "sweep.csv")) == 2


def _output_digests(out: Path) -> dict[str, str]:
    """SHA-256 of every output file; CSV tables are hashed without their wall-time column."""
    digests = {}
    for path in sorted(p for p in out.rglob("*") if p.is_file()):
        relative = path.relative_to(out).as_posix()
        if relative.startswith("logs/"):
            continue
        if path.suffix == ".csv":
            rows = [{k: v for k, v in row.items() if k != "wall_time_s"} for row in read_csv(path)]
            digests[relative] = hashlib.sha256(json.dumps(rows).encode()).hexdigest()
        else:
            digests[relative] = file_sha256(path)
    return digests


@pytest.mark.integration
class TestDeterminism:
    def test_rerun_is_byte_identical_for_any_thread_count(self, config_path, tmp_path):
        digests = []
        for threads in ("1", "4"):
            out = tmp_path / f"run_{threads}"
            common = ["--config", str(config_path), "--out", str(out), "--seed", "5", "--threads", threads]
            assert main(["generate", *common]) == 0
            assert main(["train", *common]) == 0
            assert main(["predict", *common, "--sample", "1", "--n-samples", "8"]) == 0
            assert main(["evaluate", *common]) == 0
            digests.append(_output_digests(out))
        assert {"model.json", "metrics.json", "training_log.csv", "cv_scores.csv"} <= set(digests[0])
        assert "data/train/manifest.json" in digests[0]
        assert digests[0] == digests[1]


class TestExitCodes:
    def test_invalid_config(self, tmp_path):
        path = tmp_path / "experiment.json"
        write_json(path, {"n_train": 0})
        assert main(["generate", "--config", str(path), "--out", str(tmp_path / "run")]) == 2

    def test_missing_config_file(self, tmp_path):
        assert main(["generate", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "run")]) == 4

    def test_missing_model(self, config_path, tmp_path):
        out = tmp_path / "run"
        assert main(["evaluate", "--config", str(config_path), "--out", str(out)]) == 4

    @pytest.mark.integration
    def test_sample_out_of_range(self, config_path, tmp_path):
        out = tmp_path / "run"
        common = ["--config", str(config_path), "--out", str(out)]
        assert main(["generate", *common]) == 0
        assert main(["train", *common]) == 0
        assert main(["predict", *common, "--sample", "9"]) == 2
