import csv
import math
from pathlib import Path

import pytest

from exdos.config.train_config import ABLATION_PRESETS, TrainConfig
from exdos.services.corpus_generator_service import CorpusSpec, generate_synthetic_corpus
from exdos.services.experiment_service import ablation_report, build_samples, five_run_report, run_experiment


def _config(**overrides) -> TrainConfig:
    return TrainConfig(
        learning_rate=5e-3,
        batch_size=8,
        teacher_epochs=2,
        distill_epochs=2,
        finetune_epochs=2,
        hidden_dim=8,
        num_layers=1,
        relation_dim=4,
        head_hidden=4,
    ).with_overrides(**overrides)


@pytest.fixture(scope="module")
def manifest(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    return generate_synthetic_corpus(root, spec=CorpusSpec(per_vulnerability=10, vulnerabilities=("reentrancy",)), seed=4)


def test_build_samples_should_match_serial_when_threaded(manifest):
    entries = manifest.for_vulnerability("reentrancy")

    serial = build_samples(entries, _config())
    threaded = build_samples(entries, _config(), threads=3)

    assert list(serial) == list(threaded) == [e.contract_id for e in entries]
    for cid in serial:
        assert serial[cid].alignment == threaded[cid].alignment
        assert serial[cid].bytecode.graph == threaded[cid].bytecode.graph


def test_run_experiment_should_report_test_metrics(manifest):
    result = run_experiment(manifest, "reentrancy", _config(), seed=2)

    assert result.metrics.total == len(result.split.test)
    assert [h.phase for h in result.histories] == ["teacher", "distill", "finetune"]
    assert result.val_metrics is not None


def test_run_experiment_should_skip_distillation_when_disabled(manifest):
    result = run_experiment(manifest, "reentrancy", _config(distill_target="off"), seed=2)

    assert [h.phase for h in result.histories] == ["finetune"]


def test_five_run_report_should_be_identical_serial_and_threaded(manifest, tmp_path: Path):
    serial = five_run_report(manifest, "reentrancy", _config(), seed=0, runs=2, out_dir=tmp_path / "serial")
    threaded = five_run_report(manifest, "reentrancy", _config(), seed=0, runs=2, threads=2, out_dir=tmp_path / "threaded")

    assert serial.to_dict() == threaded.to_dict()
    assert [r.seed for r in serial.runs] == [0, 1]
    assert (tmp_path / "serial" / "metrics.csv").read_bytes() == (tmp_path / "threaded" / "metrics.csv").read_bytes()
    with (tmp_path / "serial" / "metrics.csv").open(encoding="utf-8") as handle:
        rows = list(csv.DictReader(handle))
    assert [r["run"] for r in rows] == ["0", "1", "mean"]
    assert (tmp_path / "serial" / "roc.csv").is_file()


def test_ablation_report_should_write_one_row_per_preset(manifest, tmp_path: Path):
    rows = ablation_report(manifest, "reentrancy", _config(), ["full", "global-only"], seed=0, runs=1, out_dir=tmp_path)

    assert [r["preset"] for r in rows] == ["full", "global-only"]
    assert (tmp_path / "ablation.csv").read_text(encoding="utf-8").startswith("preset,vulnerability,runs,accuracy")


@pytest.mark.slow
def test_ablation_report_should_cover_every_preset_with_finite_metrics(manifest, tmp_path: Path):
    config = _config(teacher_epochs=1, distill_epochs=1, finetune_epochs=1)

    rows = ablation_report(manifest, "reentrancy", config, list(ABLATION_PRESETS), seed=0, runs=1, out_dir=tmp_path)

    assert [r["preset"] for r in rows] == list(ABLATION_PRESETS)
    for row in rows:
        for column in ("accuracy", "precision", "recall", "f1"):
            assert math.isfinite(row[column]) and 0.0 <= row[column] <= 100.0, (row["preset"], column)
        assert row["auc"] is None or math.isfinite(row["auc"])
    with (tmp_path / "ablation.csv").open(encoding="utf-8") as handle:
        assert [r["preset"] for r in csv.DictReader(handle)] == list(ABLATION_PRESETS)
