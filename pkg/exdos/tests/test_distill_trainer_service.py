from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from exdos.config.train_config import TrainConfig
from exdos.nn.checkpoint import params_digest
from exdos.nn.dagn import encode
from exdos.services.alignment_service import AlignedPair, AlignmentDictionary
from exdos.services.corpus_generator_service import handcrafted_corpus, write_contract
from exdos.services.dataset_service import LABELS, ManifestEntry
from exdos.services.distill_trainer_service import (
    PairedSample,
    aggregate_scores,
    build_paired_sample,
    distill,
    distill_loss,
    evaluate_model,
    finetune,
    init_student,
    local_loss,
    pretrain_teacher,
)
from exdos.utils.errors import ShapeError, TrainingError


BANKS = ("VulnerableBank", "LegacyBank", "SafeBank", "Ledger")


def _config(**overrides) -> TrainConfig:
    base = TrainConfig(
        learning_rate=5e-3,
        batch_size=64,
        teacher_epochs=3,
        distill_epochs=3,
        finetune_epochs=3,
        seed=3,
        hidden_dim=8,
        num_layers=1,
        relation_dim=4,
        head_hidden=4,
    )
    return base.with_overrides(**overrides)


@pytest.fixture(scope="module")
def samples(tmp_path_factory) -> list[PairedSample]:
    directory: Path = tmp_path_factory.mktemp("banks")
    config = _config()
    out = []
    for rendered in handcrafted_corpus(seed=0):
        if rendered.contract_id not in BANKS:
            continue
        bytecode_path, ast_path = write_contract(rendered, directory)
        entry = ManifestEntry(
            contract_id=rendered.contract_id,
            bytecode_path=bytecode_path,
            ast_path=ast_path,
            vulnerability="reentrancy",
            label=LABELS[rendered.template.label],
        )
        out.append(build_paired_sample(entry, config))
    return out


def _by_id(samples, contract_id: str) -> PairedSample:
    return next(s for s in samples if s.contract_id == contract_id)


def test_build_paired_sample_should_align_key_nodes(samples):
    bank = _by_id(samples, "VulnerableBank")

    assert bank.label == 1
    assert bank.source is not None
    assert {p.sub_pattern for p in bank.alignment.pairs} == {"callValueInvocation", "balanceDeduction", "enoughBalance"}
    assert _by_id(samples, "Ledger").alignment.is_empty


def test_build_paired_sample_should_respect_pattern_mask(tmp_path: Path):
    rendered = next(r for r in handcrafted_corpus(seed=0) if r.contract_id == "VulnerableBank")
    bytecode_path, ast_path = write_contract(rendered, tmp_path)
    entry = ManifestEntry("VulnerableBank", bytecode_path, "reentrancy", "vulnerable", ast_path)

    sample = build_paired_sample(entry, _config(pattern_mask="none"))

    assert sample.alignment.is_empty
    assert sample.bytecode_patterns


def test_paired_sample_should_validate_label_and_pairs(samples):
    bank = _by_id(samples, "VulnerableBank")
    far = bank.source.graph.node_count + 5

    with pytest.raises(TrainingError):
        replace(bank, label=2)
    with pytest.raises(TrainingError):
        replace(bank, alignment=AlignmentDictionary("VulnerableBank", (AlignedPair(far, 0, "enoughBalance"),)))
    with pytest.raises(TrainingError):
        replace(bank, source=None)


def test_local_loss_should_be_zero_for_empty_dictionary(samples):
    bank = _by_id(samples, "VulnerableBank")
    teacher = pretrain_teacher(samples, _config(teacher_epochs=0))[0]
    student = init_student(_config())
    t_emb = encode(bank.source.graph, bank.source.features, teacher)
    s_emb = encode(bank.bytecode.graph, bank.bytecode.features, student)

    assert local_loss(t_emb, s_emb, AlignmentDictionary("VulnerableBank")).item() == 0.0
    assert local_loss(t_emb, s_emb, bank.alignment).item() > 0.0
    both = distill_loss(t_emb, s_emb, bank.alignment, loss_mix="both").item()
    parts = distill_loss(t_emb, s_emb, bank.alignment, loss_mix="global_only").item() + distill_loss(
        t_emb, s_emb, bank.alignment, loss_mix="local_only"
    ).item()
    assert both == pytest.approx(parts)
    with pytest.raises(TrainingError):
        distill_loss(t_emb, s_emb, bank.alignment, loss_mix="off")


def test_pretrain_teacher_should_reject_missing_source(samples):
    with pytest.raises(TrainingError):
        pretrain_teacher([], _config())
    with pytest.raises(TrainingError):
        pretrain_teacher([replace(samples[-1], source=None, alignment=AlignmentDictionary("x"))], _config())


def test_distill_should_keep_teacher_frozen(samples):
    config = _config()
    teacher, _ = pretrain_teacher(samples, config)
    digest = params_digest(teacher)

    student, history = distill(teacher, init_student(config), samples, config)

    assert params_digest(teacher) == digest
    assert history.teacher_digest == digest
    assert len(history.epoch_losses) == config.distill_epochs
    assert "head.W1" not in history.trainable
    assert params_digest(student) != params_digest(init_student(config))


@pytest.mark.parametrize(
    ("target", "frozen", "trained"),
    [
        ("gnn_only", "pool.W", "input_proj.W"),
        ("agp_only", "input_proj.W", "pool.W"),
    ],
)
def test_distill_should_only_train_selected_groups(samples, target: str, frozen: str, trained: str):
    config = _config(distill_target=target)
    teacher, _ = pretrain_teacher(samples, config)
    student_init = init_student(config)

    student, _ = distill(teacher, student_init, samples, config)

    assert np.array_equal(student[frozen].data, student_init[frozen].data)
    assert np.array_equal(student["head.W2"].data, student_init["head.W2"].data)
    assert not np.array_equal(student[trained].data, student_init[trained].data)


def test_distill_should_return_init_when_disabled(samples):
    config = _config(distill_target="off")
    teacher, _ = pretrain_teacher(samples, _config(teacher_epochs=0))
    student_init = init_student(config)

    student, history = distill(teacher, student_init, samples, config)

    assert params_digest(student) == params_digest(student_init)
    assert history.epoch_losses == []


def test_distill_should_count_skipped_local_terms(samples):
    config = _config(distill_epochs=2)
    teacher, _ = pretrain_teacher(samples, _config(teacher_epochs=0))

    _, history = distill(teacher, init_student(config), samples, config)
    _, global_history = distill(teacher, init_student(config), samples, config.with_overrides(loss_mix="global_only"))

    empty = sum(1 for s in samples if s.alignment.is_empty)
    assert empty >= 1
    assert history.skipped_local == empty * 2
    assert global_history.skipped_local == 0


def test_distill_should_reject_hidden_dim_mismatch(samples):
    teacher, _ = pretrain_teacher(samples, _config(teacher_epochs=0))

    with pytest.raises(ShapeError):
        distill(teacher, init_student(_config(hidden_dim=6)), samples, _config())


def test_finetune_should_reduce_training_loss(samples):
    config = _config(finetune_epochs=25)

    model, history = finetune(init_student(config), samples, config)

    assert history.epoch_losses[-1] < history.epoch_losses[0]
    assert history.trainable[-1] == "head.b2"
    assert params_digest(model) != params_digest(init_student(config))


def test_evaluate_model_should_threshold_probabilities(samples):
    model = init_student(_config())

    scores, preds = evaluate_model(model, samples)

    assert scores.shape == (len(samples),)
    assert ((scores >= 0.0) & (scores <= 1.0)).all()
    assert preds.tolist() == [int(s >= 0.5) for s in scores]
    source_scores, _ = evaluate_model(model, samples, modality="source")
    assert source_scores.shape == scores.shape


def test_aggregate_scores_should_take_maximum():
    assert aggregate_scores([0.2, 0.9, 0.4]) == 0.9
    with pytest.raises(TrainingError):
        aggregate_scores([])
