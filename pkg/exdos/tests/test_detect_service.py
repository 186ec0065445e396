import pytest

from exdos.nn.checkpoint import params_digest
from exdos.nn.dagn import DagnConfig, init_params
from exdos.services.corpus_generator_service import handcrafted_corpus
from exdos.services.detect_service import DECISION_THRESHOLD, detect
from exdos.services.distill_trainer_service import bytecode_input, vulnerable_probability
from exdos.services.featurizer_service import FEATURE_DIM
from exdos.utils.errors import EmptyGraphError


STUDENT = init_params(DagnConfig(d_in=FEATURE_DIM, hidden_dim=8, num_layers=1, relation_dim=4, head_hidden=4), seed=1)


def _bytecode(name: str) -> str:
    return next(r for r in handcrafted_corpus(seed=0) if r.contract_id == name).bytecode_hex


def test_detect_should_be_deterministic_and_explain_with_patterns():
    hex_code = _bytecode("VulnerableBank")

    first = detect(hex_code, STUDENT, contract_id="VulnerableBank")
    second = detect(hex_code, STUDENT, contract_id="VulnerableBank")

    assert first.to_dict() == second.to_dict()
    assert 0.0 <= first.probability <= 1.0
    assert first.label == ("vulnerable" if first.probability >= DECISION_THRESHOLD else "normal")
    assert "reentrancy" in first.complete_chains
    assert first.model_digest == params_digest(STUDENT)
    assert first.node_count > 0


def test_detect_should_filter_patterns_by_vulnerability():
    report = detect(_bytecode("Spinner"), STUDENT, vulnerability="infinite-loop")

    assert {a.vulnerability for a in report.fired_patterns} == {"infinite-loop"}
    assert report.complete_chains == ("infinite-loop",)


def test_detect_should_reject_empty_bytecode():
    with pytest.raises(EmptyGraphError):
        detect("0x", STUDENT)


def test_detect_should_report_the_graph_probability_of_the_student():
    hex_code = _bytecode("VulnerableBank")
    graph_input, _ = bytecode_input(hex_code, contract_id="VulnerableBank")

    report = detect(hex_code, STUDENT, contract_id="VulnerableBank")

    assert report.probability == vulnerable_probability(graph_input, STUDENT)
