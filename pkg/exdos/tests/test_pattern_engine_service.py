import json

import pytest

from exdos.services.ast_document import ingest_ast
from exdos.services.cfg_builder_service import build_cfg
from exdos.services.corpus_generator_service import handcrafted_corpus
from exdos.services.csg_builder_service import build_contract_csg
from exdos.services.corpus_templates import selector
from exdos.services.evm_assembler import Assembler
from exdos.services.evm_disasm_service import disassemble
from exdos.services.pattern_engine_service import (
    annotations_from_dict,
    annotations_to_dict,
    fired_sub_patterns,
    has_complete_chain,
    match_bytecode_patterns,
    match_source_patterns,
    resolve_pattern_mask,
)
from exdos.utils.errors import ConfigError, InputFormatError, WrongModalityError


HANDCRAFTED = handcrafted_corpus(seed=0)


def _bytecode_annotations(rendered):
    blocks = disassemble(rendered.bytecode_hex)
    return match_bytecode_patterns(build_cfg(blocks, contract_id=rendered.contract_id), blocks)


def _source_annotations(rendered):
    doc = ingest_ast(json.dumps(rendered.ast))
    return match_source_patterns(build_contract_csg(doc), doc)


@pytest.mark.parametrize("rendered", HANDCRAFTED, ids=[r.contract_id for r in HANDCRAFTED])
def test_match_source_patterns_should_agree_with_template_labels(rendered):
    vulnerability = rendered.template.vulnerability
    annotations = _source_annotations(rendered)

    assert fired_sub_patterns(annotations, vulnerability) == rendered.template.expected_source
    assert has_complete_chain(annotations, vulnerability) == bool(rendered.template.label)


@pytest.mark.parametrize("rendered", HANDCRAFTED, ids=[r.contract_id for r in HANDCRAFTED])
def test_match_bytecode_patterns_should_agree_with_template_labels(rendered):
    vulnerability = rendered.template.vulnerability
    annotations = _bytecode_annotations(rendered)

    assert fired_sub_patterns(annotations, vulnerability) == rendered.template.expected_bytecode
    assert has_complete_chain(annotations, vulnerability) == bool(rendered.template.label)


def test_match_bytecode_patterns_should_be_deterministic():
    rendered = next(r for r in HANDCRAFTED if r.contract_id == "VulnerableBank")

    first = annotations_to_dict(_bytecode_annotations(rendered))
    second = annotations_to_dict(_bytecode_annotations(rendered))

    assert first == second
    assert annotations_to_dict(annotations_from_dict(first)) == first


def test_annotations_should_carry_sorted_key_nodes_and_evidence():
    rendered = next(r for r in HANDCRAFTED if r.contract_id == "VulnerableBank")

    for annotation in _bytecode_annotations(rendered):
        assert annotation.key_nodes == tuple(sorted(annotation.key_nodes))
        assert annotation.evidence
        assert annotation.contract_id == "VulnerableBank"
        assert annotation.modality == "bytecode"


def test_match_bytecode_patterns_should_reject_block_count_mismatch():
    blocks = disassemble("6003565b00")
    graph = build_cfg(blocks)

    with pytest.raises(InputFormatError):
        match_bytecode_patterns(graph, blocks[:1])


def test_match_source_patterns_should_reject_bytecode_graph():
    graph = build_cfg(disassemble("6003565b00"))

    with pytest.raises(WrongModalityError):
        match_source_patterns(graph)


def test_resolve_pattern_mask_should_handle_all_expression_forms():
    assert resolve_pattern_mask("all", "reentrancy") == {"callValueInvocation", "balanceDeduction", "enoughBalance"}
    assert resolve_pattern_mask("none", "timestamp") == frozenset()
    assert resolve_pattern_mask("only:P3", "infinite-loop") == {"selfInvocation"}
    assert resolve_pattern_mask("P1,loopCondition", "infinite-loop") == {"loopStatement", "loopCondition"}


def test_resolve_pattern_mask_should_drop_dependents_of_removed_base():
    assert resolve_pattern_mask("without:P1", "reentrancy") == frozenset()
    assert resolve_pattern_mask("without:P2", "timestamp") == {"timestampInvocation", "timestampContamination"}


def test_resolve_pattern_mask_should_reject_foreign_sub_pattern():
    with pytest.raises(ConfigError):
        resolve_pattern_mask("only:loopStatement", "reentrancy")
    with pytest.raises(ConfigError):
        has_complete_chain([], "overflow")


def _dispatch_to_shared_call(*, guarded_entry: bool) -> str:
    asm = Assembler()
    asm.push(0x00).op("CALLDATALOAD").push(0xE0).op("SHR")
    asm.op("DUP1").push(selector("a()"), 4).op("EQ").jumpi("a.entry")
    if guarded_entry:
        asm.op("DUP1").push(selector("b()"), 4).op("EQ").jumpi("b.entry")
    asm.push(0x00).op("DUP1", "REVERT")
    asm.label("a.entry").jump("call")
    if guarded_entry:
        asm.label("b.entry").op("CALLVALUE", "ISZERO").jumpi("b.ok")
        asm.push(0x00).op("DUP1", "REVERT")
        asm.label("b.ok").jump("call")
    asm.label("call").push(0x00).op("DUP1", "DUP1", "DUP1", "DUP1", "ADDRESS", "GAS", "CALL", "POP", "STOP")
    return asm.hex()


@pytest.mark.parametrize(("guarded_entry", "fires"), [(False, True), (True, False)])
def test_self_invocation_should_consider_every_reaching_entry(guarded_entry: bool, fires: bool):
    blocks = disassemble(_dispatch_to_shared_call(guarded_entry=guarded_entry))

    annotations = match_bytecode_patterns(build_cfg(blocks), blocks)

    assert ("selfInvocation" in fired_sub_patterns(annotations, "infinite-loop")) is fires


def test_selector_should_use_keccak_256():
    assert selector("transfer(address,uint256)") == 0xA9059CBB
    assert selector("withdraw(uint256)") == 0x2E1A7D4D
