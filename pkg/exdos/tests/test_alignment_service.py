import json
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exdos.services.alignment_service import AlignmentDictionary, build_dictionary, filter_dictionary
from exdos.services.ast_document import ingest_ast
from exdos.services.cfg_builder_service import build_cfg
from exdos.services.corpus_generator_service import handcrafted_corpus
from exdos.services.csg_builder_service import build_contract_csg
from exdos.services.evm_disasm_service import disassemble
from exdos.services.pattern_engine_service import (
    ALL_SUB_PATTERNS,
    PatternAnnotation,
    fired_sub_patterns,
    match_bytecode_patterns,
    match_source_patterns,
)
from exdos.utils.errors import AlignmentError


def _ann(sub_pattern: str, modality: str, *nodes: int, contract_id: str = "c", vulnerability: str = "reentrancy"):
    return PatternAnnotation(contract_id, vulnerability, sub_pattern, modality, tuple(nodes), ("e",))


def test_build_dictionary_should_pair_by_rank_and_report_leftovers():
    src = [_ann("callValueInvocation", "source", 7, 3), _ann("balanceDeduction", "source", 9)]
    byt = [_ann("callValueInvocation", "bytecode", 5), _ann("balanceDeduction", "bytecode", 11, 12)]

    dictionary = build_dictionary(src, byt)

    assert [(p.source_node, p.bytecode_node, p.sub_pattern) for p in dictionary.pairs] == [
        (3, 5, "callValueInvocation"),
        (9, 11, "balanceDeduction"),
    ]
    assert [(u.sub_pattern, u.modality, u.nodes) for u in dictionary.unpaired] == [
        ("callValueInvocation", "source", (7,)),
        ("balanceDeduction", "bytecode", (12,)),
    ]
    assert dictionary.contract_id == "c"


def test_build_dictionary_should_be_empty_when_one_side_has_nothing():
    dictionary = build_dictionary([], [_ann("callValueInvocation", "bytecode", 1)])

    assert dictionary.is_empty
    assert len(dictionary) == 0


def test_build_dictionary_should_reject_contract_mismatch():
    with pytest.raises(AlignmentError):
        build_dictionary(
            [_ann("callValueInvocation", "source", 1, contract_id="a")],
            [_ann("callValueInvocation", "bytecode", 1, contract_id="b")],
        )


def test_build_dictionary_should_reject_swapped_modalities():
    with pytest.raises(AlignmentError):
        build_dictionary([_ann("callValueInvocation", "bytecode", 1)], [])


def test_filter_dictionary_should_keep_only_masked_sub_patterns():
    dictionary = build_dictionary(
        [_ann("callValueInvocation", "source", 1), _ann("enoughBalance", "source", 0)],
        [_ann("callValueInvocation", "bytecode", 4), _ann("enoughBalance", "bytecode", 2)],
    )

    filtered = filter_dictionary(dictionary, {"enoughBalance"})

    assert [p.sub_pattern for p in filtered.pairs] == ["enoughBalance"]
    assert AlignmentDictionary.from_dict(json.loads(json.dumps(filtered.to_dict()))) == filtered


def test_build_dictionary_should_pair_handcrafted_vulnerable_bank():
    rendered = next(r for r in handcrafted_corpus(seed=0) if r.contract_id == "VulnerableBank")
    doc = ingest_ast(json.dumps(rendered.ast))
    blocks = disassemble(rendered.bytecode_hex)
    src = [a for a in match_source_patterns(build_contract_csg(doc), doc) if a.vulnerability == "reentrancy"]
    byt = [
        a
        for a in match_bytecode_patterns(build_cfg(blocks, contract_id="VulnerableBank"), blocks)
        if a.vulnerability == "reentrancy"
    ]

    dictionary = build_dictionary(src, byt)

    assert {p.sub_pattern for p in dictionary.pairs} == fired_sub_patterns(src) & fired_sub_patterns(byt)
    assert {p.sub_pattern for p in dictionary.pairs} == {"callValueInvocation", "balanceDeduction", "enoughBalance"}


_RAW_ANNOTATIONS = st.lists(
    st.tuples(st.sampled_from(ALL_SUB_PATTERNS), st.lists(st.integers(0, 30), min_size=1, max_size=5)),
    max_size=6,
)


def _key_nodes(annotations, sub_pattern: str) -> set[int]:
    return {n for a in annotations if a.sub_pattern == sub_pattern for n in a.key_nodes}


@settings(max_examples=200, deadline=None)
@given(_RAW_ANNOTATIONS, _RAW_ANNOTATIONS)
def test_build_dictionary_should_pair_one_to_one_and_symmetrically(src_raw, byt_raw):
    src = [_ann(p, "source", *nodes) for p, nodes in src_raw]
    byt = [_ann(p, "bytecode", *nodes) for p, nodes in byt_raw]

    forward = build_dictionary(src, byt)
    swapped = build_dictionary(
        [replace(a, modality="source") for a in byt],
        [replace(a, modality="bytecode") for a in src],
    )

    assert {(p.source_node, p.bytecode_node, p.sub_pattern) for p in forward.pairs} == {
        (p.bytecode_node, p.source_node, p.sub_pattern) for p in swapped.pairs
    }
    for sub_pattern in ALL_SUB_PATTERNS:
        chosen = [p for p in forward.pairs if p.sub_pattern == sub_pattern]
        assert len({p.source_node for p in chosen}) == len(chosen)
        assert len({p.bytecode_node for p in chosen}) == len(chosen)
        assert {p.source_node for p in chosen} <= _key_nodes(src, sub_pattern)
        assert {p.bytecode_node for p in chosen} <= _key_nodes(byt, sub_pattern)
        assert len(chosen) == min(len(_key_nodes(src, sub_pattern)), len(_key_nodes(byt, sub_pattern)))
