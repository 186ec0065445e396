import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exdos.services.cfg_builder_service import build_cfg, is_backward_jump
from exdos.services.contract_graph import (
    BYTECODE,
    SOURCE,
    ContractGraph,
    GraphEdge,
    GraphNode,
    graph_from_dict,
    serialize_graph,
)
from exdos.services.evm_disasm_service import decode_bytes, disassemble, segment_blocks
from exdos.utils.errors import InputFormatError, WrongModalityError


def _edges(graph: ContractGraph) -> list[tuple[int, int, str]]:
    return [(e.src, e.dst, e.edge_type) for e in graph.edges]


def test_build_cfg_should_link_static_jump_to_jumpdest():
    graph = build_cfg(disassemble("6003565b00"), contract_id="c1")

    assert graph.modality == BYTECODE
    assert graph.node_count == 2
    assert _edges(graph) == [(0, 1, "jump-uncond")]
    assert graph.diagnostics == ()


def test_build_cfg_should_add_both_branches_for_jumpi():
    # PUSH1 4 / JUMPI / STOP / JUMPDEST / STOP
    graph = build_cfg(disassemble("600457005b00"))

    assert _edges(graph) == [(0, 2, "jump-cond-true"), (0, 1, "jump-cond-false")]


def test_build_cfg_should_add_fallthrough_into_jumpdest_block():
    graph = build_cfg(disassemble("60015b00"))

    assert _edges(graph) == [(0, 1, "fallthrough")]


def test_build_cfg_should_record_unresolved_dynamic_jump():
    graph = build_cfg(disassemble("3456"))

    assert graph.edges == ()
    assert [d.kind for d in graph.diagnostics] == ["unresolved-jump"]
    assert graph.diagnostics[0].offset == 1


def test_build_cfg_should_not_jump_into_non_jumpdest_block():
    graph = build_cfg(disassemble("6003560000"))

    assert graph.edges == ()
    assert [d.kind for d in graph.diagnostics] == ["non-jumpdest-target"]


def test_is_backward_jump_should_detect_loop_back_edge():
    # JUMPDEST / PUSH1 0 / JUMP：跳回自身
    graph = build_cfg(disassemble("5b600056"))

    assert _edges(graph) == [(0, 0, "jump-uncond")]
    assert is_backward_jump(graph.edges[0], graph)


def test_is_backward_jump_should_reject_source_graph():
    graph = ContractGraph(
        modality=SOURCE,
        contract_id="c",
        nodes=(GraphNode(0, "stmt", {}, 0),),
        edges=(GraphEdge(0, 0, "control-flow"),),
    )

    with pytest.raises(WrongModalityError):
        is_backward_jump(graph.edges[0], graph)


def test_contract_graph_should_reject_foreign_edge_type():
    with pytest.raises(InputFormatError):
        ContractGraph(
            modality=BYTECODE,
            contract_id="c",
            nodes=(GraphNode(0, "basic-block", {}, 0),),
            edges=(GraphEdge(0, 0, "data-flow"),),
        )


def test_serialize_graph_should_be_stable_and_reloadable():
    hex_code = "600457005b6001600255600a5b00"
    first = serialize_graph(build_cfg(disassemble(hex_code), contract_id="x"))
    second = serialize_graph(build_cfg(disassemble(hex_code), contract_id="x"))

    reloaded = graph_from_dict(json.loads(first))

    assert first == second
    assert serialize_graph(reloaded) == first


@settings(max_examples=200, deadline=None)
@given(st.binary(max_size=200))
def test_build_cfg_should_only_emit_jump_edges_to_jumpdest_blocks(code: bytes):
    blocks = segment_blocks(decode_bytes(code))
    graph = build_cfg(blocks)

    assert graph.node_count == len(blocks)
    for edge in graph.edges_of_type("jump-uncond", "jump-cond-true"):
        assert blocks[edge.dst].starts_with_jumpdest
    for edge in graph.edges_of_type("fallthrough", "jump-cond-false"):
        assert edge.dst == edge.src + 1
