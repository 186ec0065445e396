import json
import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exdos.services.ast_document import ingest_ast
from exdos.services.cfg_builder_service import build_cfg
from exdos.services.contract_graph import ContractGraph, GraphEdge, GraphNode
from exdos.services.corpus_generator_service import handcrafted_corpus
from exdos.services.csg_builder_service import build_contract_csg
from exdos.services.evm_disasm_service import disassemble
from exdos.services.featurizer_service import (
    FEATURE_DIM,
    OPCODE_CATEGORIES,
    SOURCE_KIND_SLOTS,
    featurize_bytecode,
    featurize_source,
    import_embeddings,
    read_features,
    write_embeddings,
    write_features,
)
from exdos.utils.errors import EmbeddingImportError, WrongModalityError


def test_featurize_bytecode_should_describe_each_block():
    blocks = disassemble("6003565b00")
    features = featurize_bytecode(blocks, build_cfg(blocks, contract_id="c"))

    assert features.matrix.shape == (2, FEATURE_DIM)
    first = features.matrix[0]
    assert first[OPCODE_CATEGORIES.index("push")] == pytest.approx(0.5)
    assert first[OPCODE_CATEGORIES.index("jump-family")] == pytest.approx(0.5)
    assert first[8] == pytest.approx(math.log1p(2))
    assert first[9] == 1.0
    assert first[21] == 0.0
    assert features.matrix[1][21] == 1.0


def test_featurize_bytecode_should_set_storage_and_call_bits():
    # SLOAD SSTORE GAS CALL STOP
    blocks = disassemble("54555af100")
    features = featurize_bytecode(blocks, build_cfg(blocks))

    assert features.matrix[0][17:21].tolist() == [1.0, 1.0, 1.0, 0.0]


def test_featurize_source_should_one_hot_node_kind():
    graph = ContractGraph(
        modality="source",
        contract_id="c",
        nodes=(
            GraphNode(0, "require", {"flags": ["has-comparison"]}, 0),
            GraphNode(1, "unknown-ref", {"flags": []}, 1),
        ),
        edges=(GraphEdge(0, 1, "control-flow"),),
    )

    features = featurize_source(graph)
    slots = len(SOURCE_KIND_SLOTS)

    assert features.matrix.shape == (2, FEATURE_DIM)
    assert features.matrix[0][SOURCE_KIND_SLOTS.index("require")] == 1.0
    assert features.matrix[1][:slots].sum() == 0.0
    assert features.matrix[0][slots + 1] == pytest.approx(math.log1p(1))
    assert features.matrix[0][slots + 4] == 1.0


def test_featurize_source_should_reject_bytecode_graph():
    blocks = disassemble("00")

    with pytest.raises(WrongModalityError):
        featurize_source(build_cfg(blocks))


def test_import_embeddings_should_load_written_matrix(tmp_path: Path):
    blocks = disassemble("6003565b00")
    features = featurize_bytecode(blocks, build_cfg(blocks, contract_id="c"))
    path = write_embeddings(tmp_path / "emb.tsv", features)

    loaded = import_embeddings(path, contract_id="c", expected_rows=2)

    np.testing.assert_allclose(loaded.matrix, features.matrix)


@pytest.mark.parametrize(
    "body",
    [
        '{"d_in": 2, "count": 2}\n0\t1,2\n',
        '{"d_in": 2, "count": 1}\n0\t1,2\n0\t3,4\n',
        '{"d_in": 2, "count": 1}\n0\t1\n',
        '{"d_in": 2, "count": 1}\n0\t1,nan\n',
        "not json\n",
    ],
    ids=["missing-row", "duplicate-id", "short-row", "non-finite", "bad-header"],
)
def test_import_embeddings_should_reject_broken_files(tmp_path: Path, body: str):
    path = tmp_path / "emb.tsv"
    path.write_text(body, encoding="utf-8")

    with pytest.raises(EmbeddingImportError):
        import_embeddings(path)


def test_import_embeddings_should_check_graph_row_count(tmp_path: Path):
    path = tmp_path / "emb.tsv"
    path.write_text('{"d_in": 1, "count": 1}\n0\t0.5\n', encoding="utf-8")

    with pytest.raises(EmbeddingImportError):
        import_embeddings(path, expected_rows=3)


def test_write_features_should_round_trip_json(tmp_path: Path):
    blocks = disassemble("600157")
    features = featurize_bytecode(blocks, build_cfg(blocks, contract_id="k"))

    loaded = read_features(write_features(tmp_path / "f.json", features))

    assert loaded.contract_id == "k"
    np.testing.assert_allclose(loaded.matrix, features.matrix)


LOOP_BLOCKS = disassemble("600457005b6001600255600a5b00")
LOOP_GRAPH = build_cfg(LOOP_BLOCKS, contract_id="loop")
BANK = next(r for r in handcrafted_corpus(seed=0) if r.contract_id == "VulnerableBank")
BANK_CSG = build_contract_csg(ingest_ast(json.dumps(BANK.ast)))


def _relabel(graph: ContractGraph, order: list[int]) -> ContractGraph:
    """order[new_id] = old_id；payload 与 temporal_rank 跟着节点走。"""

    new_of = {old: new for new, old in enumerate(order)}
    nodes = tuple(
        GraphNode(new, graph.nodes[old].kind, graph.nodes[old].payload, graph.nodes[old].temporal_rank)
        for new, old in enumerate(order)
    )
    edges = tuple(GraphEdge(new_of[e.src], new_of[e.dst], e.edge_type) for e in graph.edges)
    return ContractGraph(modality=graph.modality, contract_id=graph.contract_id, nodes=nodes, edges=edges)


@settings(max_examples=100, deadline=None)
@given(st.permutations(range(LOOP_GRAPH.node_count)))
def test_featurize_bytecode_should_permute_rows_with_blocks(order):
    original = featurize_bytecode(LOOP_BLOCKS, LOOP_GRAPH)

    permuted = featurize_bytecode(LOOP_BLOCKS, _relabel(LOOP_GRAPH, list(order)))

    np.testing.assert_array_equal(permuted.matrix, original.matrix[list(order)])


@settings(max_examples=100, deadline=None)
@given(st.permutations(range(BANK_CSG.node_count)))
def test_featurize_source_should_permute_rows_with_nodes(order):
    original = featurize_source(BANK_CSG)

    permuted = featurize_source(_relabel(BANK_CSG, list(order)))

    np.testing.assert_array_equal(permuted.matrix, original.matrix[list(order)])
