from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exdos.nn import autodiff as ad
from exdos.nn.autodiff import numeric_gradient
from exdos.nn.checkpoint import checkpoint_dict, load_checkpoint, params_digest, params_from_dict, save_checkpoint
from exdos.nn.dagn import (
    POOLING_VARIANTS,
    POWER_EXPONENT_FLOOR,
    DagnConfig,
    edge_index,
    encode,
    head_logits,
    init_params,
    pool_variant,
    predict,
)
from exdos.nn.optim import Adam
from exdos.services.cfg_builder_service import build_cfg
from exdos.services.contract_graph import BYTECODE, BYTECODE_EDGE_TYPES, ContractGraph, GraphEdge, GraphNode
from exdos.services.evm_disasm_service import disassemble
from exdos.services.featurizer_service import featurize_bytecode
from exdos.utils.errors import ConfigError, EmptyGraphError, InputFormatError, ShapeError


TARGET = np.array([[0.0, 1.0]])


def _small_config(pooling: str = "agp") -> DagnConfig:
    return DagnConfig(d_in=22, hidden_dim=6, num_layers=2, relation_dim=3, head_hidden=4, pooling=pooling)


def _graph_and_features():
    blocks = disassemble("600457005b6001600255600a5b00")
    graph = build_cfg(blocks, contract_id="g")
    return graph, featurize_bytecode(blocks, graph)


def _loss(graph, features, params):
    return ad.cross_entropy_with_softmax(head_logits(encode(graph, features, params).graph_vector, params), TARGET)


def test_init_params_should_be_reproducible_for_a_seed():
    first = init_params(_small_config(), seed=11).snapshot()
    second = init_params(_small_config(), seed=11).snapshot()
    other = init_params(_small_config(), seed=12).snapshot()

    assert all(np.array_equal(first[n], second[n]) for n in first)
    assert not np.array_equal(first["input_proj.W"], other["input_proj.W"])
    assert first["pool.p"].tolist() == [[1.0]]


def test_edge_index_should_add_one_self_loop_per_node():
    graph, _ = _graph_and_features()

    src, dst, rel = edge_index(graph)

    assert len(src) == len(graph.edges) + graph.node_count
    assert src[-graph.node_count:].tolist() == list(range(graph.node_count))
    assert dst[-graph.node_count:].tolist() == list(range(graph.node_count))


def test_encode_should_return_graph_vector_and_normalised_weights():
    graph, features = _graph_and_features()
    params = init_params(_small_config(), seed=1)

    embedding = encode(graph, features, params)
    probs = predict(embedding.graph_vector, params)

    assert embedding.node_states.shape == (graph.node_count, 6)
    assert embedding.graph_vector.shape == (1, 6)
    assert embedding.pool_weights.sum() == pytest.approx(1.0)
    assert len(embedding.attention) == 2
    assert probs.data.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("pooling", ["agp", "avg", "max", "power"])
def test_dagn_gradients_should_match_finite_differences(pooling: str):
    graph, features = _graph_and_features()
    params = init_params(_small_config(pooling), seed=5)

    params.zero_grad()
    _loss(graph, features, params).backward()

    for name in params.names():
        tensor = params[name]
        numeric = numeric_gradient(lambda: _loss(graph, features, params), tensor)
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7, err_msg=name)


def test_power_pooling_should_clamp_non_positive_exponent():
    graph, features = _graph_and_features()
    params = init_params(_small_config("power"), seed=2)
    params["pool.p"].data[...] = -0.5

    encode(graph, features, params)

    assert params["pool.p"].data.item() == POWER_EXPONENT_FLOOR
    assert params.clamp_events == 1


def test_pool_variant_should_reject_unknown_kind():
    params = init_params(_small_config(), seed=0)

    with pytest.raises(ConfigError):
        pool_variant(ad.Tensor(np.ones((2, 6))), params, "median")
    with pytest.raises(ConfigError):
        DagnConfig(pooling="median")


def test_encode_should_reject_mismatched_or_empty_inputs():
    graph, features = _graph_and_features()
    params = init_params(_small_config(), seed=0)
    empty = ContractGraph(modality=BYTECODE, contract_id="e", nodes=(), edges=())

    with pytest.raises(ShapeError):
        encode(graph, features.matrix[:1], params)
    with pytest.raises(ShapeError):
        encode(graph, np.zeros((graph.node_count, 5)), params)
    with pytest.raises(EmptyGraphError):
        encode(empty, np.zeros((0, 22)), params)


def test_adam_should_leave_frozen_groups_untouched():
    graph, features = _graph_and_features()
    params = init_params(_small_config(), seed=4)
    before = params.snapshot()
    optimizer = Adam(params, lr=1e-2, groups=["head"])

    optimizer.zero_grad()
    _loss(graph, features, params).backward()
    optimizer.step()
    after = params.snapshot()

    assert optimizer.trainable == ["head.W1", "head.b1", "head.W2", "head.b2"]
    assert np.array_equal(before["input_proj.W"], after["input_proj.W"])
    assert np.array_equal(before["pool.W"], after["pool.W"])
    assert not np.array_equal(before["head.W2"], after["head.W2"])


def test_adam_should_reduce_loss_on_a_single_graph():
    graph, features = _graph_and_features()
    params = init_params(_small_config(), seed=4)
    optimizer = Adam(params, lr=1e-2)
    start = _loss(graph, features, params).item()

    for _ in range(30):
        optimizer.zero_grad()
        _loss(graph, features, params).backward()
        optimizer.step()

    assert _loss(graph, features, params).item() < start


def test_checkpoint_should_reload_bit_exact(tmp_path: Path):
    params = init_params(_small_config(), seed=9)

    path = save_checkpoint(params, tmp_path / "model.json", role="student")
    loaded = load_checkpoint(path)

    assert params_digest(loaded) == params_digest(params)
    assert loaded.config == params.config
    assert loaded.seed == 9


def test_params_from_dict_should_reject_unknown_version():
    data = checkpoint_dict(init_params(_small_config(), seed=0))
    data["manifest"]["version"] = 99

    with pytest.raises(InputFormatError):
        params_from_dict(data)


RANDOM_D_IN = 4


def _tiny_config(pooling: str) -> DagnConfig:
    return DagnConfig(d_in=RANDOM_D_IN, hidden_dim=3, num_layers=2, relation_dim=2, head_hidden=3, pooling=pooling)


def _random_graph(seed: int) -> tuple[ContractGraph, np.ndarray]:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 9))
    nodes = tuple(GraphNode(i, "block", {"block": i}, i) for i in range(n))
    raw = {
        (int(rng.integers(0, n)), int(rng.integers(0, n)), BYTECODE_EDGE_TYPES[int(rng.integers(0, len(BYTECODE_EDGE_TYPES)))])
        for _ in range(int(rng.integers(0, 2 * n + 1)))
    }
    edges = tuple(GraphEdge(s, d, t) for s, d, t in sorted(raw))
    graph = ContractGraph(modality=BYTECODE, contract_id=f"random-{seed}", nodes=nodes, edges=edges)
    return graph, rng.uniform(-1.0, 1.0, size=(n, RANDOM_D_IN))


def _relabel(graph: ContractGraph, order: list[int]) -> ContractGraph:
    """order[new_id] = old_id。"""

    new_of = {old: new for new, old in enumerate(order)}
    nodes = tuple(
        GraphNode(new, graph.nodes[old].kind, graph.nodes[old].payload, graph.nodes[old].temporal_rank)
        for new, old in enumerate(order)
    )
    edges = tuple(GraphEdge(new_of[e.src], new_of[e.dst], e.edge_type) for e in graph.edges)
    return ContractGraph(modality=graph.modality, contract_id=graph.contract_id, nodes=nodes, edges=edges)


@pytest.mark.parametrize("seed", range(100))
def test_dagn_gradients_should_match_finite_differences_on_random_graphs(seed: int):
    graph, features = _random_graph(seed)
    params = init_params(_tiny_config(POOLING_VARIANTS[seed % len(POOLING_VARIANTS)]), seed=seed)

    params.zero_grad()
    _loss(graph, features, params).backward()

    for name in params.names():
        tensor = params[name]
        numeric = numeric_gradient(lambda: _loss(graph, features, params), tensor)
        analytic = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        np.testing.assert_allclose(analytic, numeric, rtol=1e-4, atol=1e-7, err_msg=name)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**16), pooling=st.sampled_from(POOLING_VARIANTS))
def test_encode_should_be_invariant_to_node_relabeling(seed: int, pooling: str):
    graph, features = _random_graph(seed)
    params = init_params(_tiny_config(pooling), seed=seed)
    order = [int(i) for i in np.random.default_rng(seed + 1).permutation(graph.node_count)]

    original = encode(graph, features, params)
    relabeled = encode(_relabel(graph, order), features[order], params)

    np.testing.assert_allclose(relabeled.node_states.data, original.node_states.data[order], atol=1e-9)
    np.testing.assert_allclose(relabeled.graph_vector.data, original.graph_vector.data, atol=1e-9)
