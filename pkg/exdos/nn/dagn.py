"""DAGN：关系感知注意力 GNN 编码器 + 注意力图池化（AGP）+ MLP 分类头。

teacher（源码图）与 student（字节码图）共用同一结构，只是参数不同。

单层更新（每条边含自环，消息沿边方向流向 dst）：
    q = v_src W_q,  k = [v_dst ; r] W_k,  m = [v_src ; r] W_m
    alpha = segment_softmax_dst(q·k / sqrt(d))
    v_dst <- tanh((Σ alpha m) W_v + b_v)
池化：beta = softmax(tanh(V W + b) w)，g = Σ beta_i v_i
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Any, Iterable

import numpy as np

from exdos.nn import autodiff as ad
from exdos.nn.autodiff import Tensor
from exdos.services.contract_graph import RELATION_INDEX, RELATION_VOCAB, SELF_RELATION, ContractGraph
from exdos.utils.errors import ConfigError, EmptyGraphError, ShapeError


logger = logging.getLogger(__name__)

POOLING_VARIANTS = ("agp", "avg", "max", "power")
PARAM_GROUPS = ("encoder", "pooling", "head")
POWER_EXPONENT_FLOOR = 1e-3
NUM_CLASSES = 2


@dataclass(frozen=True)
class DagnConfig:
    d_in: int = 22
    hidden_dim: int = 128
    num_layers: int = 2
    relation_dim: int = 16
    head_hidden: int = 64
    pooling: str = "agp"
    relations: tuple[str, ...] = RELATION_VOCAB

    def __post_init__(self) -> None:
        if self.pooling not in POOLING_VARIANTS:
            raise ConfigError(f"pooling must be one of {POOLING_VARIANTS}, got {self.pooling!r}")
        if min(self.d_in, self.hidden_dim, self.relation_dim, self.head_hidden) <= 0 or self.num_layers < 0:
            raise ConfigError("DAGN dimensions must be positive")

    def to_dict(self) -> dict[str, Any]:
        data = asdict(self)
        data["relations"] = list(self.relations)
        return data


@dataclass
class DagnParams:
    """全部可学习参数（按 encoder / pooling / head 分组）。"""

    config: DagnConfig
    tensors: dict[str, Tensor]
    seed: int = 0
    # power 指数被钳制的次数
    clamp_events: int = field(default=0, compare=False)

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    @staticmethod
    def group_of(name: str) -> str:
        if name.startswith("pool."):
            return "pooling"
        if name.startswith("head."):
            return "head"
        return "encoder"

    def names(self, groups: Iterable[str] | None = None) -> list[str]:
        wanted = set(groups) if groups is not None else set(PARAM_GROUPS)
        unknown = wanted - set(PARAM_GROUPS)
        if unknown:
            raise ConfigError(f"unknown parameter groups {sorted(unknown)}")
        return [n for n in self.tensors if self.group_of(n) in wanted]

    def parameters(self, groups: Iterable[str] | None = None) -> list[Tensor]:
        return [self.tensors[n] for n in self.names(groups)]

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def clone(self) -> "DagnParams":
        return DagnParams(
            config=self.config,
            tensors={n: Tensor(t.data.copy(), requires_grad=True, name=n) for n, t in self.tensors.items()},
            seed=self.seed,
        )

    def snapshot(self) -> dict[str, np.ndarray]:
        return {n: t.data.copy() for n, t in self.tensors.items()}


@dataclass
class GraphEmbedding:
    node_states: Tensor
    graph_vector: Tensor
    attention: list[np.ndarray] = field(default_factory=list)
    pool_weights: np.ndarray | None = None


def _uniform(rng: np.random.Generator, rows: int, cols: int) -> np.ndarray:
    bound = 1.0 / math.sqrt(rows)
    return rng.uniform(-bound, bound, size=(rows, cols))


def init_params(config: DagnConfig, *, seed: int) -> DagnParams:
    """uniform(±1/sqrt(fan_in)) 初始化，偏置为 0，power 指数为 1.0。"""

    rng = np.random.default_rng(seed)
    d, d_r, h = config.hidden_dim, config.relation_dim, config.head_hidden
    arrays: dict[str, np.ndarray] = {
        "input_proj.W": _uniform(rng, config.d_in, d),
        "relation_table": _uniform(rng, len(config.relations), d_r),
    }
    for layer in range(config.num_layers):
        prefix = f"layers.{layer}"
        arrays[f"{prefix}.W_q"] = _uniform(rng, d, d)
        arrays[f"{prefix}.W_k"] = _uniform(rng, d + d_r, d)
        arrays[f"{prefix}.W_m"] = _uniform(rng, d + d_r, d)
        arrays[f"{prefix}.W_v"] = _uniform(rng, d, d)
        arrays[f"{prefix}.b_v"] = np.zeros(d)
    arrays["pool.W"] = _uniform(rng, d, d)
    arrays["pool.b"] = np.zeros(d)
    arrays["pool.w"] = _uniform(rng, d, 1)
    arrays["pool.p"] = np.ones((1, 1))
    arrays["head.W1"] = _uniform(rng, d, h)
    arrays["head.b1"] = np.zeros(h)
    arrays["head.W2"] = _uniform(rng, h, NUM_CLASSES)
    arrays["head.b2"] = np.zeros(NUM_CLASSES)
    tensors = {name: Tensor(value, requires_grad=True, name=name) for name, value in arrays.items()}
    return DagnParams(config=config, tensors=tensors, seed=seed)


def edge_index(graph: ContractGraph, relations: tuple[str, ...] = RELATION_VOCAB) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(src, dst, relation) 三个数组：图中所有边 + 每个节点一条 self 自环。"""

    if relations != RELATION_VOCAB:
        index = {name: i for i, name in enumerate(relations)}
        self_rel = index["self"]
    else:
        index, self_rel = RELATION_INDEX, SELF_RELATION
    src = [e.src for e in graph.edges] + list(range(graph.node_count))
    dst = [e.dst for e in graph.edges] + list(range(graph.node_count))
    try:
        rel = [index[e.edge_type] for e in graph.edges] + [self_rel] * graph.node_count
    except KeyError as exc:
        raise ConfigError(f"edge type {exc.args[0]!r} is outside the relation vocabulary") from exc
    return np.asarray(src, dtype=np.int64), np.asarray(dst, dtype=np.int64), np.asarray(rel, dtype=np.int64)


def encode_nodes(
    features: np.ndarray,
    edges: tuple[np.ndarray, np.ndarray, np.ndarray],
    params: DagnParams,
) -> tuple[Tensor, list[np.ndarray]]:
    cfg = params.config
    n = features.shape[0]
    if n == 0:
        raise EmptyGraphError("graph has no nodes to encode")
    if features.ndim != 2 or features.shape[1] != cfg.d_in:
        raise ShapeError("encode (features vs input projection)", tuple(features.shape), (n, cfg.d_in))
    src, dst, rel = edges

    x = Tensor(features)
    v = ad.matmul(x, params["input_proj.W"])
    r = ad.index_rows(params["relation_table"], rel)
    inv_sqrt_d = 1.0 / math.sqrt(cfg.hidden_dim)
    attention: list[np.ndarray] = []
    for layer in range(cfg.num_layers):
        prefix = f"layers.{layer}"
        v_src = ad.index_rows(v, src)
        v_dst = ad.index_rows(v, dst)
        q = ad.matmul(v_src, params[f"{prefix}.W_q"])
        k = ad.matmul(ad.concat([v_dst, r], axis=1), params[f"{prefix}.W_k"])
        m = ad.matmul(ad.concat([v_src, r], axis=1), params[f"{prefix}.W_m"])
        logits = ad.scale(ad.row_sum(ad.mul(q, k)), inv_sqrt_d)
        alpha = ad.segment_softmax(logits, dst, n)
        attention.append(alpha.data[:, 0].copy())
        agg = ad.segment_sum(ad.mul(m, alpha), dst, n)
        v = ad.tanh(ad.add(ad.matmul(agg, params[f"{prefix}.W_v"]), params[f"{prefix}.b_v"]))
    return v, attention


def _clamp_power(params: DagnParams) -> Tensor:
    p = params["pool.p"]
    if float(p.data.reshape(-1)[0]) <= 0.0:
        p.data[...] = POWER_EXPONENT_FLOOR
        params.clamp_events += 1
        logger.warning("power pooling exponent clamped | floor=%s | events=%s", POWER_EXPONENT_FLOOR, params.clamp_events)
    return p


def pool_variant(node_states: Tensor, params: DagnParams, variant: str | None = None) -> tuple[Tensor, np.ndarray | None]:
    """图级读出：agp / avg / max / power，返回 (1, d) 向量以及 AGP 权重。"""

    kind = variant or params.config.pooling
    if node_states.shape[0] == 0:
        raise EmptyGraphError("cannot pool an empty node set")
    if kind == "agp":
        hidden = ad.tanh(ad.add(ad.matmul(node_states, params["pool.W"]), params["pool.b"]))
        beta = ad.softmax(ad.matmul(hidden, params["pool.w"]), axis=0)
        return ad.sum(ad.mul(node_states, beta), axis=0), beta.data[:, 0].copy()
    if kind == "avg":
        return ad.mean(node_states, axis=0), None
    if kind == "max":
        return ad.reduce_max(node_states, axis=0), None
    if kind == "power":
        p = _clamp_power(params)
        pooled = ad.mean(ad.signed_power(node_states, p), axis=0)
        return ad.signed_power(pooled, ad.reciprocal(p)), None
    raise ConfigError(f"unknown pooling variant {kind!r}")


def encode(graph: ContractGraph, features: Any, params: DagnParams) -> GraphEmbedding:
    """图 + 节点特征 -> GraphEmbedding（节点状态与图向量）。"""

    matrix = np.asarray(getattr(features, "matrix", features), dtype=np.float64)
    if matrix.shape[0] != graph.node_count:
        raise ShapeError("encode (feature rows vs graph nodes)", tuple(matrix.shape), (graph.node_count,))
    if graph.node_count == 0:
        raise EmptyGraphError(f"graph {graph.contract_id!r} has no nodes")
    states, attention = encode_nodes(matrix, edge_index(graph, params.config.relations), params)
    vector, weights = pool_variant(states, params)
    return GraphEmbedding(node_states=states, graph_vector=vector, attention=attention, pool_weights=weights)


def head_logits(graph_vector: Tensor, params: DagnParams) -> Tensor:
    hidden = ad.tanh(ad.add(ad.matmul(graph_vector, params["head.W1"]), params["head.b1"]))
    return ad.add(ad.matmul(hidden, params["head.W2"]), params["head.b2"])


def predict(graph_vector: Tensor, params: DagnParams) -> Tensor:
    """MLP + softmax，输出 (1, 2) 概率：[normal, vulnerable]。"""

    return ad.softmax(head_logits(graph_vector, params), axis=1)


def clone_params(params: DagnParams) -> DagnParams:
    """深拷贝参数（student 初始化、阶段之间传递时使用）。"""

    return params.clone()
