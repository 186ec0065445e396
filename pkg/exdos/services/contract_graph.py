"""两种模态共用的图结构（CFG / CSG）。

说明：
- 节点 id 稠密 0..|V|-1，temporal_rank 在图内是全序
- 边类型来自模态自己的封闭词表；模型侧使用统一关系词表（含 self）
- 序列化走 canonical JSON，同样输入得到字节一致的文件
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable

import networkx as nx

from exdos.utils.errors import InputFormatError, WrongModalityError
from exdos.utils.json_io import canonical_dumps


BYTECODE = "bytecode"
SOURCE = "source"
MODALITIES = (SOURCE, BYTECODE)

BYTECODE_EDGE_TYPES = ("fallthrough", "jump-uncond", "jump-cond-true", "jump-cond-false")
SOURCE_EDGE_TYPES = ("control-flow", "data-flow")
EDGE_TYPES_BY_MODALITY = {BYTECODE: BYTECODE_EDGE_TYPES, SOURCE: SOURCE_EDGE_TYPES}

# 模型使用的关系词表：两种模态的边类型 + 自环
RELATION_VOCAB = (*BYTECODE_EDGE_TYPES, *SOURCE_EDGE_TYPES, "self")
RELATION_INDEX = {name: idx for idx, name in enumerate(RELATION_VOCAB)}
SELF_RELATION = RELATION_INDEX["self"]


@dataclass(frozen=True)
class GraphNode:
    id: int
    kind: str
    payload: dict[str, Any]
    temporal_rank: int

    def to_dict(self) -> dict[str, Any]:
        return {"id": self.id, "kind": self.kind, "payload": self.payload, "temporal_rank": self.temporal_rank}


@dataclass(frozen=True)
class GraphEdge:
    src: int
    dst: int
    edge_type: str

    def to_dict(self) -> dict[str, Any]:
        return {"src": self.src, "dst": self.dst, "edge_type": self.edge_type}


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    node: int | None
    offset: int | None
    message: str

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "node": self.node, "offset": self.offset, "message": self.message}


@dataclass(frozen=True)
class ContractGraph:
    modality: str
    contract_id: str
    nodes: tuple[GraphNode, ...]
    edges: tuple[GraphEdge, ...]
    diagnostics: tuple[Diagnostic, ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.modality not in EDGE_TYPES_BY_MODALITY:
            raise InputFormatError(f"unknown modality {self.modality!r}")
        for idx, node in enumerate(self.nodes):
            if node.id != idx:
                raise InputFormatError(f"node ids must be dense: position {idx} has id {node.id}")
        vocab = EDGE_TYPES_BY_MODALITY[self.modality]
        n = len(self.nodes)
        for edge in self.edges:
            if not (0 <= edge.src < n and 0 <= edge.dst < n):
                raise InputFormatError(f"edge endpoint out of range: {edge.src}->{edge.dst}")
            if edge.edge_type not in vocab:
                raise InputFormatError(f"edge type {edge.edge_type!r} not allowed for {self.modality} graphs")

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def require_modality(self, expected: str) -> None:
        if self.modality != expected:
            raise WrongModalityError(expected=expected, found=self.modality)

    def out_edges(self, node_id: int) -> list[GraphEdge]:
        return [e for e in self.edges if e.src == node_id]

    def in_edges(self, node_id: int) -> list[GraphEdge]:
        return [e for e in self.edges if e.dst == node_id]

    def edges_of_type(self, *edge_types: str) -> list[GraphEdge]:
        wanted = set(edge_types)
        return [e for e in self.edges if e.edge_type in wanted]

    def to_networkx(self, *edge_types: str) -> nx.DiGraph:
        """转换为 networkx 有向图（可只保留指定类型的边），用于可达性查询。"""

        wanted = set(edge_types) if edge_types else None
        g = nx.DiGraph()
        g.add_nodes_from(range(self.node_count))
        g.add_edges_from((e.src, e.dst) for e in self.edges if wanted is None or e.edge_type in wanted)
        return g

    def to_dict(self) -> dict[str, Any]:
        return {
            "modality": self.modality,
            "contract_id": self.contract_id,
            "nodes": [n.to_dict() for n in self.nodes],
            "edges": [e.to_dict() for e in self.edges],
            "diagnostics": [d.to_dict() for d in self.diagnostics],
        }


def graph_to_dict(graph: ContractGraph) -> dict[str, Any]:
    return graph.to_dict()


def graph_from_dict(data: Any) -> ContractGraph:
    if not isinstance(data, dict):
        raise InputFormatError("graph JSON must be an object")
    try:
        nodes = tuple(
            GraphNode(
                id=int(n["id"]),
                kind=str(n["kind"]),
                payload=dict(n.get("payload") or {}),
                temporal_rank=int(n["temporal_rank"]),
            )
            for n in data["nodes"]
        )
        edges = tuple(GraphEdge(int(e["src"]), int(e["dst"]), str(e["edge_type"])) for e in data["edges"])
        diagnostics = tuple(
            Diagnostic(
                kind=str(d["kind"]),
                node=d.get("node"),
                offset=d.get("offset"),
                message=str(d.get("message") or ""),
            )
            for d in data.get("diagnostics") or []
        )
        return ContractGraph(
            modality=str(data["modality"]),
            contract_id=str(data.get("contract_id") or ""),
            nodes=nodes,
            edges=edges,
            diagnostics=diagnostics,
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise InputFormatError(f"invalid graph JSON: {exc}") from exc


def serialize_graph(graph: ContractGraph) -> str:
    return canonical_dumps(graph.to_dict())


def relation_ids(edges: Iterable[GraphEdge]) -> list[int]:
    return [RELATION_INDEX[e.edge_type] for e in edges]
