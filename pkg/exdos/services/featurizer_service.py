"""节点初始特征 v^(0)。

两种模态都输出 d_in = 22 维，保证 teacher / student 共用同一输入投影尺寸。
需要更强的块表示时，可以用 import_embeddings 导入外部工具算好的向量。
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from exdos.services.contract_graph import BYTECODE, MODALITIES, SOURCE, ContractGraph
from exdos.services.csg_builder_service import SOURCE_NODE_KINDS
from exdos.services.evm_disasm_service import BasicBlock
from exdos.utils.errors import EmbeddingImportError, InputFormatError
from exdos.utils.json_io import read_json, write_json


logger = logging.getLogger(__name__)

FEATURE_DIM = 22

OPCODE_CATEGORIES = ("arithmetic", "comparison", "memory", "storage", "call-family", "jump-family", "push", "other")
_CATEGORY_OF: dict[str, str] = {}
for _name in (
    "ADD", "MUL", "SUB", "DIV", "SDIV", "MOD", "SMOD", "ADDMOD", "MULMOD", "EXP", "SIGNEXTEND",
    "AND", "OR", "XOR", "NOT", "BYTE", "SHL", "SHR", "SAR",
):
    _CATEGORY_OF[_name] = "arithmetic"
for _name in ("LT", "GT", "SLT", "SGT", "EQ", "ISZERO"):
    _CATEGORY_OF[_name] = "comparison"
for _name in ("MLOAD", "MSTORE", "MSTORE8", "MSIZE", "CALLDATACOPY", "CODECOPY", "RETURNDATACOPY", "EXTCODECOPY", "MCOPY"):
    _CATEGORY_OF[_name] = "memory"
for _name in ("SLOAD", "SSTORE", "TLOAD", "TSTORE"):
    _CATEGORY_OF[_name] = "storage"
for _name in ("CALL", "CALLCODE", "DELEGATECALL", "STATICCALL", "CREATE", "CREATE2", "SELFDESTRUCT"):
    _CATEGORY_OF[_name] = "call-family"
for _name in ("JUMP", "JUMPI", "JUMPDEST", "PC"):
    _CATEGORY_OF[_name] = "jump-family"

TERMINATOR_ORDER = ("jump", "jumpi", "stop", "return", "revert", "selfdestruct", "invalid", "fallthrough")
BYTECODE_BITS = ("SSTORE", "SLOAD", "CALL", "TIMESTAMP")

# 哑变量编码：unknown-ref 作为参照类（全零）
SOURCE_KIND_SLOTS = tuple(k for k in SOURCE_NODE_KINDS if k != "unknown-ref")
SOURCE_BITS = ("has-call", "has-timestamp-read", "has-comparison", "has-assignment")


@dataclass(frozen=True)
class NodeFeatures:
    contract_id: str
    modality: str
    matrix: np.ndarray

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2:
            raise InputFormatError(f"feature matrix must be 2-D, got shape {self.matrix.shape}")
        if not np.all(np.isfinite(self.matrix)):
            raise InputFormatError("feature matrix contains non-finite values")

    @property
    def d_in(self) -> int:
        return int(self.matrix.shape[1])

    @property
    def rows(self) -> int:
        return int(self.matrix.shape[0])

    def to_dict(self) -> dict[str, Any]:
        return {
            "contract_id": self.contract_id,
            "modality": self.modality,
            "d_in": self.d_in,
            "matrix": self.matrix.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "NodeFeatures":
        try:
            d_in = int(data["d_in"])
            matrix = np.asarray(data["matrix"], dtype=np.float64).reshape(-1, d_in)
            return cls(contract_id=str(data["contract_id"]), modality=str(data["modality"]), matrix=matrix)
        except (KeyError, TypeError, ValueError) as exc:
            raise InputFormatError(f"invalid feature file: {exc}") from exc


def _rank_fraction(rank: int, count: int) -> float:
    return rank / (count - 1) if count > 1 else 0.0


def block_vector(block: BasicBlock, *, rank: int, count: int) -> np.ndarray:
    vec = np.zeros(FEATURE_DIM, dtype=np.float64)
    length = len(block.instructions)
    if length:
        for ins in block.instructions:
            category = "push" if ins.is_push else _CATEGORY_OF.get(ins.mnemonic, "other")
            vec[OPCODE_CATEGORIES.index(category)] += 1.0
        vec[:8] /= length
    vec[8] = math.log1p(length)
    vec[9 + TERMINATOR_ORDER.index(block.terminator_kind)] = 1.0
    for i, op in enumerate(BYTECODE_BITS):
        vec[17 + i] = 1.0 if block.contains(op) else 0.0
    vec[21] = _rank_fraction(rank, count)
    return vec


def featurize_bytecode(blocks: Sequence[BasicBlock], graph: ContractGraph) -> NodeFeatures:
    graph.require_modality(BYTECODE)
    count = graph.node_count
    matrix = np.zeros((count, FEATURE_DIM), dtype=np.float64)
    for node in graph.nodes:
        block = blocks[int(node.payload["block"])]
        matrix[node.id] = block_vector(block, rank=node.temporal_rank, count=count)
    return NodeFeatures(contract_id=graph.contract_id, modality=BYTECODE, matrix=matrix)


def featurize_source(graph: ContractGraph, doc: Any = None) -> NodeFeatures:
    """源码节点特征（doc 目前不参与计算，节点 flags 已在构图时算好）。"""

    graph.require_modality(SOURCE)
    count = graph.node_count
    in_deg = np.zeros(count)
    out_deg = np.zeros(count)
    for edge in graph.edges:
        out_deg[edge.src] += 1
        in_deg[edge.dst] += 1

    matrix = np.zeros((count, FEATURE_DIM), dtype=np.float64)
    slots = len(SOURCE_KIND_SLOTS)
    for node in graph.nodes:
        row = matrix[node.id]
        if node.kind in SOURCE_KIND_SLOTS:
            row[SOURCE_KIND_SLOTS.index(node.kind)] = 1.0
        row[slots] = math.log1p(in_deg[node.id])
        row[slots + 1] = math.log1p(out_deg[node.id])
        flags = set(node.payload.get("flags") or [])
        for i, bit in enumerate(SOURCE_BITS):
            row[slots + 2 + i] = 1.0 if bit in flags else 0.0
        row[slots + 6] = _rank_fraction(node.temporal_rank, count)
    return NodeFeatures(contract_id=graph.contract_id, modality=SOURCE, matrix=matrix)


def import_embeddings(
    path: str | Path,
    *,
    contract_id: str = "",
    modality: str = BYTECODE,
    expected_rows: int | None = None,
) -> NodeFeatures:
    """读取外部嵌入文件：首行 JSON 头 {d_in, count}，之后每行 `id<TAB>v1,...,vd`。"""

    if modality not in MODALITIES:
        raise EmbeddingImportError(f"unknown modality {modality!r}")
    source = Path(path)
    try:
        lines = source.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError as exc:
        raise EmbeddingImportError(f"embedding file not found: {source}") from exc
    if not lines:
        raise EmbeddingImportError("embedding file is empty")

    try:
        header = json.loads(lines[0])
        d_in = int(header["d_in"])
        count = int(header["count"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise EmbeddingImportError(f"invalid embedding header: {lines[0]!r}") from exc
    if d_in <= 0 or count < 0:
        raise EmbeddingImportError(f"invalid embedding header values d_in={d_in} count={count}")
    if expected_rows is not None and count != expected_rows:
        raise EmbeddingImportError(f"embedding count {count} does not match graph node count {expected_rows}")

    matrix = np.full((count, d_in), np.nan, dtype=np.float64)
    seen: set[int] = set()
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            raw_id, raw_values = line.split("\t", 1)
            node_id = int(raw_id)
            values = [float(v) for v in raw_values.split(",")]
        except ValueError as exc:
            raise EmbeddingImportError(f"malformed embedding line {lineno}") from exc
        if not 0 <= node_id < count:
            raise EmbeddingImportError(f"node id {node_id} out of range on line {lineno}")
        if node_id in seen:
            raise EmbeddingImportError(f"duplicate node id {node_id} on line {lineno}")
        if len(values) != d_in:
            raise EmbeddingImportError(f"line {lineno} has {len(values)} values, expected {d_in}")
        if not all(math.isfinite(v) for v in values):
            raise EmbeddingImportError(f"non-finite value on line {lineno}")
        matrix[node_id] = values
        seen.add(node_id)

    missing = sorted(set(range(count)) - seen)
    if missing:
        raise EmbeddingImportError(f"missing embeddings for node ids {missing[:10]}")
    logger.info("embeddings imported | path=%s | rows=%s | d_in=%s", str(source), count, d_in)
    return NodeFeatures(contract_id=contract_id, modality=modality, matrix=matrix)


def write_embeddings(path: str | Path, features: NodeFeatures) -> Path:
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    lines = [json.dumps({"count": features.rows, "d_in": features.d_in}, sort_keys=True)]
    for idx, row in enumerate(features.matrix):
        lines.append(f"{idx}\t" + ",".join(repr(float(v)) for v in row))
    target.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return target


def write_features(path: str | Path, features: NodeFeatures) -> Path:
    return write_json(path, features.to_dict())


def read_features(path: str | Path) -> NodeFeatures:
    data = read_json(path)
    if not isinstance(data, dict):
        raise InputFormatError("feature file must contain a JSON object")
    return NodeFeatures.from_dict(data)
