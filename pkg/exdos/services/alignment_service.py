"""跨模态对齐字典 D^C：源码 key node <-> 字节码 key node。

规则：同一子模式下，两侧 key node 按 temporal rank（= 节点 id）排序后逐个配对；
多出来的节点不配对，单独放进 unpaired 报告。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from exdos.services.contract_graph import BYTECODE, SOURCE
from exdos.services.pattern_engine_service import ALL_SUB_PATTERNS, PatternAnnotation
from exdos.utils.errors import AlignmentError, InputFormatError


logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class AlignedPair:
    source_node: int
    bytecode_node: int
    sub_pattern: str

    def to_dict(self) -> dict[str, Any]:
        return {"source_node": self.source_node, "bytecode_node": self.bytecode_node, "sub_pattern": self.sub_pattern}


@dataclass(frozen=True)
class UnpairedReport:
    sub_pattern: str
    modality: str
    nodes: tuple[int, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"sub_pattern": self.sub_pattern, "modality": self.modality, "nodes": list(self.nodes)}


@dataclass(frozen=True)
class AlignmentDictionary:
    contract_id: str
    pairs: tuple[AlignedPair, ...] = ()
    unpaired: tuple[UnpairedReport, ...] = field(default=(), compare=False)

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def is_empty(self) -> bool:
        return not self.pairs

    def source_indices(self) -> list[int]:
        return [p.source_node for p in self.pairs]

    def bytecode_indices(self) -> list[int]:
        return [p.bytecode_node for p in self.pairs]

    def to_dict(self) -> dict[str, Any]:
        return {
            "contract_id": self.contract_id,
            "pairs": [p.to_dict() for p in self.pairs],
            "unpaired": [u.to_dict() for u in self.unpaired],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AlignmentDictionary":
        try:
            return cls(
                contract_id=str(data["contract_id"]),
                pairs=tuple(
                    AlignedPair(int(p["source_node"]), int(p["bytecode_node"]), str(p["sub_pattern"]))
                    for p in data.get("pairs") or []
                ),
                unpaired=tuple(
                    UnpairedReport(str(u["sub_pattern"]), str(u["modality"]), tuple(int(n) for n in u["nodes"]))
                    for u in data.get("unpaired") or []
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputFormatError(f"invalid alignment dictionary: {exc}") from exc


def _nodes_by_pattern(annotations: Iterable[PatternAnnotation], modality: str) -> dict[str, list[int]]:
    grouped: dict[str, set[int]] = {}
    for ann in annotations:
        if ann.modality != modality:
            raise AlignmentError(f"expected {modality} annotations, found {ann.modality}")
        grouped.setdefault(ann.sub_pattern, set()).update(ann.key_nodes)
    return {p: sorted(nodes) for p, nodes in grouped.items()}


def _single_contract(annotations: Sequence[PatternAnnotation]) -> str | None:
    ids = {a.contract_id for a in annotations}
    if len(ids) > 1:
        raise AlignmentError(f"annotations mix several contracts: {sorted(ids)}")
    return next(iter(ids), None)


def build_dictionary(
    src_ann: Sequence[PatternAnnotation],
    byt_ann: Sequence[PatternAnnotation],
    *,
    contract_id: str | None = None,
) -> AlignmentDictionary:
    """按子模式贪心配对两侧 key node。"""

    src_id = _single_contract(src_ann)
    byt_id = _single_contract(byt_ann)
    if src_id is not None and byt_id is not None and src_id != byt_id:
        raise AlignmentError(f"contract id mismatch: source {src_id!r} vs bytecode {byt_id!r}")
    cid = contract_id or src_id or byt_id or ""

    src_nodes = _nodes_by_pattern(src_ann, SOURCE)
    byt_nodes = _nodes_by_pattern(byt_ann, BYTECODE)

    pairs: list[AlignedPair] = []
    unpaired: list[UnpairedReport] = []
    for sub_pattern in ALL_SUB_PATTERNS:
        s = src_nodes.get(sub_pattern, [])
        b = byt_nodes.get(sub_pattern, [])
        k = min(len(s), len(b))
        pairs.extend(AlignedPair(s[i], b[i], sub_pattern) for i in range(k))
        if len(s) > k:
            unpaired.append(UnpairedReport(sub_pattern, SOURCE, tuple(s[k:])))
        if len(b) > k:
            unpaired.append(UnpairedReport(sub_pattern, BYTECODE, tuple(b[k:])))

    logger.debug("alignment built | contract=%s | pairs=%s | unpaired=%s", cid, len(pairs), len(unpaired))
    return AlignmentDictionary(contract_id=cid, pairs=tuple(pairs), unpaired=tuple(unpaired))


def filter_dictionary(dictionary: AlignmentDictionary, mask: Iterable[str]) -> AlignmentDictionary:
    """只保留掩码内子模式的配对（消融实验用）。"""

    enabled = set(mask)
    return AlignmentDictionary(
        contract_id=dictionary.contract_id,
        pairs=tuple(p for p in dictionary.pairs if p.sub_pattern in enabled),
        unpaired=tuple(u for u in dictionary.unpaired if u.sub_pattern in enabled),
    )
