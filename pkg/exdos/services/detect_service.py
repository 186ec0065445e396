"""仅凭字节码的漏洞检测（部署阶段只用 student，不接触源码侧输入）。"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any

from exdos.nn.checkpoint import params_digest
from exdos.nn.dagn import DagnParams
from exdos.services.dataset_service import LABELS
from exdos.services.distill_trainer_service import bytecode_input, vulnerable_probability
from exdos.services.opcode_table import OpcodeTable
from exdos.services.pattern_engine_service import (
    CHAIN_SIGNATURES,
    PatternAnnotation,
    has_complete_chain,
    match_bytecode_patterns,
)
from exdos.utils.errors import EmptyGraphError


logger = logging.getLogger(__name__)

DECISION_THRESHOLD = 0.5


@dataclass(frozen=True)
class DetectionReport:
    contract_id: str
    probability: float
    label: str
    fired_patterns: tuple[PatternAnnotation, ...]
    complete_chains: tuple[str, ...]
    node_count: int
    edge_count: int
    model_digest: str
    vulnerability: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "contract_id": self.contract_id,
            "vulnerability": self.vulnerability,
            "probability": round(self.probability, 12),
            "label": self.label,
            "threshold": DECISION_THRESHOLD,
            "fired_patterns": [a.to_dict() for a in self.fired_patterns],
            "complete_chains": list(self.complete_chains),
            "graph": {"nodes": self.node_count, "edges": self.edge_count},
            "model_digest": self.model_digest,
        }


def detect(
    bytecode_hex: str,
    student: DagnParams,
    *,
    contract_id: str = "",
    vulnerability: str | None = None,
    radius: int = 2,
    table: OpcodeTable | None = None,
) -> DetectionReport:
    """disasm -> cfg -> featurize -> encode -> predict，再附上字节码侧的子模式命中作为解释。"""

    graph_input, blocks = bytecode_input(bytecode_hex, contract_id=contract_id, table=table)
    if not blocks:
        raise EmptyGraphError("bytecode contains no instructions")

    # 整个合约一张 CFG，图级概率即合约得分
    probability = vulnerable_probability(graph_input, student)
    annotations = [
        a
        for a in match_bytecode_patterns(graph_input.graph, blocks, radius=radius, contract_id=contract_id)
        if a.key_nodes and (vulnerability is None or a.vulnerability == vulnerability)
    ]
    candidates = [vulnerability] if vulnerability is not None else list(CHAIN_SIGNATURES)
    chains = tuple(v for v in candidates if has_complete_chain(annotations, v))
    report = DetectionReport(
        contract_id=contract_id,
        vulnerability=vulnerability,
        probability=probability,
        label=LABELS[int(probability >= DECISION_THRESHOLD)],
        fired_patterns=tuple(sorted(annotations, key=lambda a: (a.vulnerability, a.sub_pattern, a.key_nodes))),
        complete_chains=chains,
        node_count=graph_input.graph.node_count,
        edge_count=len(graph_input.graph.edges),
        model_digest=params_digest(student),
    )
    logger.info(
        "detection finished | contract=%s | probability=%.6f | label=%s | fired=%s",
        contract_id,
        probability,
        report.label,
        len(report.fired_patterns),
    )
    return report
