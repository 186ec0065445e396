"""基本块 -> 控制流图 G_f。

跳转目标只识别“JUMP/JUMPI 前紧邻一条 PUSH 常量”的形式；
动态跳转和落在非 JUMPDEST 上的目标只记诊断，不补边。
"""
from __future__ import annotations

import logging
from typing import Sequence

from exdos.services.contract_graph import (
    BYTECODE,
    ContractGraph,
    Diagnostic,
    GraphEdge,
    GraphNode,
)
from exdos.services.evm_disasm_service import BasicBlock


logger = logging.getLogger(__name__)


def _static_target(block: BasicBlock) -> int | None:
    if len(block.instructions) < 2:
        return None
    prev = block.instructions[-2]
    return prev.push_value if prev.is_push else None


def build_cfg(blocks: Sequence[BasicBlock], *, contract_id: str = "") -> ContractGraph:
    """由基本块构建 CFG（节点顺序 = 块顺序 = temporal_rank）。"""

    by_offset = {b.start_offset: b for b in blocks}
    nodes = tuple(
        GraphNode(
            id=b.id,
            kind="basic-block",
            payload={
                "block": b.id,
                "start_offset": b.start_offset,
                "end_offset": b.end_offset,
                "terminator_kind": b.terminator_kind,
            },
            temporal_rank=b.id,
        )
        for b in blocks
    )

    edges: list[GraphEdge] = []
    diagnostics: list[Diagnostic] = []

    for idx, block in enumerate(blocks):
        has_next = idx + 1 < len(blocks)
        kind = block.terminator_kind

        if kind in {"jump", "jumpi"}:
            target = _static_target(block)
            jump_offset = block.instructions[-1].offset
            if target is None:
                diagnostics.append(
                    Diagnostic("unresolved-jump", block.id, jump_offset, "jump target is not a constant push")
                )
            else:
                dest = by_offset.get(target)
                if dest is None or not dest.starts_with_jumpdest:
                    diagnostics.append(
                        Diagnostic(
                            "non-jumpdest-target",
                            block.id,
                            jump_offset,
                            f"jump target 0x{target:x} is not a JUMPDEST",
                        )
                    )
                else:
                    edge_type = "jump-uncond" if kind == "jump" else "jump-cond-true"
                    edges.append(GraphEdge(block.id, dest.id, edge_type))
            if kind == "jumpi" and has_next:
                edges.append(GraphEdge(block.id, blocks[idx + 1].id, "jump-cond-false"))
        elif kind == "fallthrough" and has_next:
            edges.append(GraphEdge(block.id, blocks[idx + 1].id, "fallthrough"))

    if diagnostics:
        logger.warning(
            "cfg built with diagnostics | contract=%s | unresolved=%s",
            contract_id,
            len(diagnostics),
        )
    logger.debug("cfg built | contract=%s | nodes=%s | edges=%s", contract_id, len(nodes), len(edges))

    return ContractGraph(
        modality=BYTECODE,
        contract_id=contract_id,
        nodes=nodes,
        edges=tuple(edges),
        diagnostics=tuple(diagnostics),
    )


def is_backward_jump(edge: GraphEdge, graph: ContractGraph) -> bool:
    """目的块起始偏移 <= 源块起始偏移 即视为回跳。"""

    graph.require_modality(BYTECODE)
    src = graph.nodes[edge.src].payload["start_offset"]
    dst = graph.nodes[edge.dst].payload["start_offset"]
    return dst <= src
