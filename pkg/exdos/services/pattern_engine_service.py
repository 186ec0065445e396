"""九个专家子模式在两种模态上的匹配。

三类漏洞各三个子模式（顺序即 P1/P2/P3）：
- reentrancy：callValueInvocation / balanceDeduction / enoughBalance
- timestamp：timestampInvocation / timestampAssign / timestampContamination
- infinite-loop：loopStatement / loopCondition / selfInvocation

依赖关系：balanceDeduction、enoughBalance 依赖 callValueInvocation；
timestampAssign、timestampContamination 依赖 timestampInvocation。基模式没命中时依赖模式一律不输出。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import networkx as nx

from exdos.services.ast_document import AstDocument
from exdos.services.cfg_builder_service import is_backward_jump
from exdos.services.contract_graph import BYTECODE, SOURCE, ContractGraph
from exdos.services.csg_builder_service import CONDITION_KINDS, LOOP_KINDS
from exdos.services.evm_disasm_service import BasicBlock
from exdos.utils.errors import ConfigError, InputFormatError


logger = logging.getLogger(__name__)

VULNERABILITIES = ("reentrancy", "timestamp", "infinite-loop")
SUB_PATTERNS: dict[str, tuple[str, str, str]] = {
    "reentrancy": ("callValueInvocation", "balanceDeduction", "enoughBalance"),
    "timestamp": ("timestampInvocation", "timestampAssign", "timestampContamination"),
    "infinite-loop": ("loopStatement", "loopCondition", "selfInvocation"),
}
ALL_SUB_PATTERNS = tuple(p for group in SUB_PATTERNS.values() for p in group)
VULNERABILITY_OF = {p: v for v, group in SUB_PATTERNS.items() for p in group}
DEPENDS_ON = {
    "balanceDeduction": "callValueInvocation",
    "enoughBalance": "callValueInvocation",
    "timestampAssign": "timestampInvocation",
    "timestampContamination": "timestampInvocation",
}
# 判定“漏洞链完整”的子模式组合（任一组合全部命中即可）
CHAIN_SIGNATURES: dict[str, tuple[frozenset[str], ...]] = {
    "reentrancy": (frozenset({"callValueInvocation", "balanceDeduction"}),),
    "timestamp": (frozenset({"timestampInvocation", "timestampContamination"}),),
    "infinite-loop": (frozenset({"loopStatement", "loopCondition"}), frozenset({"selfInvocation"})),
}

CALL_VALUE_OPS = frozenset({"CALL", "CALLVALUE"})
COMPARISON_OPS = frozenset({"LT", "GT", "EQ", "ISZERO"})
TIMESTAMP_OPS = frozenset({"TIMESTAMP", "BLOCKHASH", "NUMBER"})
ASSIGN_OPS = frozenset({"SSTORE", "MSTORE"})
CONTAMINATION_OPS = frozenset(
    {"ADD", "SUB", "MUL", "DIV", "SDIV", "MOD", "SMOD", "EXP", "LT", "GT", "SLT", "SGT", "EQ", "CALL"}
)
EXTERNAL_CALL_OPS = frozenset({"CALL", "DELEGATECALL", "STATICCALL"})
STORAGE_OPS = frozenset({"SSTORE", "SLOAD"})


@dataclass(frozen=True)
class PatternAnnotation:
    contract_id: str
    vulnerability: str
    sub_pattern: str
    modality: str
    key_nodes: tuple[int, ...]
    evidence: tuple[str, ...] = ()

    def to_dict(self) -> dict[str, Any]:
        return {
            "contract_id": self.contract_id,
            "vulnerability": self.vulnerability,
            "sub_pattern": self.sub_pattern,
            "modality": self.modality,
            "key_nodes": list(self.key_nodes),
            "evidence": list(self.evidence),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PatternAnnotation":
        try:
            sub_pattern = str(data["sub_pattern"])
            if sub_pattern not in VULNERABILITY_OF:
                raise ValueError(f"unknown sub-pattern {sub_pattern!r}")
            return cls(
                contract_id=str(data["contract_id"]),
                vulnerability=str(data.get("vulnerability") or VULNERABILITY_OF[sub_pattern]),
                sub_pattern=sub_pattern,
                modality=str(data["modality"]),
                key_nodes=tuple(sorted(int(n) for n in data["key_nodes"])),
                evidence=tuple(str(e) for e in data.get("evidence") or []),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputFormatError(f"invalid annotation record: {exc}") from exc


def annotations_to_dict(annotations: Iterable[PatternAnnotation]) -> list[dict[str, Any]]:
    return [a.to_dict() for a in annotations]


def annotations_from_dict(data: Any) -> list[PatternAnnotation]:
    if not isinstance(data, list):
        raise InputFormatError("annotation file must contain a JSON array")
    return [PatternAnnotation.from_dict(item) for item in data]


class _Collector:
    """按子模式收集 key node 与证据，最后统一做依赖过滤并排序输出。"""

    def __init__(self, *, contract_id: str, modality: str) -> None:
        self._contract_id = contract_id
        self._modality = modality
        self._hits: dict[str, dict[int, list[str]]] = {p: {} for p in ALL_SUB_PATTERNS}

    def add(self, sub_pattern: str, node: int, evidence: str) -> None:
        self._hits[sub_pattern].setdefault(node, []).append(evidence)

    def fired(self, sub_pattern: str) -> bool:
        return bool(self._hits[sub_pattern])

    def finish(self) -> list[PatternAnnotation]:
        out: list[PatternAnnotation] = []
        for vulnerability in VULNERABILITIES:
            for sub_pattern in SUB_PATTERNS[vulnerability]:
                hits = self._hits[sub_pattern]
                base = DEPENDS_ON.get(sub_pattern)
                if not hits or (base is not None and not self._hits[base]):
                    continue
                nodes = tuple(sorted(hits))
                evidence = tuple(e for n in nodes for e in dict.fromkeys(hits[n]))
                out.append(
                    PatternAnnotation(
                        contract_id=self._contract_id,
                        vulnerability=vulnerability,
                        sub_pattern=sub_pattern,
                        modality=self._modality,
                        key_nodes=nodes,
                        evidence=evidence,
                    )
                )
        return out


# ---------------------------------------------------------------------------
# 字节码侧
# ---------------------------------------------------------------------------


def _within(graph: nx.DiGraph, node: int, radius: int) -> list[int]:
    reached = nx.single_source_shortest_path_length(graph, node, cutoff=radius)
    return sorted(n for n in reached if n != node)


def _first(block: BasicBlock, ops: frozenset[str]) -> str:
    for ins in block.instructions:
        if ins.mnemonic in ops:
            return f"{ins.mnemonic}@0x{ins.offset:x}"
    return f"block {block.id}"


def _op_then_jumpi(block: BasicBlock, ops: frozenset[str]) -> bool:
    """块内某个 ops 指令之后（同块、更靠后）出现 JUMPI。"""

    seen = False
    for ins in block.instructions:
        if ins.mnemonic in ops:
            seen = True
        elif ins.mnemonic == "JUMPI" and seen:
            return True
    return False


def _constant_one_before_jumpi(block: BasicBlock) -> bool:
    if block.terminator_kind != "jumpi" or len(block.instructions) < 3:
        return False
    # instructions[-2] 是跳转目标 PUSH，不计入
    return any(ins.is_push and ins.push_value == 1 for ins in block.instructions[:-2])


def _function_entries(graph: ContractGraph, blocks: Sequence[BasicBlock]) -> list[int]:
    entries: set[int] = set()
    for block in blocks:
        if block.terminator_kind == "jumpi" and block.contains("EQ") and any(
            ins.mnemonic == "PUSH4" for ins in block.instructions
        ):
            entries.update(e.dst for e in graph.out_edges(block.id) if e.edge_type == "jump-cond-true")
    return sorted(entries) or ([0] if blocks else [])


def match_bytecode_patterns(
    graph: ContractGraph,
    blocks: Sequence[BasicBlock],
    *,
    radius: int = 2,
    contract_id: str | None = None,
) -> list[PatternAnnotation]:
    """在 CFG 上匹配字节码侧的九个子模式。"""

    graph.require_modality(BYTECODE)
    if len(blocks) != graph.node_count:
        raise InputFormatError(f"block count {len(blocks)} does not match graph node count {graph.node_count}")
    cid = contract_id if contract_id is not None else graph.contract_id
    out = _Collector(contract_id=cid, modality=BYTECODE)
    g = graph.to_networkx()
    rev = g.reverse(copy=False)

    # reentrancy
    for block in blocks:
        if not block.contains(*CALL_VALUE_OPS):
            continue
        anchor = _first(block, CALL_VALUE_OPS)
        out.add("callValueInvocation", block.id, anchor)
        for succ in _within(g, block.id, radius):
            if blocks[succ].contains("SSTORE"):
                out.add("balanceDeduction", succ, f"{_first(blocks[succ], frozenset({'SSTORE'}))} after {anchor}")
        for pred in _within(rev, block.id, radius):
            if _op_then_jumpi(blocks[pred], COMPARISON_OPS):
                out.add("enoughBalance", pred, f"{_first(blocks[pred], COMPARISON_OPS)} guards {anchor}")

    # timestamp
    for block in blocks:
        if not block.contains(*TIMESTAMP_OPS):
            continue
        anchor = _first(block, TIMESTAMP_OPS)
        out.add("timestampInvocation", block.id, anchor)
        for succ in _within(g, block.id, radius):
            if blocks[succ].contains(*ASSIGN_OPS):
                out.add("timestampAssign", succ, f"{_first(blocks[succ], ASSIGN_OPS)} after {anchor}")
            if _op_then_jumpi(blocks[succ], CONTAMINATION_OPS):
                out.add(
                    "timestampContamination",
                    succ,
                    f"{_first(blocks[succ], CONTAMINATION_OPS)} then JUMPI after {anchor}",
                )

    # infinite-loop
    for edge in graph.edges:
        if not is_backward_jump(edge, graph):
            continue
        src, dst = blocks[edge.src], blocks[edge.dst]
        out.add("loopStatement", edge.src, f"back edge 0x{src.end_offset:x} -> 0x{dst.start_offset:x}")
        body = (nx.descendants(g, edge.dst) & nx.ancestors(g, edge.src)) | {edge.src, edge.dst}
        constant = [b for b in sorted(body) if _constant_one_before_jumpi(blocks[b])]
        for b in constant:
            out.add("loopCondition", b, f"PUSH 0x1 before JUMPI@0x{blocks[b].end_offset:x}")
        if not any(blocks[b].contains(*STORAGE_OPS) for b in body):
            out.add("loopCondition", edge.dst, f"no SSTORE/SLOAD in loop at 0x{dst.start_offset:x}")

    entries = _function_entries(graph, blocks)
    for block in blocks:
        if not block.contains(*EXTERNAL_CALL_OPS):
            continue
        ancestors = nx.ancestors(g, block.id)
        reaching = [e for e in entries if e == block.id or e in ancestors] or [0]
        # 任一入口到该块的任一路径上出现 JUMPI 即视为有条件保护
        on_path: set[int] = set()
        for entry in reaching:
            if entry != block.id:
                on_path |= ({entry} | nx.descendants(g, entry)) & ancestors
        guarded = any(blocks[b].terminator_kind == "jumpi" for b in on_path)
        if not guarded:
            out.add("selfInvocation", block.id, f"unguarded {_first(block, EXTERNAL_CALL_OPS)}")

    annotations = out.finish()
    logger.debug("bytecode patterns | contract=%s | fired=%s", cid, [a.sub_pattern for a in annotations])
    return annotations


# ---------------------------------------------------------------------------
# 源码侧
# ---------------------------------------------------------------------------


def _is_statement(node_payload: dict[str, Any]) -> bool:
    return "parent" not in node_payload


def _describe(graph: ContractGraph, node_id: int) -> str:
    node = graph.nodes[node_id]
    return f"{node.kind} '{node.payload.get('label', '')}' in {node.payload.get('function', '')} @{node_id}"


def match_source_patterns(
    graph: ContractGraph,
    doc: AstDocument | None = None,
    *,
    contract_id: str | None = None,
) -> list[PatternAnnotation]:
    """在 CSG 上匹配源码侧的九个子模式（节点 flags 由 csg_builder 预先算好）。"""

    graph.require_modality(SOURCE)
    cid = contract_id if contract_id is not None else graph.contract_id
    out = _Collector(contract_id=cid, modality=SOURCE)
    cf = graph.to_networkx("control-flow")
    df = graph.to_networkx("data-flow")
    nodes = graph.nodes

    def flags(i: int) -> set[str]:
        return set(nodes[i].payload.get("flags") or [])

    statements = [n.id for n in nodes if _is_statement(n.payload)]

    # reentrancy
    calls = [i for i in statements if flags(i) & {"value-call", "low-level-call"}]
    for c in calls:
        out.add("callValueInvocation", c, _describe(graph, c))
        after = nx.descendants(cf, c)
        for n in statements:
            if n > c and n in after and "balance-write" in flags(n):
                out.add("balanceDeduction", n, f"{_describe(graph, n)} after call @{c}")
        before = nx.ancestors(cf, c)
        for n in statements:
            if n < c and n in before and nodes[n].kind in CONDITION_KINDS and "balance-check" in flags(n):
                out.add("enoughBalance", n, f"{_describe(graph, n)} guards call @{c}")

    # timestamp
    for n in nodes:
        if n.kind == "timestamp-read":
            out.add("timestampInvocation", n.id, _describe(graph, n.id))
    assigns = [
        i
        for i in statements
        if "has-timestamp-read" in flags(i)
        and nodes[i].kind not in CONDITION_KINDS
        and (nodes[i].payload.get("defs") or "has-call" in flags(i))
    ]
    for a in assigns:
        out.add("timestampAssign", a, _describe(graph, a))
        for n in sorted(nx.descendants(df, a)):
            if _is_statement(nodes[n].payload):
                out.add("timestampContamination", n, f"{_describe(graph, n)} <- data flow from @{a}")
    for i in statements:
        if nodes[i].kind in CONDITION_KINDS and "has-timestamp-read" in flags(i):
            out.add("timestampContamination", i, f"{_describe(graph, i)} branches on timestamp")

    # infinite-loop
    for i in statements:
        if nodes[i].kind in LOOP_KINDS:
            out.add("loopStatement", i, _describe(graph, i))
            reason = flags(i) & {"constant-condition", "condition-not-updated"}
            if reason:
                out.add("loopCondition", i, f"{_describe(graph, i)} ({', '.join(sorted(reason))})")
        if nodes[i].kind == "self-call" or "self-call" in flags(i):
            guards = [a for a in nx.ancestors(cf, i) if nodes[a].kind in CONDITION_KINDS]
            if not guards:
                out.add("selfInvocation", i, f"unguarded {_describe(graph, i)}")

    annotations = out.finish()
    logger.debug("source patterns | contract=%s | fired=%s", cid, [a.sub_pattern for a in annotations])
    return annotations


# ---------------------------------------------------------------------------
# 子模式组合
# ---------------------------------------------------------------------------


def fired_sub_patterns(annotations: Iterable[PatternAnnotation], vulnerability: str | None = None) -> set[str]:
    return {
        a.sub_pattern
        for a in annotations
        if a.key_nodes and (vulnerability is None or a.vulnerability == vulnerability)
    }


def has_complete_chain(annotations: Iterable[PatternAnnotation], vulnerability: str) -> bool:
    if vulnerability not in CHAIN_SIGNATURES:
        raise ConfigError(f"unknown vulnerability {vulnerability!r}")
    fired = fired_sub_patterns(annotations, vulnerability)
    return any(signature <= fired for signature in CHAIN_SIGNATURES[vulnerability])


def _resolve_name(token: str, vulnerability: str) -> str:
    group = SUB_PATTERNS[vulnerability]
    text = token.strip()
    if text.upper() in {"P1", "P2", "P3"}:
        return group[int(text[1]) - 1]
    if text in group:
        return text
    raise ConfigError(f"sub-pattern {token!r} is not defined for {vulnerability}")


def resolve_pattern_mask(expr: str | None, vulnerability: str) -> frozenset[str]:
    """解析子模式掩码表达式。

    支持：all / none / only:<p> / without:<p> / 逗号分隔列表；<p> 可以写 P1..P3。
    without 去掉基模式时连同依赖它的子模式一起去掉。
    """

    if vulnerability not in SUB_PATTERNS:
        raise ConfigError(f"unknown vulnerability {vulnerability!r}")
    group = SUB_PATTERNS[vulnerability]
    text = str(expr or "all").strip()
    lowered = text.lower()
    if lowered == "all":
        return frozenset(group)
    if lowered == "none":
        return frozenset()
    if lowered.startswith("only:"):
        return frozenset({_resolve_name(text[5:], vulnerability)})
    if lowered.startswith("without:"):
        removed = _resolve_name(text[8:], vulnerability)
        dependents = {p for p, base in DEPENDS_ON.items() if base == removed}
        return frozenset(p for p in group if p != removed and p not in dependents)
    return frozenset(_resolve_name(tok, vulnerability) for tok in text.split(",") if tok.strip())
