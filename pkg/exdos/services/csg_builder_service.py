"""compact AST -> 代码语义图 G_s（CSG）。

节点粒度：
- 每条语句一个节点；if/for/while 的条件各一个节点
- 语句里出现调用、比较或时间戳读取时，再为其中每个变量出现位置建一个 variable / timestamp-read 节点
- 引用了不存在声明的标识符建 unknown-ref 节点并记诊断

边：
- control-flow：语句顺序与分支结构，循环体尾部回到条件节点；do-while 的条件排在循环体之后，由条件回到循环体首节点
- data-flow：变量最近一次定义 -> 后续使用

temporal_rank 是执行布局下的前序位置（修饰器按占位符内联，for 的步进表达式排在循环体之后），
节点 id 与 rank 相同。
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any

from exdos.services.ast_document import (
    COMPARISON_OPERATORS,
    AstDocument,
    CallInfo,
    classify_call,
    function_display_name,
    is_timestamp_read,
    iter_nodes,
    lvalue_base,
    render,
)
from exdos.services.contract_graph import SOURCE, ContractGraph, Diagnostic, GraphEdge, GraphNode
from exdos.utils.errors import InputFormatError


logger = logging.getLogger(__name__)

SOURCE_NODE_KINDS = (
    "statement",
    "declaration",
    "assignment",
    "return",
    "external-call",
    "internal-call",
    "self-call",
    "if",
    "for",
    "while",
    "require",
    "variable",
    "timestamp-read",
    "emit",
    "revert",
    "unknown-ref",
)
CONDITION_KINDS = frozenset({"if", "for", "while", "require"})
LOOP_KINDS = frozenset({"for", "while"})


@dataclass
class _ExprFacts:
    calls: list[CallInfo] = field(default_factory=list)
    timestamp_reads: list[dict[str, Any]] = field(default_factory=list)
    occurrences: list[tuple[str, dict[str, Any]]] = field(default_factory=list)
    defs: set[int] = field(default_factory=set)
    uses: list[int] = field(default_factory=list)
    has_comparison: bool = False
    balance_check: bool = False
    has_assignment: bool = False

    def use(self, symbol: int) -> None:
        if symbol not in self.uses:
            self.uses.append(symbol)

    @property
    def external(self) -> bool:
        return any(c.is_external for c in self.calls)

    @property
    def self_call(self) -> bool:
        return any(c.category == "self" for c in self.calls)

    def flags(self, balance_ids: set[int]) -> list[str]:
        out: set[str] = set()
        if any(c.category in {"low-level", "transfer", "external", "self", "internal"} for c in self.calls):
            out.add("has-call")
        if self.external:
            out.add("external-call")
        if any(c.category == "low-level" for c in self.calls):
            out.add("low-level-call")
        if any(c.value and c.category in {"low-level", "external"} for c in self.calls):
            out.add("value-call")
        if self.self_call:
            out.add("self-call")
        if self.timestamp_reads:
            out.add("has-timestamp-read")
        if self.has_comparison:
            out.add("has-comparison")
        if self.balance_check:
            out.add("balance-check")
        if self.has_assignment:
            out.add("has-assignment")
        if self.defs & balance_ids:
            out.add("balance-write")
        return sorted(out)


@dataclass
class _LoopFrame:
    breaks: list[int] = field(default_factory=list)
    continues: list[int] = field(default_factory=list)


class _FunctionGraphBuilder:
    """单个函数的 CSG 构建器（一次性使用）。"""

    def __init__(self, doc: AstDocument, function: dict[str, Any], *, contract: dict[str, Any] | None) -> None:
        self._doc = doc
        self._function = function
        self._function_name = function_display_name(function)
        self._balance_ids = doc.balance_like_ids(contract) if contract else set()
        self._nodes: list[dict[str, Any]] = []
        self._cf: set[tuple[int, int]] = set()
        self._diagnostics: list[Diagnostic] = []
        self._loops: list[_LoopFrame] = []
        self._modifier_depth = 0

    # -- 节点 / 边 -----------------------------------------------------------

    def _add_node(self, kind: str, ast: dict[str, Any], *, label: str, **payload: Any) -> int:
        node_id = len(self._nodes)
        self._nodes.append(
            {
                "kind": kind,
                "payload": {
                    "ast_id": ast.get("id"),
                    "src": ast.get("src"),
                    "function": self._function_name,
                    "label": label,
                    "defs": [],
                    "uses": [],
                    "flags": [],
                    **payload,
                },
            }
        )
        return node_id

    def _link(self, preds: list[int], target: int) -> None:
        for p in preds:
            self._cf.add((p, target))

    # -- 表达式分析 ---------------------------------------------------------

    def _is_variable_ref(self, ident: dict[str, Any]) -> bool:
        ref = ident.get("referencedDeclaration")
        return ref is not None and int(ref) >= 0 and self._doc.is_variable(ref)

    def _is_unresolved(self, ident: dict[str, Any]) -> bool:
        ref = ident.get("referencedDeclaration")
        return ref is not None and int(ref) >= 0 and self._doc.node(ref) is None

    def _analyze(self, *exprs: Any) -> _ExprFacts:
        facts = _ExprFacts()
        pure_defs: set[int] = set()  # 仅作为 "=" 左值出现的标识符节点 id

        for root in exprs:
            if not isinstance(root, dict):
                continue
            for node in iter_nodes(root):
                node_type = node.get("nodeType")
                if node_type == "Assignment":
                    facts.has_assignment = True
                    base = lvalue_base(node.get("leftHandSide") or {})
                    if base is not None and self._is_variable_ref(base):
                        facts.defs.add(int(base["referencedDeclaration"]))
                        if node.get("operator") == "=":
                            pure_defs.add(int(base.get("id", -1)))
                elif node_type == "UnaryOperation" and node.get("operator") in {"++", "--", "delete"}:
                    facts.has_assignment = True
                    base = lvalue_base(node.get("subExpression") or {})
                    if base is not None and self._is_variable_ref(base):
                        facts.defs.add(int(base["referencedDeclaration"]))
                        if node.get("operator") == "delete":
                            pure_defs.add(int(base.get("id", -1)))
                elif node_type == "BinaryOperation" and node.get("operator") in COMPARISON_OPERATORS:
                    facts.has_comparison = True
                    if self._mentions_balance(node):
                        facts.balance_check = True
                elif node_type == "FunctionCall":
                    facts.calls.append(classify_call(node, function=self._function, doc=self._doc))

                if is_timestamp_read(node):
                    facts.timestamp_reads.append(node)
                    facts.occurrences.append(("timestamp-read", node))
                elif node_type == "Identifier":
                    if self._is_unresolved(node):
                        facts.occurrences.append(("unknown-ref", node))
                    elif self._is_variable_ref(node):
                        read = int(node.get("id", -1)) not in pure_defs
                        if read:
                            facts.use(int(node["referencedDeclaration"]))
                        facts.occurrences.append(("variable" if read else "variable-def", node))
        return facts

    def _mentions_balance(self, expr: dict[str, Any]) -> bool:
        for node in iter_nodes(expr):
            if node.get("nodeType") == "MemberAccess" and node.get("memberName") == "balance":
                return True
            if node.get("nodeType") == "Identifier":
                ref = node.get("referencedDeclaration")
                if ref is not None and int(ref) in self._balance_ids:
                    return True
        return False

    def _emit(self, kind: str, ast: dict[str, Any], facts: _ExprFacts, *, label: str, extra_flags: tuple[str, ...] = ()) -> int:
        node_id = self._add_node(kind, ast, label=label)
        payload = self._nodes[node_id]["payload"]
        payload["defs"] = sorted(facts.defs)
        payload["uses"] = list(facts.uses)
        payload["flags"] = sorted(set(facts.flags(self._balance_ids)) | set(extra_flags))
        self._emit_occurrences(node_id, facts)
        return node_id

    def _emit_occurrences(self, parent: int, facts: _ExprFacts) -> None:
        flags = self._nodes[parent]["payload"]["flags"]
        relevant = bool({"has-call", "has-comparison", "has-timestamp-read"} & set(flags))
        for occ_kind, ast in facts.occurrences:
            if occ_kind == "unknown-ref":
                occ = self._add_node(
                    "unknown-ref",
                    ast,
                    label=str(ast.get("name") or ""),
                    parent=parent,
                    flags=[],
                )
                self._diagnostics.append(
                    Diagnostic(
                        "unresolved-identifier",
                        occ,
                        None,
                        f"identifier {ast.get('name')!r} references unknown declaration {ast.get('referencedDeclaration')}",
                    )
                )
                logger.warning(
                    "unresolved identifier | function=%s | name=%s | ref=%s",
                    self._function_name,
                    ast.get("name"),
                    ast.get("referencedDeclaration"),
                )
            elif not relevant:
                continue
            elif occ_kind == "timestamp-read":
                occ = self._add_node(
                    "timestamp-read",
                    ast,
                    label=render(ast),
                    parent=parent,
                    flags=["has-timestamp-read"],
                )
            else:
                symbol = int(ast["referencedDeclaration"])
                occ = self._add_node(
                    "variable",
                    ast,
                    label=str(ast.get("name") or ""),
                    parent=parent,
                    symbol=symbol,
                    uses=[symbol] if occ_kind == "variable" else [],
                    flags=["balance-like"] if symbol in self._balance_ids else [],
                )
            self._cf.add((parent, occ))

    # -- 语句 ---------------------------------------------------------------

    def _statement_kind(self, stmt: dict[str, Any], facts: _ExprFacts) -> str:
        node_type = stmt.get("nodeType")
        top = stmt.get("expression") if node_type == "ExpressionStatement" else None
        top_call = (
            classify_call(top, function=self._function, doc=self._doc)
            if isinstance(top, dict) and top.get("nodeType") == "FunctionCall"
            else None
        )
        if facts.external:
            return "external-call"
        if facts.self_call:
            return "self-call"
        if node_type == "Return":
            return "return"
        if node_type == "EmitStatement":
            return "emit"
        if node_type == "RevertStatement" or (top_call is not None and top_call.category == "revert"):
            return "revert"
        if top_call is not None and top_call.category == "guard":
            return "require"
        if node_type == "VariableDeclarationStatement":
            return "declaration"
        if facts.has_assignment:
            return "assignment"
        if any(c.category == "internal" for c in facts.calls):
            return "internal-call"
        return "statement"

    def _simple(self, stmt: dict[str, Any], preds: list[int]) -> tuple[int, str]:
        node_type = stmt.get("nodeType")
        if node_type == "VariableDeclarationStatement":
            facts = self._analyze(stmt.get("initialValue"))
            for decl in stmt.get("declarations") or []:
                if isinstance(decl, dict) and decl.get("id") is not None:
                    facts.defs.add(int(decl["id"]))
            if stmt.get("initialValue") is not None:
                facts.has_assignment = True
        elif node_type == "ExpressionStatement":
            facts = self._analyze(stmt.get("expression"))
        elif node_type == "Return":
            facts = self._analyze(stmt.get("expression"))
        elif node_type == "EmitStatement":
            facts = self._analyze(stmt.get("eventCall"))
        elif node_type == "RevertStatement":
            facts = self._analyze(stmt.get("errorCall"))
        else:
            facts = _ExprFacts()
        kind = self._statement_kind(stmt, facts)
        node_id = self._emit(kind, stmt, facts, label=render(stmt))
        self._link(preds, node_id)
        return node_id, kind

    def _condition(self, kind: str, stmt: dict[str, Any], cond: Any, preds: list[int]) -> int:
        facts = self._analyze(cond)
        extra: tuple[str, ...] = ()
        if kind in LOOP_KINDS and _is_constant_true(cond):
            extra = ("constant-condition",)
        label = render(cond) if isinstance(cond, dict) else "true"
        node_id = self._emit(kind, stmt, facts, label=label, extra_flags=extra)
        self._link(preds, node_id)
        return node_id

    def _visit(self, stmt: Any, preds: list[int]) -> list[int]:
        if not isinstance(stmt, dict):
            return preds
        node_type = stmt.get("nodeType")

        if node_type in {"Block", "UncheckedBlock"}:
            for child in stmt.get("statements") or []:
                preds = self._visit(child, preds)
            return preds

        if node_type == "PlaceholderStatement":
            return self._visit_placeholder(preds)

        if node_type == "IfStatement":
            cond = self._condition("if", stmt, stmt.get("condition"), preds)
            true_exits = self._visit(stmt.get("trueBody"), [cond])
            false_body = stmt.get("falseBody")
            false_exits = self._visit(false_body, [cond]) if false_body else [cond]
            return true_exits + false_exits

        if node_type == "DoWhileStatement":
            # 循环体先执行，条件排在循环体之后，条件 -> 循环体首节点为回边
            frame = _LoopFrame()
            self._loops.append(frame)
            first_body = len(self._nodes)
            body_exits = self._visit(stmt.get("body"), preds)
            self._loops.pop()
            cond = self._condition("while", stmt, stmt.get("condition"), body_exits + frame.continues)
            self._cf.add((cond, first_body if first_body < cond else cond))
            self._mark_loop_condition(cond, first_body)
            return [cond] + frame.breaks

        if node_type == "WhileStatement":
            cond = self._condition("while", stmt, stmt.get("condition"), preds)
            frame = _LoopFrame()
            self._loops.append(frame)
            first_body = len(self._nodes)
            body_exits = self._visit(stmt.get("body"), [cond])
            self._loops.pop()
            for tail in body_exits + frame.continues:
                self._cf.add((tail, cond))
            self._mark_loop_condition(cond, first_body)
            return [cond] + frame.breaks

        if node_type == "ForLoop":
            init = stmt.get("initializationExpression")
            if isinstance(init, dict):
                preds = [self._simple(init, preds)[0]]
            cond = self._condition("for", stmt, stmt.get("condition"), preds)
            frame = _LoopFrame()
            self._loops.append(frame)
            first_body = len(self._nodes)
            body_exits = self._visit(stmt.get("body"), [cond])
            self._loops.pop()
            tails = body_exits + frame.continues
            step = stmt.get("loopExpression")
            if isinstance(step, dict):
                step_id, _ = self._simple(step, tails)
                tails = [step_id]
            for tail in tails:
                self._cf.add((tail, cond))
            self._mark_loop_condition(cond, first_body)
            return [cond] + frame.breaks

        if node_type == "Break":
            node_id, _ = self._simple(stmt, preds)
            if self._loops:
                self._loops[-1].breaks.append(node_id)
            return []

        if node_type == "Continue":
            node_id, _ = self._simple(stmt, preds)
            if self._loops:
                self._loops[-1].continues.append(node_id)
            return []

        node_id, kind = self._simple(stmt, preds)
        if node_type == "Return" or kind == "revert":
            return []
        return [node_id]

    def _mark_loop_condition(self, cond: int, first_body: int) -> None:
        """条件里用到的变量在循环体（含步进表达式）里从未被重新定义时打标。"""

        payload = self._nodes[cond]["payload"]
        cond_uses = set(payload["uses"])
        body_defs: set[int] = set()
        for node in self._nodes[first_body:]:
            body_defs.update(node["payload"]["defs"])
        if cond_uses and not (cond_uses & body_defs):
            payload["flags"] = sorted(set(payload["flags"]) | {"condition-not-updated"})

    # -- 修饰器内联 ---------------------------------------------------------

    def _modifier_bodies(self) -> list[dict[str, Any]]:
        bodies: list[dict[str, Any]] = []
        for inv in self._function.get("modifiers") or []:
            name = inv.get("modifierName") or {}
            target = self._doc.node(name.get("referencedDeclaration"))
            if target and target.get("nodeType") == "ModifierDefinition" and isinstance(target.get("body"), dict):
                bodies.append(target["body"])
        return bodies

    def _visit_placeholder(self, preds: list[int]) -> list[int]:
        self._modifier_depth += 1
        try:
            return self._visit_frame(self._modifier_depth, preds)
        finally:
            self._modifier_depth -= 1

    def _visit_frame(self, depth: int, preds: list[int]) -> list[int]:
        bodies = self._modifier_bodies()
        if depth < len(bodies):
            return self._visit(bodies[depth], preds)
        return self._visit(self._function.get("body"), preds)

    # -- 输出 ---------------------------------------------------------------

    def build(self) -> tuple[list[dict[str, Any]], list[tuple[int, int, str]], list[Diagnostic]]:
        self._visit_frame(0, [])

        edges: set[tuple[int, int, str]] = {(s, d, "control-flow") for s, d in self._cf}
        last_def: dict[int, int] = {}
        for node_id, node in enumerate(self._nodes):
            for symbol in node["payload"]["uses"]:
                if symbol in last_def:
                    edges.add((last_def[symbol], node_id, "data-flow"))
            for symbol in node["payload"]["defs"]:
                last_def[symbol] = node_id
        return self._nodes, sorted(edges), self._diagnostics


def _is_constant_true(cond: Any) -> bool:
    if cond is None:
        return True
    return (
        isinstance(cond, dict)
        and cond.get("nodeType") == "Literal"
        and cond.get("kind") == "bool"
        and str(cond.get("value")) == "true"
    )


def _assemble(
    parts: list[tuple[list[dict[str, Any]], list[tuple[int, int, str]], list[Diagnostic]]],
    *,
    contract_id: str,
) -> ContractGraph:
    nodes: list[GraphNode] = []
    edges: list[GraphEdge] = []
    diagnostics: list[Diagnostic] = []
    for raw_nodes, raw_edges, raw_diags in parts:
        shift = len(nodes)
        for idx, raw in enumerate(raw_nodes):
            payload = dict(raw["payload"])
            if "parent" in payload:
                payload["parent"] = int(payload["parent"]) + shift
            nodes.append(GraphNode(id=shift + idx, kind=raw["kind"], payload=payload, temporal_rank=shift + idx))
        edges.extend(GraphEdge(s + shift, d + shift, t) for s, d, t in raw_edges)
        diagnostics.extend(
            Diagnostic(d.kind, None if d.node is None else d.node + shift, d.offset, d.message) for d in raw_diags
        )
    return ContractGraph(
        modality=SOURCE,
        contract_id=contract_id,
        nodes=tuple(nodes),
        edges=tuple(edges),
        diagnostics=tuple(diagnostics),
    )


def build_csg(doc: AstDocument, function_name: str) -> ContractGraph:
    """构建单个函数的 CSG；function_name 可写成 "Contract.fn"。"""

    function = doc.find_function(function_name)
    contract = doc.contract_of(int(function["id"]))
    contract_name = str((contract or {}).get("name") or "")
    part = _FunctionGraphBuilder(doc, function, contract=contract).build()
    graph = _assemble([part], contract_id=f"{contract_name}.{function_display_name(function)}")
    logger.debug("csg built | function=%s | nodes=%s | edges=%s", function_name, graph.node_count, len(graph.edges))
    return graph


def build_contract_csg(doc: AstDocument, contract_name: str | None = None) -> ContractGraph:
    """合约级 CSG：按源码顺序把各函数图做不相交并（rank 依次拼接）。"""

    contract = doc.contract(contract_name)
    if contract is None:
        raise InputFormatError(f"contract not found in AST: {contract_name or '<any>'}")
    parts = [
        _FunctionGraphBuilder(doc, fn, contract=contract).build()
        for fn in contract.get("nodes") or []
        if fn.get("nodeType") == "FunctionDefinition" and isinstance(fn.get("body"), dict)
    ]
    graph = _assemble(parts, contract_id=str(contract.get("name") or ""))
    logger.debug(
        "contract csg built | contract=%s | functions=%s | nodes=%s",
        graph.contract_id,
        len(parts),
        graph.node_count,
    )
    return graph
