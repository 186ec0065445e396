"""Solidity 编译器 compact AST 的读取与查询。

说明：
- 只接受 compact AST（根节点 nodeType=SourceUnit），或 standard-JSON 输出里的 sources 包装
- 旧版 name/children 形式的 AST 明确报 unsupported schema（legacy）
- 表达式分析（调用分类、时间戳读取、比较运算等）集中放在这里，CSG 构建和模式匹配共用
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Iterator

from exdos.utils.errors import InputFormatError, UnsupportedSchemaError


logger = logging.getLogger(__name__)

COMPARISON_OPERATORS = frozenset({"<", ">", "<=", ">=", "==", "!="})
LOW_LEVEL_MEMBERS = frozenset({"call", "delegatecall", "staticcall"})
TRANSFER_MEMBERS = frozenset({"send", "transfer"})
GUARD_FUNCTIONS = frozenset({"require", "assert"})
TIMESTAMP_MEMBERS = frozenset({"timestamp", "number"})


@dataclass(frozen=True)
class FunctionRef:
    contract: str
    name: str
    id: int
    kind: str

    @property
    def qualified_name(self) -> str:
        return f"{self.contract}.{self.name}"


@dataclass
class AstDocument:
    """索引后的 AST（按节点 id 查询）。"""

    raw: dict[str, Any]
    source_unit_id: str
    index: dict[int, dict[str, Any]] = field(default_factory=dict)

    def node(self, node_id: int | None) -> dict[str, Any] | None:
        if node_id is None:
            return None
        return self.index.get(int(node_id))

    def contracts(self) -> list[dict[str, Any]]:
        return [n for n in self.raw.get("nodes") or [] if n.get("nodeType") == "ContractDefinition"]

    def contract(self, name: str | None = None) -> dict[str, Any] | None:
        """按名字取合约；不给名字时取第一个有函数定义的 contract。"""

        candidates = self.contracts()
        if name is not None:
            return next((c for c in candidates if c.get("name") == name), None)
        for c in candidates:
            if c.get("contractKind", "contract") == "contract" and _function_nodes(c):
                return c
        return candidates[0] if candidates else None

    def list_functions(self) -> list[FunctionRef]:
        out: list[FunctionRef] = []
        for c in self.contracts():
            for fn in _function_nodes(c):
                out.append(
                    FunctionRef(
                        contract=str(c.get("name") or ""),
                        name=function_display_name(fn),
                        id=int(fn["id"]),
                        kind=str(fn.get("kind") or "function"),
                    )
                )
        return out

    def find_function(self, function_name: str) -> dict[str, Any]:
        contract_name, _, bare = function_name.rpartition(".")
        for ref in self.list_functions():
            if ref.name == bare and (not contract_name or ref.contract == contract_name):
                return self.index[ref.id]
        raise InputFormatError(f"function not found in AST: {function_name}")

    def contract_of(self, node_id: int) -> dict[str, Any] | None:
        for c in self.contracts():
            if any(int(n.get("id", -1)) == node_id for n in iter_nodes(c)):
                return c
        return None

    def state_variables(self, contract: dict[str, Any]) -> list[dict[str, Any]]:
        return [
            n
            for n in contract.get("nodes") or []
            if n.get("nodeType") == "VariableDeclaration" and n.get("stateVariable")
        ]

    def balance_like_ids(self, contract: dict[str, Any]) -> set[int]:
        return {int(v["id"]) for v in self.state_variables(contract) if is_balance_like(v)}

    def is_variable(self, node_id: int | None) -> bool:
        target = self.node(node_id)
        return bool(target) and target.get("nodeType") == "VariableDeclaration"


def function_display_name(fn: dict[str, Any]) -> str:
    return str(fn.get("name") or fn.get("kind") or "function")


def _function_nodes(contract: dict[str, Any]) -> list[dict[str, Any]]:
    return [n for n in contract.get("nodes") or [] if n.get("nodeType") == "FunctionDefinition"]


def iter_nodes(tree: Any) -> Iterator[dict[str, Any]]:
    """深度优先遍历 AST 中所有带 nodeType 的字典（按字段出现顺序）。"""

    stack = [tree]
    while stack:
        item = stack.pop()
        if isinstance(item, dict):
            if "nodeType" in item:
                yield item
            children = [v for v in item.values() if isinstance(v, (dict, list))]
            stack.extend(reversed(children))
        elif isinstance(item, list):
            stack.extend(reversed(item))


def _select_root(data: Any) -> dict[str, Any]:
    if not isinstance(data, dict) or not data:
        raise UnsupportedSchemaError("unknown")
    if "sources" in data and isinstance(data["sources"], dict):
        for entry in data["sources"].values():
            if isinstance(entry, dict):
                ast = entry.get("ast") or entry.get("AST")
                if isinstance(ast, dict):
                    return _select_root(ast)
                if isinstance(entry.get("legacyAST"), dict):
                    raise UnsupportedSchemaError("legacy")
        raise UnsupportedSchemaError("unknown")
    if data.get("nodeType") == "SourceUnit":
        return data
    if "name" in data and "children" in data:
        raise UnsupportedSchemaError("legacy")
    node_type = data.get("nodeType")
    raise UnsupportedSchemaError(f"nodeType:{node_type}" if node_type else "unknown")


def ingest_ast(json_text: str) -> AstDocument:
    """解析 compact AST 文本并建立 id 索引。"""

    try:
        data = json.loads(json_text)
    except json.JSONDecodeError as exc:
        raise InputFormatError(f"AST is not valid JSON: {exc.msg} at line {exc.lineno}") from exc

    root = _select_root(data)
    index: dict[int, dict[str, Any]] = {}
    for node in iter_nodes(root):
        raw_id = node.get("id")
        if raw_id is None:
            continue
        node_id = int(raw_id)
        if node_id in index:
            raise InputFormatError(f"duplicate AST node id {node_id}")
        index[node_id] = node

    unit_id = str(root.get("absolutePath") or root.get("id") or "")
    doc = AstDocument(raw=root, source_unit_id=unit_id, index=index)
    logger.debug("ast ingested | unit=%s | nodes=%s | functions=%s", unit_id, len(index), len(doc.list_functions()))
    return doc


# ---------------------------------------------------------------------------
# 表达式分析
# ---------------------------------------------------------------------------


def type_string(node: dict[str, Any] | None) -> str:
    if not node:
        return ""
    desc = node.get("typeDescriptions") or {}
    return str(desc.get("typeString") or "")


def is_balance_like(var: dict[str, Any]) -> bool:
    """余额类状态变量：整数、映射到整数，或名字里带 balance。"""

    if "balance" in str(var.get("name") or "").lower():
        return True
    ts = type_string(var)
    if not ts:
        type_name = var.get("typeName") or {}
        ts = type_string(type_name) or str(type_name.get("name") or "")
    ts = ts.replace(" ", "")
    if ts.startswith("mapping("):
        value_type = ts.rsplit("=>", 1)[-1].rstrip(")")
        return value_type.startswith(("uint", "int"))
    return ts.startswith(("uint", "int"))


def is_timestamp_read(expr: dict[str, Any]) -> bool:
    node_type = expr.get("nodeType")
    if node_type == "MemberAccess" and expr.get("memberName") in TIMESTAMP_MEMBERS:
        base = expr.get("expression") or {}
        return base.get("nodeType") == "Identifier" and base.get("name") == "block"
    if node_type == "Identifier" and expr.get("name") == "now":
        ref = expr.get("referencedDeclaration")
        return ref is None or int(ref) < 0
    return False


def callee_of(call: dict[str, Any]) -> dict[str, Any]:
    """剥掉 {value: ...} 选项和旧式 .value(x) 包装，返回真正被调用的表达式。"""

    expr = call.get("expression") or {}
    while True:
        if expr.get("nodeType") == "FunctionCallOptions":
            expr = expr.get("expression") or {}
            continue
        if (
            expr.get("nodeType") == "FunctionCall"
            and (expr.get("expression") or {}).get("nodeType") == "MemberAccess"
            and (expr.get("expression") or {}).get("memberName") in {"value", "gas"}
        ):
            expr = (expr.get("expression") or {}).get("expression") or {}
            continue
        if expr.get("nodeType") == "MemberAccess" and expr.get("memberName") in {"value", "gas"}:
            inner = expr.get("expression") or {}
            if inner.get("nodeType") == "MemberAccess" and inner.get("memberName") in LOW_LEVEL_MEMBERS:
                expr = inner
                continue
        return expr


def has_value_option(call: dict[str, Any]) -> bool:
    expr = call.get("expression") or {}
    while True:
        node_type = expr.get("nodeType")
        if node_type == "FunctionCallOptions":
            if "value" in (expr.get("names") or []):
                return True
            expr = expr.get("expression") or {}
        elif node_type == "FunctionCall":
            inner = expr.get("expression") or {}
            if inner.get("nodeType") == "MemberAccess" and inner.get("memberName") == "value":
                return True
            expr = inner
        elif node_type == "MemberAccess" and expr.get("memberName") == "value":
            return True
        else:
            return False


@dataclass(frozen=True)
class CallInfo:
    """一次函数调用的分类结果。"""

    category: str  # guard / revert / low-level / transfer / external / self / internal / other
    member: str = ""
    value: bool = False

    @property
    def is_external(self) -> bool:
        return self.category in {"low-level", "transfer", "external"}


def classify_call(call: dict[str, Any], *, function: dict[str, Any], doc: AstDocument) -> CallInfo:
    kind = call.get("kind")
    if kind in {"typeConversion", "structConstructorCall"}:
        return CallInfo("other")
    # 旧式 x.call.value(v) 这一层本身也是 FunctionCall，外层才是真正的调用
    inner = call.get("expression") or {}
    if inner.get("nodeType") == "MemberAccess" and inner.get("memberName") in {"value", "gas"}:
        base = inner.get("expression") or {}
        if base.get("nodeType") == "MemberAccess" and base.get("memberName") in LOW_LEVEL_MEMBERS:
            return CallInfo("other")

    callee = callee_of(call)
    value = has_value_option(call)
    node_type = callee.get("nodeType")
    if node_type == "Identifier":
        name = str(callee.get("name") or "")
        ref = callee.get("referencedDeclaration")
        if name in GUARD_FUNCTIONS and (ref is None or int(ref) < 0):
            return CallInfo("guard", name)
        if name == "revert" and (ref is None or int(ref) < 0):
            return CallInfo("revert", name)
        if ref is not None and int(ref) == int(function.get("id", -2)):
            return CallInfo("self", name)
        target = doc.node(ref)
        if target and target.get("nodeType") == "FunctionDefinition":
            return CallInfo("internal", name)
        return CallInfo("other", name)
    if node_type == "MemberAccess":
        member = str(callee.get("memberName") or "")
        base = callee.get("expression") or {}
        if member in LOW_LEVEL_MEMBERS:
            return CallInfo("low-level", member, value)
        if member in TRANSFER_MEMBERS and type_string(base).startswith("address"):
            return CallInfo("transfer", member, True)
        if member in TRANSFER_MEMBERS and not type_string(base):
            return CallInfo("transfer", member, True)
        if base.get("nodeType") == "Identifier" and base.get("name") == "this":
            ref = callee.get("referencedDeclaration")
            if member == function.get("name") or (ref is not None and int(ref) == int(function.get("id", -2))):
                return CallInfo("self", member, value)
            return CallInfo("external", member, value)
        if type_string(base).startswith("contract "):
            return CallInfo("external", member, value)
        return CallInfo("other", member)
    return CallInfo("other")


def lvalue_base(expr: dict[str, Any]) -> dict[str, Any] | None:
    """赋值左值的根标识符（穿过下标与成员访问）。"""

    while expr:
        node_type = expr.get("nodeType")
        if node_type == "Identifier":
            return expr
        if node_type == "IndexAccess":
            expr = expr.get("baseExpression") or {}
        elif node_type == "MemberAccess":
            expr = expr.get("expression") or {}
        else:
            return None
    return None


def render(expr: Any, limit: int = 96) -> str:
    text = _render(expr)
    return text if len(text) <= limit else text[: limit - 3] + "..."


def _render(expr: Any) -> str:
    if not isinstance(expr, dict):
        return ""
    t = expr.get("nodeType")
    if t == "Identifier":
        return str(expr.get("name") or "")
    if t == "Literal":
        value = expr.get("value")
        if expr.get("kind") == "string":
            return json.dumps(value if value is not None else "")
        return str(value if value is not None else expr.get("hexValue") or "")
    if t == "MemberAccess":
        return f"{_render(expr.get('expression'))}.{expr.get('memberName')}"
    if t == "IndexAccess":
        return f"{_render(expr.get('baseExpression'))}[{_render(expr.get('indexExpression'))}]"
    if t == "BinaryOperation":
        return f"{_render(expr.get('leftExpression'))} {expr.get('operator')} {_render(expr.get('rightExpression'))}"
    if t == "UnaryOperation":
        op = str(expr.get("operator") or "")
        sub = _render(expr.get("subExpression"))
        sep = " " if op == "delete" else ""
        return f"{op}{sep}{sub}" if expr.get("prefix", True) else f"{sub}{op}"
    if t == "Assignment":
        return f"{_render(expr.get('leftHandSide'))} {expr.get('operator')} {_render(expr.get('rightHandSide'))}"
    if t == "FunctionCall":
        args = ", ".join(_render(a) for a in expr.get("arguments") or [])
        return f"{_render(expr.get('expression'))}({args})"
    if t == "FunctionCallOptions":
        opts = ", ".join(
            f"{n}: {_render(v)}" for n, v in zip(expr.get("names") or [], expr.get("options") or [])
        )
        return f"{_render(expr.get('expression'))}{{{opts}}}"
    if t == "TupleExpression":
        return "(" + ", ".join(_render(c) for c in expr.get("components") or []) + ")"
    if t == "Conditional":
        return f"{_render(expr.get('condition'))} ? {_render(expr.get('trueExpression'))} : {_render(expr.get('falseExpression'))}"
    if t == "ElementaryTypeNameExpression":
        type_name = expr.get("typeName")
        return str(type_name.get("name") if isinstance(type_name, dict) else type_name or "")
    if t == "NewExpression":
        return "new"
    if t == "VariableDeclarationStatement":
        names = ", ".join(str(d.get("name") or "") for d in expr.get("declarations") or [] if d)
        init = expr.get("initialValue")
        return f"{names} = {_render(init)}" if init else names
    if t == "ExpressionStatement":
        return _render(expr.get("expression"))
    if t == "Return":
        inner = expr.get("expression")
        return f"return {_render(inner)}" if inner else "return"
    if t == "EmitStatement":
        return f"emit {_render(expr.get('eventCall'))}"
    if t == "RevertStatement":
        return f"revert {_render(expr.get('errorCall'))}"
    return str(t or "")
