"""合成 compact AST 的节点构造器。

输出结构与 solc --ast-compact-json 一致（nodeType / id / src / typeDescriptions 等字段），
只覆盖语料模板用到的语法子集。内建标识符使用负数 referencedDeclaration。
"""
from __future__ import annotations

from itertools import count
from typing import Any, Iterable


Node = dict[str, Any]

BUILTIN_REFS = {
    "block": -4,
    "msg": -15,
    "now": -17,
    "require": -18,
    "revert": -19,
    "assert": -3,
    "this": -28,
}
BUILTIN_TYPES = {
    "block": "block",
    "msg": "msg",
    "now": "uint256",
    "require": "function (bool) pure",
    "revert": "function () pure",
    "assert": "function (bool) pure",
}


def _types(type_string: str) -> dict[str, str]:
    return {"typeIdentifier": "t_" + type_string.replace(" ", "_"), "typeString": type_string}


class AstBuilder:
    def __init__(self, *, first_id: int = 1) -> None:
        self._ids = count(first_id)

    def _node(self, node_type: str, **fields: Any) -> Node:
        node_id = next(self._ids)
        return {"id": node_id, "nodeType": node_type, "src": f"{node_id * 8}:8:0", **fields}

    # -- 声明 ---------------------------------------------------------------

    def _type_name(self, type_string: str) -> Node:
        if type_string.startswith("mapping("):
            key, _, value = type_string[len("mapping(") : -1].partition(" => ")
            return self._node(
                "Mapping",
                keyType=self._type_name(key),
                valueType=self._type_name(value),
                typeDescriptions=_types(type_string),
            )
        return self._node("ElementaryTypeName", name=type_string.split()[0], typeDescriptions=_types(type_string))

    def variable(self, name: str, type_string: str, *, state: bool = False) -> Node:
        return self._node(
            "VariableDeclaration",
            name=name,
            constant=False,
            mutability="mutable",
            stateVariable=state,
            storageLocation="default",
            visibility="internal",
            typeName=self._type_name(type_string),
            typeDescriptions=_types(type_string),
        )

    def state_var(self, name: str, type_string: str) -> Node:
        return self.variable(name, type_string, state=True)

    def parameters(self, decls: Iterable[Node] = ()) -> Node:
        return self._node("ParameterList", parameters=list(decls))

    # -- 表达式 -------------------------------------------------------------

    def ident(self, decl: Node) -> Node:
        return self._node(
            "Identifier",
            name=decl["name"],
            referencedDeclaration=decl["id"],
            typeDescriptions=dict(decl.get("typeDescriptions") or {}),
        )

    def unresolved(self, name: str, ref: int, type_string: str = "uint256") -> Node:
        return self._node("Identifier", name=name, referencedDeclaration=ref, typeDescriptions=_types(type_string))

    def builtin(self, name: str, type_string: str | None = None) -> Node:
        return self._node(
            "Identifier",
            name=name,
            referencedDeclaration=BUILTIN_REFS[name],
            typeDescriptions=_types(type_string or BUILTIN_TYPES.get(name, name)),
        )

    def member(self, expr: Node, member: str, type_string: str = "", *, ref: int | None = None) -> Node:
        fields: dict[str, Any] = {"expression": expr, "memberName": member, "typeDescriptions": _types(type_string)}
        if ref is not None:
            fields["referencedDeclaration"] = ref
        return self._node("MemberAccess", **fields)

    def sender(self) -> Node:
        return self.member(self.builtin("msg"), "sender", "address")

    def msg_value(self) -> Node:
        return self.member(self.builtin("msg"), "value", "uint256")

    def block_member(self, member: str) -> Node:
        return self.member(self.builtin("block"), member, "uint256")

    def index(self, base: Node, idx: Node, type_string: str = "uint256") -> Node:
        return self._node("IndexAccess", baseExpression=base, indexExpression=idx, typeDescriptions=_types(type_string))

    def binary(self, left: Node, operator: str, right: Node, type_string: str = "uint256") -> Node:
        return self._node(
            "BinaryOperation",
            leftExpression=left,
            operator=operator,
            rightExpression=right,
            typeDescriptions=_types(type_string),
        )

    def compare(self, left: Node, operator: str, right: Node) -> Node:
        return self.binary(left, operator, right, "bool")

    def assign(self, lhs: Node, operator: str, rhs: Node) -> Node:
        return self._node(
            "Assignment",
            leftHandSide=lhs,
            operator=operator,
            rightHandSide=rhs,
            typeDescriptions=dict(lhs.get("typeDescriptions") or {}),
        )

    def unary(self, operator: str, sub: Node, *, prefix: bool = False) -> Node:
        return self._node(
            "UnaryOperation",
            operator=operator,
            prefix=prefix,
            subExpression=sub,
            typeDescriptions=dict(sub.get("typeDescriptions") or {}),
        )

    def literal(self, value: Any) -> Node:
        if isinstance(value, bool):
            return self._node("Literal", kind="bool", value="true" if value else "false", typeDescriptions=_types("bool"))
        if isinstance(value, str):
            return self._node("Literal", kind="string", value=value, typeDescriptions=_types("literal_string"))
        return self._node("Literal", kind="number", value=str(value), typeDescriptions=_types(f"int_const {value}"))

    def call(self, expr: Node, *args: Node, type_string: str = "tuple()") -> Node:
        return self._node(
            "FunctionCall",
            expression=expr,
            arguments=list(args),
            kind="functionCall",
            names=[],
            typeDescriptions=_types(type_string),
        )

    def call_options(self, expr: Node, **options: Node) -> Node:
        return self._node(
            "FunctionCallOptions",
            expression=expr,
            names=list(options),
            options=list(options.values()),
            typeDescriptions=dict(expr.get("typeDescriptions") or {}),
        )

    def require(self, condition: Node) -> Node:
        return self.call(self.builtin("require"), condition)

    # -- 语句 ---------------------------------------------------------------

    def expr_stmt(self, expr: Node) -> Node:
        return self._node("ExpressionStatement", expression=expr)

    def declare(self, decls: list[Node | None], initial: Node | None) -> Node:
        return self._node(
            "VariableDeclarationStatement",
            assignments=[d["id"] if d else None for d in decls],
            declarations=decls,
            initialValue=initial,
        )

    def block(self, *statements: Node) -> Node:
        return self._node("Block", statements=list(statements))

    def if_(self, condition: Node, true_body: Node, false_body: Node | None = None) -> Node:
        return self._node("IfStatement", condition=condition, trueBody=true_body, falseBody=false_body)

    def while_(self, condition: Node, body: Node) -> Node:
        return self._node("WhileStatement", condition=condition, body=body)

    def do_while(self, body: Node, condition: Node) -> Node:
        return self._node("DoWhileStatement", body=body, condition=condition)

    def for_(self, init: Node | None, condition: Node | None, step: Node | None, body: Node) -> Node:
        return self._node(
            "ForLoop",
            initializationExpression=init,
            condition=condition,
            loopExpression=step,
            body=body,
        )

    def return_(self, expr: Node | None = None) -> Node:
        return self._node("Return", expression=expr)

    def emit(self, event: str, *args: Node) -> Node:
        callee = self._node("Identifier", name=event, referencedDeclaration=None, typeDescriptions=_types("event"))
        return self._node("EmitStatement", eventCall=self.call(callee, *args))

    def placeholder(self) -> Node:
        return self._node("PlaceholderStatement")

    # -- 定义 ---------------------------------------------------------------

    def function(
        self,
        name: str,
        body: Node,
        *,
        params: Iterable[Node] = (),
        returns: Iterable[Node] = (),
        mutability: str = "nonpayable",
        modifiers: Iterable[Node] = (),
    ) -> Node:
        invocations = [
            self._node(
                "ModifierInvocation",
                modifierName=self._node("IdentifierPath", name=m["name"], referencedDeclaration=m["id"]),
            )
            for m in modifiers
        ]
        return self._node(
            "FunctionDefinition",
            name=name,
            kind="function",
            implemented=True,
            visibility="public",
            stateMutability=mutability,
            parameters=self.parameters(params),
            returnParameters=self.parameters(returns),
            modifiers=invocations,
            body=body,
        )

    def modifier(self, name: str, body: Node) -> Node:
        return self._node("ModifierDefinition", name=name, parameters=self.parameters(), body=body)

    def contract(self, name: str, members: Iterable[Node]) -> Node:
        return self._node(
            "ContractDefinition",
            name=name,
            contractKind="contract",
            abstract=False,
            baseContracts=[],
            nodes=list(members),
        )

    def source_unit(self, path: str, *contracts: Node) -> Node:
        pragma = self._node("PragmaDirective", literals=["solidity", "^", "0.8", ".20"])
        return self._node(
            "SourceUnit",
            absolutePath=path,
            exportedSymbols={c["name"]: [c["id"]] for c in contracts},
            nodes=[pragma, *contracts],
        )
