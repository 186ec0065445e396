"""手写合约模板：每个模板同时产出 compact AST 与编译形态的字节码，并给出两种模态下应命中的子模式。

字节码布局（所有模板共用）：
- 入口块：内存指针初始化 + calldata 长度检查，随后是 PUSH4/EQ/JUMPI 的选择器分发链，最后是 fallback revert
- 每个函数：entry 块 -> decode 块 -> body，body 结束时跳到共享的 ret（JUMPDEST STOP）
- body 内的 revert 都内联，不跳回前面的块，保证只有真正的循环才产生回边
- 分发块到 body 至少 3 跳，半径 2 的邻域规则看不到分发逻辑
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from Crypto.Hash import keccak

from exdos.services.evm_assembler import Assembler
from exdos.services.solidity_ast_builder import AstBuilder, Node


BodyEmitter = Callable[[Assembler, str], None]

VULNERABLE = 1
NORMAL = 0

NOISE_WORDS = ("fee", "rate", "cap", "quota", "epoch", "level")


def selector(signature: str) -> int:
    """函数选择器：Keccak-256(signature) 的前 4 字节。"""

    return int.from_bytes(keccak.new(data=signature.encode("utf-8"), digest_bits=256).digest()[:4], "big")


def metadata_trailer(contract_id: str) -> bytes:
    """solc 风格的 CBOR 元数据尾：{ipfs: <34 bytes>, solc: 0.8.17} + 2 字节长度。"""

    digest = hashlib.sha256(contract_id.encode("utf-8")).digest()
    body = (
        b"\xa2\x64ipfs\x58\x22\x12\x20"
        + digest
        + b"\x64solc\x43\x00\x08\x11"
    )
    return body + len(body).to_bytes(2, "big")


@dataclass
class Variant:
    """一次模板实例化的随机参数。"""

    rng: np.random.Generator
    contract_name: str
    noise: int = 0
    noise_first: bool = False

    def slot(self) -> int:
        return int(self.rng.integers(2, 16))

    def choice(self, values: tuple[int, ...]) -> int:
        return int(values[int(self.rng.integers(0, len(values)))])


@dataclass
class BytecodeLayout:
    functions: list[tuple[str, int, BodyEmitter]] = field(default_factory=list)

    def add(self, name: str, body: BodyEmitter, *, args: int = 0) -> None:
        self.functions.append((name, args, body))

    def assemble(self, contract_id: str) -> str:
        asm = Assembler()
        asm.push(0x80).push(0x40).op("MSTORE").push(0x04).op("CALLDATASIZE", "LT").jumpi("fallback")
        asm.push(0x00).op("CALLDATALOAD").push(0xE0).op("SHR")
        for name, args, _ in self.functions:
            signature = f"{name}({','.join(['uint256'] * args)})"
            asm.op("DUP1").push(selector(signature), 4).op("EQ").jumpi(f"{name}.entry")
        asm.label("fallback").push(0x00).op("DUP1", "REVERT")

        for name, args, body in self.functions:
            asm.label(f"{name}.entry").push_label("ret").jump(f"{name}.decode")
            asm.label(f"{name}.decode")
            for k in range(args):
                asm.push(0x04 + 32 * k).op("CALLDATALOAD")
            asm.jump(f"{name}.body")
            asm.label(f"{name}.body")
            body(asm, f"{name}.")
        asm.label("ret").op("STOP")
        return "0x" + (asm.assemble() + metadata_trailer(contract_id)).hex()


# ---------------------------------------------------------------------------
# 字节码片段
# ---------------------------------------------------------------------------


def _mapping_slot(asm: Assembler, slot: int, key: str = "CALLER") -> Assembler:
    return (
        asm.op(key)
        .push(0x00)
        .op("MSTORE")
        .push(slot)
        .push(0x20)
        .op("MSTORE")
        .push(0x40)
        .push(0x00)
        .op("KECCAK256")
    )


def _inline_revert(asm: Assembler) -> Assembler:
    return asm.push(0x00).op("DUP1", "REVERT")


def _send_value(asm: Assembler) -> Assembler:
    return asm.push(0x00).op("DUP1", "DUP1", "DUP1", "DUP5", "CALLER", "GAS", "CALL")


def _self_call(asm: Assembler, signature: str) -> Assembler:
    return (
        asm.push(selector(signature), 4)
        .push(0x00)
        .op("MSTORE")
        .push(0x00)
        .op("DUP1")
        .push(0x04)
        .push(0x1C)
        .push(0x00)
        .op("ADDRESS", "GAS", "CALL", "POP")
    )


def _deposit_body(balance_slot: int) -> BodyEmitter:
    def emit(asm: Assembler, p: str) -> None:
        _mapping_slot(asm, balance_slot).op("DUP1", "SLOAD", "CALLVALUE", "ADD", "SWAP1", "SSTORE").jump("ret")

    return emit


# ---------------------------------------------------------------------------
# 公共 AST 片段
# ---------------------------------------------------------------------------


def _noise_members(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """与漏洞无关的 getter/setter，状态读写都在各自函数内。"""

    members: list[Node] = []
    emitters: list[tuple[str, BodyEmitter, int]] = []
    words = list(NOISE_WORDS)
    v.rng.shuffle(words)
    for word in words[: v.noise]:
        slot = v.slot()
        var = b.state_var(word, "uint256")
        value = b.variable("value", "uint256")
        title = word.capitalize()
        setter = b.function(
            f"set{title}",
            b.block(b.expr_stmt(b.assign(b.ident(var), "=", b.ident(value)))),
            params=[value],
        )
        getter = b.function(
            f"get{title}",
            b.block(b.return_(b.ident(var))),
            returns=[b.variable("", "uint256")],
            mutability="view",
        )
        members.extend([var, setter, getter])

        def set_body(asm: Assembler, p: str, slot: int = slot) -> None:
            asm.push(slot).op("SSTORE").jump("ret")

        def get_body(asm: Assembler, p: str, slot: int = slot) -> None:
            asm.push(slot).op("SLOAD", "POP").jump("ret")

        emitters.append((f"set{title}", set_body, 1))
        emitters.append((f"get{title}", get_body, 0))
    if v.noise_first:
        layout.functions[0:0] = [(name, args, body) for name, body, args in emitters]
    else:
        for name, body, args in emitters:
            layout.add(name, body, args=args)
    return members


def _balances(b: AstBuilder) -> Node:
    return b.state_var("balances", "mapping(address => uint256)")


def _deposit_function(b: AstBuilder, balances: Node) -> Node:
    return b.function(
        "deposit",
        b.block(b.expr_stmt(b.assign(b.index(b.ident(balances), b.sender()), "+=", b.msg_value()))),
        mutability="payable",
    )


def _value_call(b: AstBuilder, amount: Node) -> Node:
    target = b.member(b.sender(), "call", "function (bytes memory) payable returns (bool,bytes memory)")
    return b.call(b.call_options(target, value=b.ident(amount)), b.literal(""), type_string="tuple(bool,bytes memory)")


def _enough_balance(b: AstBuilder, balances: Node, amount: Node) -> Node:
    return b.expr_stmt(b.require(b.compare(b.index(b.ident(balances), b.sender()), ">=", b.ident(amount))))


# ---------------------------------------------------------------------------
# reentrancy
# ---------------------------------------------------------------------------


def vulnerable_bank(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """先转账后扣余额：require -> call{value} -> balances -= amount。"""

    bal_slot = v.slot()
    balances = _balances(b)
    amount = b.variable("amount", "uint256")
    ok = b.variable("ok", "bool")
    withdraw = b.function(
        "withdraw",
        b.block(
            _enough_balance(b, balances, amount),
            b.declare([ok, None], _value_call(b, amount)),
            b.expr_stmt(b.require(b.ident(ok))),
            b.expr_stmt(b.assign(b.index(b.ident(balances), b.sender()), "-=", b.ident(amount))),
        ),
        params=[amount],
    )

    def withdraw_body(asm: Assembler, p: str) -> None:
        _mapping_slot(asm, bal_slot).op("SLOAD", "DUP2", "DUP2", "LT", "ISZERO").jumpi(p + "ok")
        _inline_revert(asm)
        asm.label(p + "ok").op("POP")
        _send_value(asm).op("ISZERO", "ISZERO").jumpi(p + "update")
        _inline_revert(asm)
        asm.label(p + "update")
        _mapping_slot(asm, bal_slot).op("DUP1", "SLOAD", "DUP3", "SWAP1", "SUB", "SWAP1", "SSTORE", "POP").jump("ret")

    layout.add("withdraw", withdraw_body, args=1)
    layout.add("deposit", _deposit_body(bal_slot))
    return [balances, _deposit_function(b, balances), withdraw]


def safe_bank(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """checks-effects-interactions：先扣余额再转账。"""

    bal_slot = v.slot()
    balances = _balances(b)
    amount = b.variable("amount", "uint256")
    ok = b.variable("ok", "bool")
    withdraw = b.function(
        "withdraw",
        b.block(
            _enough_balance(b, balances, amount),
            b.expr_stmt(b.assign(b.index(b.ident(balances), b.sender()), "-=", b.ident(amount))),
            b.declare([ok, None], _value_call(b, amount)),
            b.expr_stmt(b.require(b.ident(ok))),
        ),
        params=[amount],
    )

    def withdraw_body(asm: Assembler, p: str) -> None:
        _mapping_slot(asm, bal_slot).op("SLOAD", "DUP2", "DUP2", "LT", "ISZERO").jumpi(p + "ok")
        _inline_revert(asm)
        asm.label(p + "ok").op("POP")
        _mapping_slot(asm, bal_slot).op("DUP1", "SLOAD", "DUP3", "SWAP1", "SUB", "SWAP1", "SSTORE").jump(p + "send")
        asm.label(p + "send")
        _send_value(asm).op("ISZERO", "ISZERO").jumpi(p + "done")
        _inline_revert(asm)
        asm.label(p + "done").op("POP").jump("ret")

    layout.add("deposit", _deposit_body(bal_slot))
    layout.add("withdraw", withdraw_body, args=1)
    return [balances, _deposit_function(b, balances), withdraw]


def legacy_bank(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """0.4 时代写法：msg.sender.call.value(balance)() 之后才清零。"""

    bal_slot = v.slot()
    balances = _balances(b)
    call_member = b.member(b.sender(), "call", "function () payable returns (bool)")
    with_value = b.call(b.member(call_member, "value", "function (uint256) returns (function () payable returns (bool))"),
                        b.index(b.ident(balances), b.sender()))
    withdraw = b.function(
        "withdrawAll",
        b.block(
            b.expr_stmt(b.call(with_value, type_string="bool")),
            b.expr_stmt(b.assign(b.index(b.ident(balances), b.sender()), "=", b.literal(0))),
        ),
    )

    def withdraw_body(asm: Assembler, p: str) -> None:
        _mapping_slot(asm, bal_slot).op("SLOAD")
        _send_value(asm).op("POP", "POP").jump(p + "clear")
        asm.label(p + "clear").push(0x00)
        _mapping_slot(asm, bal_slot).op("SSTORE").jump("ret")

    layout.add("deposit", _deposit_body(bal_slot))
    layout.add("withdrawAll", withdraw_body)
    return [balances, _deposit_function(b, balances), withdraw]


def ledger(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """只在内部账本之间转移余额，没有外部调用。"""

    bal_slot = v.slot()
    open_slot = v.slot()
    balances = _balances(b)
    is_open = b.state_var("open", "bool")
    when_open = b.modifier("whenOpen", b.block(b.expr_stmt(b.require(b.ident(is_open))), b.placeholder()))
    to = b.variable("to", "address")
    amount = b.variable("amount", "uint256")
    transfer = b.function(
        "transfer",
        b.block(
            _enough_balance(b, balances, amount),
            b.expr_stmt(b.assign(b.index(b.ident(balances), b.sender()), "-=", b.ident(amount))),
            b.expr_stmt(b.assign(b.index(b.ident(balances), b.ident(to)), "+=", b.ident(amount))),
        ),
        params=[to, amount],
        modifiers=[when_open],
    )

    def transfer_body(asm: Assembler, p: str) -> None:
        asm.push(open_slot).op("SLOAD", "ISZERO", "ISZERO").jumpi(p + "open")
        _inline_revert(asm)
        asm.label(p + "open")
        _mapping_slot(asm, bal_slot).op("SLOAD", "DUP2", "DUP2", "LT", "ISZERO").jumpi(p + "ok")
        _inline_revert(asm)
        asm.label(p + "ok").op("POP")
        _mapping_slot(asm, bal_slot).op("DUP1", "SLOAD", "DUP3", "SWAP1", "SUB", "SWAP1", "SSTORE")
        _mapping_slot(asm, bal_slot, key="DUP3").op("DUP1", "SLOAD", "DUP3", "ADD", "SWAP1", "SSTORE", "POP", "POP")
        asm.jump("ret")

    layout.add("transfer", transfer_body, args=2)
    return [balances, is_open, when_open, transfer]


# ---------------------------------------------------------------------------
# timestamp
# ---------------------------------------------------------------------------


def lottery(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """以 block.timestamp 取模决定中奖者。"""

    winner_slot = v.slot()
    modulus = v.choice((3, 5, 7, 11, 13))
    winner = b.state_var("winner", "address")
    draw = b.function(
        "draw",
        b.block(
            b.if_(
                b.compare(b.binary(b.block_member("timestamp"), "%", b.literal(modulus)), "==", b.literal(0)),
                b.block(b.expr_stmt(b.assign(b.ident(winner), "=", b.sender()))),
            )
        ),
    )

    def draw_body(asm: Assembler, p: str) -> None:
        asm.op("TIMESTAMP").jump(p + "check")
        asm.label(p + "check").push(modulus).op("SWAP1", "MOD", "ISZERO", "ISZERO").jumpi(p + "end")
        asm.op("CALLER").push(winner_slot).op("SSTORE")
        asm.label(p + "end").jump("ret")

    layout.add("draw", draw_body)
    return [winner, draw]


def timed_auction(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """时间戳先存进局部变量，再经数据流进入分支条件。"""

    end_slot = v.slot()
    ended_slot = v.slot()
    end_time = b.state_var("endTime", "uint256")
    ended = b.state_var("ended", "bool")
    now_var = b.variable("t", "uint256")
    bid = b.function(
        "bid",
        b.block(
            b.declare([now_var], b.block_member("timestamp")),
            b.if_(
                b.compare(b.ident(now_var), ">", b.ident(end_time)),
                b.block(b.expr_stmt(b.assign(b.ident(ended), "=", b.literal(True)))),
            ),
        ),
        mutability="payable",
    )

    def bid_body(asm: Assembler, p: str) -> None:
        asm.op("TIMESTAMP").jump(p + "check")
        asm.label(p + "check").push(end_slot).op("SLOAD", "DUP2", "GT", "ISZERO").jumpi(p + "end")
        asm.push(0x01).push(ended_slot).op("SSTORE")
        asm.label(p + "end").op("POP").jump("ret")

    layout.add("bid", bid_body)
    return [end_time, ended, bid]


def block_number_game(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """用 block.number 的奇偶决定是否累加奖池。"""

    jackpot_slot = v.slot()
    modulus = v.choice((2, 4, 6, 8))
    jackpot = b.state_var("jackpot", "uint256")
    play = b.function(
        "play",
        b.block(
            b.if_(
                b.compare(b.binary(b.block_member("number"), "%", b.literal(modulus)), "==", b.literal(0)),
                b.block(
                    b.expr_stmt(b.assign(b.ident(jackpot), "=", b.binary(b.ident(jackpot), "+", b.literal(1))))
                ),
            )
        ),
    )

    def play_body(asm: Assembler, p: str) -> None:
        asm.op("NUMBER").jump(p + "check")
        asm.label(p + "check").push(modulus).op("SWAP1", "MOD").jumpi(p + "end")
        asm.push(jackpot_slot).op("SLOAD").push(0x01).op("ADD").push(jackpot_slot).op("SSTORE")
        asm.label(p + "end").jump("ret")

    layout.add("play", play_body)
    return [jackpot, play]


def stamp(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """只记录最后更新时间，时间戳不参与任何判断。"""

    slot = v.slot()
    last = b.state_var("lastUpdate", "uint256")
    touch = b.function(
        "touch",
        b.block(b.expr_stmt(b.assign(b.ident(last), "=", b.block_member("timestamp")))),
    )

    def touch_body(asm: Assembler, p: str) -> None:
        asm.op("TIMESTAMP").push(slot).op("SSTORE").jump("ret")

    layout.add("touch", touch_body)
    return [last, touch]


def counter(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    slot = v.slot()
    count_var = b.state_var("count", "uint256")
    increment = b.function(
        "increment",
        b.block(b.expr_stmt(b.assign(b.ident(count_var), "=", b.binary(b.ident(count_var), "+", b.literal(1))))),
    )

    def increment_body(asm: Assembler, p: str) -> None:
        asm.push(slot).op("SLOAD").push(0x01).op("ADD").push(slot).op("SSTORE").jump("ret")

    layout.add("increment", increment_body)
    return [count_var, increment]


# ---------------------------------------------------------------------------
# infinite-loop
# ---------------------------------------------------------------------------


def spinner(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """while (true) 且循环体内没有退出路径。"""

    slot = v.slot()
    ticks = b.state_var("ticks", "uint256")
    spin = b.function(
        "spin",
        b.block(
            b.while_(
                b.literal(True),
                b.block(b.expr_stmt(b.assign(b.ident(ticks), "+=", b.literal(1)))),
            )
        ),
    )

    def spin_body(asm: Assembler, p: str) -> None:
        asm.push(0x01).op("ISZERO").jumpi(p + "exit")
        asm.push(slot).op("DUP1", "SLOAD").push(0x01).op("ADD", "SWAP1", "SSTORE").jump(p + "body")
        asm.label(p + "exit").jump("ret")

    layout.add("spin", spin_body)
    return [ticks, spin]


def burner(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """for 循环的计数器在循环体和步进里都没有更新。"""

    n = b.variable("n", "uint256")
    acc = b.variable("x", "uint256")
    i = b.variable("i", "uint256")
    burn = b.function(
        "burn",
        b.block(
            b.declare([acc], b.literal(0)),
            b.for_(
                b.declare([i], b.literal(0)),
                b.compare(b.ident(i), "<", b.ident(n)),
                None,
                b.block(b.expr_stmt(b.assign(b.ident(acc), "=", b.binary(b.ident(acc), "+", b.ident(i))))),
            ),
        ),
        params=[n],
        mutability="pure",
    )

    def burn_body(asm: Assembler, p: str) -> None:
        asm.push(0x00).push(0x00)
        asm.label(p + "head").op("DUP3", "DUP2", "LT", "ISZERO").jumpi(p + "exit")
        asm.op("DUP1", "DUP3", "ADD", "SWAP2", "POP").jump(p + "head")
        asm.label(p + "exit").op("POP", "POP", "POP").jump("ret")

    layout.add("burn", burn_body, args=1)
    return [burn]


def recurser(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """无条件地通过 this.ping() 重入自身。"""

    slot = v.slot()
    pings = b.state_var("pings", "uint256")
    this_ref = b.builtin("this", f"contract {v.contract_name}")
    ping = b.function(
        "ping",
        b.block(
            b.expr_stmt(b.assign(b.ident(pings), "+=", b.literal(1))),
            b.expr_stmt(b.call(b.member(this_ref, "ping", "function () external"))),
        ),
    )

    def ping_body(asm: Assembler, p: str) -> None:
        asm.push(slot).op("DUP1", "SLOAD").push(0x01).op("ADD", "SWAP1", "SSTORE")
        _self_call(asm, "ping()").jump("ret")

    layout.add("ping", ping_body)
    return [pings, ping]


def bounded_sum(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """常量上界、步进递增计数器的 for 循环。"""

    slot = v.slot()
    bound = int(v.rng.integers(5, 65))
    total = b.state_var("total", "uint256")
    i = b.variable("i", "uint256")
    accumulate = b.function(
        "accumulate",
        b.block(
            b.for_(
                b.declare([i], b.literal(0)),
                b.compare(b.ident(i), "<", b.literal(bound)),
                b.expr_stmt(b.unary("++", b.ident(i))),
                b.block(b.expr_stmt(b.assign(b.ident(total), "+=", b.ident(i)))),
            )
        ),
    )

    def accumulate_body(asm: Assembler, p: str) -> None:
        asm.push(0x00)
        asm.label(p + "head").push(bound).op("DUP2", "LT", "ISZERO").jumpi(p + "exit")
        asm.op("DUP1").push(slot).op("SLOAD", "ADD").push(slot).op("SSTORE").push(0x01).op("ADD").jump(p + "head")
        asm.label(p + "exit").op("POP").jump("ret")

    layout.add("accumulate", accumulate_body)
    return [total, accumulate]


def guarded_recurser(b: AstBuilder, layout: BytecodeLayout, v: Variant) -> list[Node]:
    """递归调用受 n > 0 保护。"""

    n = b.variable("n", "uint256")
    this_ref = b.builtin("this", f"contract {v.contract_name}")
    countdown = b.function(
        "countdown",
        b.block(
            b.if_(
                b.compare(b.ident(n), ">", b.literal(0)),
                b.block(
                    b.expr_stmt(
                        b.call(
                            b.member(this_ref, "countdown", "function (uint256) external"),
                            b.binary(b.ident(n), "-", b.literal(1)),
                        )
                    )
                ),
            )
        ),
        params=[n],
    )

    def countdown_body(asm: Assembler, p: str) -> None:
        asm.op("DUP1", "ISZERO").jumpi(p + "end")
        _self_call(asm, "countdown(uint256)")
        asm.label(p + "end").op("POP").jump("ret")

    layout.add("countdown", countdown_body, args=1)
    return [countdown]


# ---------------------------------------------------------------------------
# 模板注册表
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ContractTemplate:
    name: str
    vulnerability: str
    label: int
    expected_source: frozenset[str]
    expected_bytecode: frozenset[str]
    build: Callable[[AstBuilder, BytecodeLayout, Variant], list[Node]]


def _t(
    name: str,
    vulnerability: str,
    label: int,
    source: set[str],
    bytecode: set[str],
    build: Callable[[AstBuilder, BytecodeLayout, Variant], list[Node]],
) -> ContractTemplate:
    return ContractTemplate(name, vulnerability, label, frozenset(source), frozenset(bytecode), build)


_CVI, _BD, _EB = "callValueInvocation", "balanceDeduction", "enoughBalance"
_TI, _TA, _TC = "timestampInvocation", "timestampAssign", "timestampContamination"
_LS, _LC, _SI = "loopStatement", "loopCondition", "selfInvocation"

TEMPLATES: tuple[ContractTemplate, ...] = (
    _t("VulnerableBank", "reentrancy", VULNERABLE, {_CVI, _BD, _EB}, {_CVI, _BD, _EB}, vulnerable_bank),
    _t("LegacyBank", "reentrancy", VULNERABLE, {_CVI, _BD}, {_CVI, _BD}, legacy_bank),
    _t("SafeBank", "reentrancy", NORMAL, {_CVI, _EB}, {_CVI, _EB}, safe_bank),
    _t("Ledger", "reentrancy", NORMAL, set(), set(), ledger),
    _t("Lottery", "timestamp", VULNERABLE, {_TI, _TC}, {_TI, _TA, _TC}, lottery),
    _t("TimedAuction", "timestamp", VULNERABLE, {_TI, _TA, _TC}, {_TI, _TA, _TC}, timed_auction),
    _t("BlockNumberGame", "timestamp", VULNERABLE, {_TI, _TC}, {_TI, _TA, _TC}, block_number_game),
    _t("Stamp", "timestamp", NORMAL, {_TI, _TA}, {_TI}, stamp),
    _t("Counter", "timestamp", NORMAL, set(), set(), counter),
    _t("Spinner", "infinite-loop", VULNERABLE, {_LS, _LC}, {_LS, _LC}, spinner),
    _t("Burner", "infinite-loop", VULNERABLE, {_LS, _LC}, {_LS, _LC}, burner),
    _t("Recurser", "infinite-loop", VULNERABLE, {_SI}, {_SI}, recurser),
    _t("BoundedSum", "infinite-loop", NORMAL, {_LS}, {_LS}, bounded_sum),
    _t("GuardedRecurser", "infinite-loop", NORMAL, set(), set(), guarded_recurser),
)
TEMPLATES_BY_NAME = {t.name: t for t in TEMPLATES}


@dataclass(frozen=True)
class RenderedContract:
    contract_id: str
    template: ContractTemplate
    ast: dict
    bytecode_hex: str


def render_template(template: ContractTemplate, variant: Variant) -> RenderedContract:
    b = AstBuilder()
    layout = BytecodeLayout()
    members = template.build(b, layout, variant)
    members += _noise_members(b, layout, variant)
    contract = b.contract(variant.contract_name, members)
    unit = b.source_unit(f"contracts/{variant.contract_name}.sol", contract)
    return RenderedContract(
        contract_id=variant.contract_name,
        template=template,
        ast=unit,
        bytecode_hex=layout.assemble(variant.contract_name),
    )
