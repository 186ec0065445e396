"""EVM 操作码表（固定在 Shanghai 版本）。

说明：
- 内置静态表保证不同环境下反汇编结果一致
- 后续分叉新增的指令通过 YAML 覆盖文件追加（见 config/opcodes_cancun.yaml）
- 表中未定义的字节解码为 INVALID_0xXX
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Mapping

import yaml

from exdos.utils.errors import ConfigError


logger = logging.getLogger(__name__)


_SHANGHAI_BASE: dict[int, str] = {
    0x00: "STOP",
    0x01: "ADD",
    0x02: "MUL",
    0x03: "SUB",
    0x04: "DIV",
    0x05: "SDIV",
    0x06: "MOD",
    0x07: "SMOD",
    0x08: "ADDMOD",
    0x09: "MULMOD",
    0x0A: "EXP",
    0x0B: "SIGNEXTEND",
    0x10: "LT",
    0x11: "GT",
    0x12: "SLT",
    0x13: "SGT",
    0x14: "EQ",
    0x15: "ISZERO",
    0x16: "AND",
    0x17: "OR",
    0x18: "XOR",
    0x19: "NOT",
    0x1A: "BYTE",
    0x1B: "SHL",
    0x1C: "SHR",
    0x1D: "SAR",
    0x20: "KECCAK256",
    0x30: "ADDRESS",
    0x31: "BALANCE",
    0x32: "ORIGIN",
    0x33: "CALLER",
    0x34: "CALLVALUE",
    0x35: "CALLDATALOAD",
    0x36: "CALLDATASIZE",
    0x37: "CALLDATACOPY",
    0x38: "CODESIZE",
    0x39: "CODECOPY",
    0x3A: "GASPRICE",
    0x3B: "EXTCODESIZE",
    0x3C: "EXTCODECOPY",
    0x3D: "RETURNDATASIZE",
    0x3E: "RETURNDATACOPY",
    0x3F: "EXTCODEHASH",
    0x40: "BLOCKHASH",
    0x41: "COINBASE",
    0x42: "TIMESTAMP",
    0x43: "NUMBER",
    0x44: "PREVRANDAO",
    0x45: "GASLIMIT",
    0x46: "CHAINID",
    0x47: "SELFBALANCE",
    0x48: "BASEFEE",
    0x50: "POP",
    0x51: "MLOAD",
    0x52: "MSTORE",
    0x53: "MSTORE8",
    0x54: "SLOAD",
    0x55: "SSTORE",
    0x56: "JUMP",
    0x57: "JUMPI",
    0x58: "PC",
    0x59: "MSIZE",
    0x5A: "GAS",
    0x5B: "JUMPDEST",
    0x5F: "PUSH0",
    0xA0: "LOG0",
    0xA1: "LOG1",
    0xA2: "LOG2",
    0xA3: "LOG3",
    0xA4: "LOG4",
    0xF0: "CREATE",
    0xF1: "CALL",
    0xF2: "CALLCODE",
    0xF3: "RETURN",
    0xF4: "DELEGATECALL",
    0xF5: "CREATE2",
    0xFA: "STATICCALL",
    0xFD: "REVERT",
    0xFE: "INVALID",
    0xFF: "SELFDESTRUCT",
}


def _build_shanghai() -> dict[int, str]:
    table = dict(_SHANGHAI_BASE)
    for i in range(1, 33):
        table[0x5F + i] = f"PUSH{i}"
    for i in range(1, 17):
        table[0x7F + i] = f"DUP{i}"
        table[0x8F + i] = f"SWAP{i}"
    return table


SHANGHAI_OPCODES: Mapping[int, str] = MappingProxyType(_build_shanghai())

TERMINATOR_KINDS: Mapping[str, str] = MappingProxyType(
    {
        "JUMP": "jump",
        "JUMPI": "jumpi",
        "STOP": "stop",
        "RETURN": "return",
        "REVERT": "revert",
        "SELFDESTRUCT": "selfdestruct",
        "INVALID": "invalid",
    }
)


def push_width(opcode: int) -> int:
    """PUSH1..PUSH32 的立即数字节数；其余（含 PUSH0）为 0。"""
    return opcode - 0x5F if 0x60 <= opcode <= 0x7F else 0


def invalid_mnemonic(opcode: int) -> str:
    return f"INVALID_0x{opcode:02X}"


@dataclass(frozen=True)
class OpcodeTable:
    """字节值 -> 助记符，以及反向映射。"""

    by_byte: Mapping[int, str]
    revision: str = "shanghai"

    def mnemonic(self, opcode: int) -> str | None:
        return self.by_byte.get(opcode)

    def byte_of(self, mnemonic: str) -> int:
        for value, name in self.by_byte.items():
            if name == mnemonic:
                return value
        if mnemonic.startswith("INVALID_0x"):
            return int(mnemonic[len("INVALID_0x"):], 16)
        raise KeyError(mnemonic)


_DEFAULT_TABLE = OpcodeTable(by_byte=SHANGHAI_OPCODES)


def default_table() -> OpcodeTable:
    return _DEFAULT_TABLE


def _parse_byte(raw: object) -> int:
    if isinstance(raw, int):
        value = raw
    else:
        text = str(raw).strip().lower()
        value = int(text, 16) if text.startswith("0x") else int(text)
    if not 0 <= value <= 0xFF:
        raise ValueError(raw)
    return value


def load_opcode_table(override_path: str | Path | None = None) -> OpcodeTable:
    """加载操作码表：Shanghai 基表 + 可选覆盖文件。"""

    if override_path is None:
        return _DEFAULT_TABLE

    path = Path(override_path)
    if not path.is_file():
        raise ConfigError(f"opcode override file not found: {path}")
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse opcode override {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"opcode override {path} must be a mapping of byte -> mnemonic")

    table = dict(SHANGHAI_OPCODES)
    for raw_key, raw_name in data.items():
        try:
            value = _parse_byte(raw_key)
        except ValueError as exc:
            raise ConfigError(f"invalid opcode byte in override: {raw_key!r}") from exc
        name = str(raw_name or "").strip().upper()
        if not name:
            raise ConfigError(f"empty mnemonic for opcode {raw_key!r}")
        if 0x60 <= value <= 0x7F and name != f"PUSH{value - 0x5F}":
            raise ConfigError(f"PUSH range 0x{value:02x} cannot be remapped")
        table[value] = name

    logger.info("opcode override loaded | path=%s | entries=%s", str(path), len(data))
    return OpcodeTable(by_byte=MappingProxyType(table), revision=f"shanghai+{path.stem}")
