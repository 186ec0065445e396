"""EVM 字节码反汇编与基本块切分。

处理流程：
1. 十六进制文本 -> bytes（可选剥离 Solidity CBOR 元数据尾）
2. bytes -> Instruction 列表（PUSH 立即数按宽度读取，末尾截断时补零并打标）
3. Instruction 列表 -> BasicBlock 列表（JUMPDEST 开新块，终结指令后开新块）

全部是纯函数，可以跨合约并发调用。
"""
from __future__ import annotations

import logging
import string
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

from exdos.services.opcode_table import (
    TERMINATOR_KINDS,
    OpcodeTable,
    default_table,
    invalid_mnemonic,
    push_width,
)
from exdos.utils.errors import InputFormatError, MalformedInputError


logger = logging.getLogger(__name__)

_HEX_DIGITS = frozenset(string.hexdigits)
# CBOR 文本串 key：0x64 'ipfs' / 0x65 'bzzr0' / 0x65 'bzzr1' / 0x64 'solc'
_METADATA_KEYS = (b"\x64ipfs", b"\x65bzzr0", b"\x65bzzr1", b"\x64solc")


@dataclass(frozen=True)
class Instruction:
    offset: int
    mnemonic: str
    opcode: int
    push_data: bytes | None = None
    # 代码末尾 PUSH 立即数不足时补的零字节数
    padding: int = 0

    @property
    def truncated(self) -> bool:
        return self.padding > 0

    @property
    def size(self) -> int:
        """在原始字节流中实际占用的字节数（不含补零）。"""
        return 1 + (len(self.push_data) if self.push_data else 0) - self.padding

    @property
    def is_push(self) -> bool:
        return self.mnemonic.startswith("PUSH")

    @property
    def push_value(self) -> int | None:
        if self.mnemonic == "PUSH0":
            return 0
        if self.push_data is None:
            return None
        return int.from_bytes(self.push_data, "big")

    @property
    def is_terminator(self) -> bool:
        return terminator_kind_of(self.mnemonic) is not None

    def to_dict(self) -> dict[str, Any]:
        return {
            "offset": self.offset,
            "mnemonic": self.mnemonic,
            "push_data_hex": self.push_data.hex() if self.push_data is not None else None,
        }


@dataclass(frozen=True)
class BasicBlock:
    id: int
    start_offset: int
    end_offset: int
    instructions: tuple[Instruction, ...] = field(default_factory=tuple)
    terminator_kind: str = "fallthrough"

    @property
    def mnemonics(self) -> list[str]:
        return [ins.mnemonic for ins in self.instructions]

    @property
    def byte_length(self) -> int:
        return sum(ins.size for ins in self.instructions)

    @property
    def starts_with_jumpdest(self) -> bool:
        return bool(self.instructions) and self.instructions[0].mnemonic == "JUMPDEST"

    def contains(self, *mnemonics: str) -> bool:
        wanted = set(mnemonics)
        return any(ins.mnemonic in wanted for ins in self.instructions)

    def to_dict(self) -> dict[str, Any]:
        return {
            "id": self.id,
            "start_offset": self.start_offset,
            "end_offset": self.end_offset,
            "terminator_kind": self.terminator_kind,
            "instructions": [ins.to_dict() | {"opcode": ins.opcode, "padding": ins.padding} for ins in self.instructions],
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "BasicBlock":
        try:
            instructions = tuple(
                Instruction(
                    offset=int(item["offset"]),
                    mnemonic=str(item["mnemonic"]),
                    opcode=int(item["opcode"]),
                    push_data=bytes.fromhex(item["push_data_hex"]) if item.get("push_data_hex") is not None else None,
                    padding=int(item.get("padding") or 0),
                )
                for item in data.get("instructions") or []
            )
            return cls(
                id=int(data["id"]),
                start_offset=int(data["start_offset"]),
                end_offset=int(data["end_offset"]),
                instructions=instructions,
                terminator_kind=str(data["terminator_kind"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise InputFormatError(f"invalid basic block record: {exc}") from exc


def terminator_kind_of(mnemonic: str) -> str | None:
    if mnemonic.startswith("INVALID_0x"):
        return "invalid"
    return TERMINATOR_KINDS.get(mnemonic)


def parse_hex(bytecode_hex: str) -> bytes:
    """十六进制文本 -> bytes。

    出错位置按调用方传入的原始字符串计算（包含 0x 前缀与首部空白）。
    """

    raw = bytecode_hex or ""
    lead = len(raw) - len(raw.lstrip())
    body = raw.strip()
    if body[:2] in {"0x", "0X"}:
        body = body[2:]
        lead += 2

    for idx, ch in enumerate(body):
        if ch not in _HEX_DIGITS:
            raise MalformedInputError(f"non-hex character {ch!r}", position=lead + idx)
    if len(body) % 2:
        raise MalformedInputError("odd-length hex string", position=lead + len(body) - 1)
    return bytes.fromhex(body)


def strip_metadata(code: bytes) -> tuple[bytes, int]:
    """剥离 solc 追加的 CBOR 元数据尾，返回 (剩余代码, 剥离字节数)。"""

    if len(code) < 2:
        return code, 0
    trailer_len = int.from_bytes(code[-2:], "big")
    total = trailer_len + 2
    if trailer_len == 0 or total > len(code):
        return code, 0
    trailer = code[-total:-2]
    # CBOR map 头：major type 5（0xa0..0xbf）
    if not 0xA0 <= trailer[0] <= 0xBF:
        return code, 0
    if not any(key in trailer for key in _METADATA_KEYS):
        return code, 0
    return code[:-total], total


def decode_bytes(code: bytes, *, table: OpcodeTable | None = None) -> list[Instruction]:
    table = table or default_table()
    out: list[Instruction] = []
    pc = 0
    n = len(code)
    while pc < n:
        opcode = code[pc]
        mnemonic = table.mnemonic(opcode) or invalid_mnemonic(opcode)
        width = push_width(opcode)
        if width:
            data = code[pc + 1 : pc + 1 + width]
            padding = width - len(data)
            if padding:
                data = data + bytes(padding)
            out.append(Instruction(pc, mnemonic, opcode, bytes(data), padding))
        else:
            out.append(Instruction(pc, mnemonic, opcode))
        pc += 1 + width
    return out


def decode(
    bytecode_hex: str,
    *,
    strip: bool = True,
    table: OpcodeTable | None = None,
) -> list[Instruction]:
    """解码十六进制字节码为指令序列。"""

    code = parse_hex(bytecode_hex)
    if strip:
        code, stripped = strip_metadata(code)
        if stripped:
            logger.debug("metadata trailer stripped | bytes=%s", stripped)
    instructions = decode_bytes(code, table=table)
    if instructions and instructions[-1].truncated:
        logger.warning(
            "truncated push at end of code | offset=%s | padding=%s",
            instructions[-1].offset,
            instructions[-1].padding,
        )
    return instructions


def encode(instructions: Iterable[Instruction]) -> bytes:
    """把指令重新序列化成字节（补零部分不输出）。"""

    buf = bytearray()
    for ins in instructions:
        buf.append(ins.opcode)
        if ins.push_data is not None:
            data = ins.push_data[: len(ins.push_data) - ins.padding] if ins.padding else ins.push_data
            buf.extend(data)
    return bytes(buf)


def _close_block(block_id: int, chunk: list[Instruction]) -> BasicBlock:
    kind = terminator_kind_of(chunk[-1].mnemonic) or "fallthrough"
    return BasicBlock(
        id=block_id,
        start_offset=chunk[0].offset,
        end_offset=chunk[-1].offset,
        instructions=tuple(chunk),
        terminator_kind=kind,
    )


def segment_blocks(instructions: Sequence[Instruction]) -> list[BasicBlock]:
    """切分基本块：偏移 0、每个 JUMPDEST、每个终结指令之后都开新块。"""

    blocks: list[BasicBlock] = []
    current: list[Instruction] = []
    for ins in instructions:
        if ins.mnemonic == "JUMPDEST" and current:
            blocks.append(_close_block(len(blocks), current))
            current = []
        current.append(ins)
        if ins.is_terminator:
            blocks.append(_close_block(len(blocks), current))
            current = []
    if current:
        blocks.append(_close_block(len(blocks), current))
    return blocks


def disassemble(
    bytecode_hex: str,
    *,
    strip: bool = True,
    table: OpcodeTable | None = None,
) -> list[BasicBlock]:
    return segment_blocks(decode(bytecode_hex, strip=strip, table=table))


def blocks_to_dict(blocks: Sequence[BasicBlock]) -> list[dict[str, Any]]:
    return [b.to_dict() for b in blocks]


def blocks_from_dict(data: Any) -> list[BasicBlock]:
    if not isinstance(data, list):
        raise InputFormatError("blocks file must contain a JSON array")
    return [BasicBlock.from_dict(item) for item in data]
