"""带标签的 EVM 汇编器（合成语料用）。

label 处自动放一个 JUMPDEST；push_label 以 PUSH2 写入标签的最终偏移，两遍完成回填。
"""
from __future__ import annotations

from dataclasses import dataclass

from exdos.services.opcode_table import SHANGHAI_OPCODES


_BYTE_OF = {name: value for value, name in SHANGHAI_OPCODES.items()}


@dataclass(frozen=True)
class _Item:
    kind: str  # op / push / label_ref / label
    mnemonic: str = ""
    value: int = 0
    width: int = 0
    label: str = ""

    @property
    def size(self) -> int:
        if self.kind == "push":
            return 1 + self.width
        if self.kind == "label_ref":
            return 3
        return 1


class Assembler:
    def __init__(self) -> None:
        self._items: list[_Item] = []

    def op(self, *mnemonics: str) -> "Assembler":
        for mnemonic in mnemonics:
            if mnemonic not in _BYTE_OF:
                raise KeyError(f"unknown mnemonic {mnemonic}")
            if mnemonic.startswith("PUSH") and mnemonic != "PUSH0":
                raise ValueError("use push() for immediates")
            self._items.append(_Item("op", mnemonic=mnemonic))
        return self

    def push(self, value: int, width: int | None = None) -> "Assembler":
        if value < 0:
            raise ValueError("push value must be non-negative")
        size = width or max(1, (value.bit_length() + 7) // 8)
        if not 1 <= size <= 32 or value >= 1 << (8 * size):
            raise ValueError(f"value {value} does not fit PUSH{size}")
        self._items.append(_Item("push", value=value, width=size))
        return self

    def push_label(self, label: str) -> "Assembler":
        self._items.append(_Item("label_ref", label=label))
        return self

    def label(self, label: str) -> "Assembler":
        self._items.append(_Item("label", label=label))
        return self

    def jump(self, label: str) -> "Assembler":
        return self.push_label(label).op("JUMP")

    def jumpi(self, label: str) -> "Assembler":
        return self.push_label(label).op("JUMPI")

    def offsets(self) -> dict[str, int]:
        pc = 0
        table: dict[str, int] = {}
        for item in self._items:
            if item.kind == "label":
                if item.label in table:
                    raise ValueError(f"duplicate label {item.label}")
                table[item.label] = pc
            pc += item.size
        return table

    def assemble(self) -> bytes:
        labels = self.offsets()
        out = bytearray()
        for item in self._items:
            if item.kind == "op":
                out.append(_BYTE_OF[item.mnemonic])
            elif item.kind == "label":
                out.append(_BYTE_OF["JUMPDEST"])
            elif item.kind == "push":
                out.append(0x5F + item.width)
                out.extend(item.value.to_bytes(item.width, "big"))
            else:
                if item.label not in labels:
                    raise KeyError(f"undefined label {item.label}")
                out.append(0x61)
                out.extend(labels[item.label].to_bytes(2, "big"))
        return bytes(out)

    def hex(self) -> str:
        return "0x" + self.assemble().hex()
