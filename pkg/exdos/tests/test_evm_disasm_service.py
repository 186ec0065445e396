from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from exdos.services.evm_disasm_service import (
    decode,
    decode_bytes,
    disassemble,
    encode,
    parse_hex,
    segment_blocks,
    strip_metadata,
)
from exdos.services.opcode_table import default_table, load_opcode_table
from exdos.utils.errors import ConfigError, MalformedInputError


CANCUN_OVERRIDE = Path(__file__).resolve().parents[1] / "config" / "opcodes_cancun.yaml"

# 参考操作码表抽样（字节值 -> 助记符）
REFERENCE_OPCODES = {
    0x00: "STOP", 0x01: "ADD", 0x02: "MUL", 0x03: "SUB", 0x04: "DIV", 0x05: "SDIV", 0x06: "MOD",
    0x07: "SMOD", 0x08: "ADDMOD", 0x09: "MULMOD", 0x0A: "EXP", 0x0B: "SIGNEXTEND", 0x10: "LT",
    0x11: "GT", 0x12: "SLT", 0x13: "SGT", 0x14: "EQ", 0x15: "ISZERO", 0x16: "AND", 0x17: "OR",
    0x18: "XOR", 0x19: "NOT", 0x1A: "BYTE", 0x1B: "SHL", 0x1C: "SHR", 0x1D: "SAR", 0x20: "KECCAK256",
    0x30: "ADDRESS", 0x31: "BALANCE", 0x33: "CALLER", 0x34: "CALLVALUE", 0x35: "CALLDATALOAD",
    0x36: "CALLDATASIZE", 0x42: "TIMESTAMP", 0x43: "NUMBER", 0x47: "SELFBALANCE", 0x50: "POP",
    0x51: "MLOAD", 0x52: "MSTORE", 0x54: "SLOAD", 0x55: "SSTORE", 0x56: "JUMP", 0x57: "JUMPI",
    0x5A: "GAS", 0x5B: "JUMPDEST", 0x5F: "PUSH0", 0x60: "PUSH1", 0x7F: "PUSH32", 0x80: "DUP1",
    0x8F: "DUP16", 0x90: "SWAP1", 0x9F: "SWAP16", 0xA0: "LOG0", 0xF1: "CALL", 0xF3: "RETURN",
    0xFA: "STATICCALL", 0xFD: "REVERT", 0xFE: "INVALID", 0xFF: "SELFDESTRUCT",
}


def test_opcode_table_should_agree_with_reference_opcodes():
    table = default_table()
    mismatches = {b: table.mnemonic(b) for b, name in REFERENCE_OPCODES.items() if table.mnemonic(b) != name}

    assert len(REFERENCE_OPCODES) >= 50
    assert mismatches == {}


def test_decode_should_read_push_immediates_and_offsets():
    instructions = decode("0x6001600201")

    assert [(i.offset, i.mnemonic) for i in instructions] == [(0, "PUSH1"), (2, "PUSH1"), (4, "ADD")]
    assert instructions[0].push_value == 1
    assert instructions[1].push_data == b"\x02"


def test_decode_should_pad_truncated_push_at_end_of_code():
    instructions = decode("61aa")

    assert len(instructions) == 1
    assert instructions[0].mnemonic == "PUSH2"
    assert instructions[0].push_data == b"\xaa\x00"
    assert instructions[0].truncated
    assert encode(instructions) == bytes.fromhex("61aa")


def test_decode_should_name_undefined_opcodes_and_end_block_there():
    blocks = disassemble("600c0c6001")

    assert blocks[0].mnemonics == ["PUSH1", "INVALID_0x0C"]
    assert blocks[0].terminator_kind == "invalid"
    assert blocks[1].mnemonics == ["PUSH1"]
    assert blocks[1].terminator_kind == "fallthrough"


def test_parse_hex_should_report_position_in_original_string():
    with pytest.raises(MalformedInputError) as bad_char:
        parse_hex("0x60zz")
    with pytest.raises(MalformedInputError) as odd:
        parse_hex("600")

    assert bad_char.value.position == 4
    assert odd.value.position == 2


def test_parse_hex_should_accept_empty_input():
    assert parse_hex("") == b""
    assert disassemble("0x") == []


def test_segment_blocks_should_split_on_jumpdest_and_terminators():
    blocks = disassemble("6003565b00")

    assert [b.mnemonics for b in blocks] == [["PUSH1", "JUMP"], ["JUMPDEST", "STOP"]]
    assert [(b.start_offset, b.end_offset) for b in blocks] == [(0, 2), (3, 4)]
    assert [b.terminator_kind for b in blocks] == ["jump", "stop"]


def test_strip_metadata_should_remove_solc_trailer():
    trailer = bytes.fromhex("a1") + b"\x64solc" + bytes.fromhex("43000814")
    code = b"\x00" + trailer + len(trailer).to_bytes(2, "big")

    stripped, removed = strip_metadata(code)

    assert stripped == b"\x00"
    assert removed == len(trailer) + 2


def test_strip_metadata_should_keep_code_without_known_key():
    trailer = bytes.fromhex("a1") + b"\x64abcd" + bytes.fromhex("43000814")
    code = b"\x00" + trailer + len(trailer).to_bytes(2, "big")

    assert strip_metadata(code) == (code, 0)


def test_decode_should_keep_trailer_when_asked():
    trailer = bytes.fromhex("a1") + b"\x64ipfs" + bytes.fromhex("4100")
    code = bytes.fromhex("600100") + trailer + len(trailer).to_bytes(2, "big")

    kept = decode(code.hex(), strip=False)
    stripped = decode(code.hex())

    assert [i.mnemonic for i in stripped] == ["PUSH1", "STOP"]
    assert len(kept) > len(stripped)


def test_load_opcode_table_should_merge_cancun_override():
    table = load_opcode_table(CANCUN_OVERRIDE)

    assert table.mnemonic(0x5C) == "TLOAD"
    assert table.mnemonic(0x5E) == "MCOPY"
    assert table.mnemonic(0x01) == "ADD"
    assert default_table().mnemonic(0x5C) is None


def test_load_opcode_table_should_reject_push_remap(tmp_path: Path):
    override = tmp_path / "bad.yaml"
    override.write_text('"0x60": FOO\n', encoding="utf-8")

    with pytest.raises(ConfigError):
        load_opcode_table(override)


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=256))
def test_decode_should_be_total_and_round_trip_any_bytes(code: bytes):
    instructions = decode_bytes(code)

    assert encode(instructions) == code
    assert sum(i.size for i in instructions) == len(code)


@settings(max_examples=300, deadline=None)
@given(st.binary(max_size=256))
def test_segment_blocks_should_partition_instructions(code: bytes):
    instructions = decode_bytes(code)
    blocks = segment_blocks(instructions)

    flattened = [ins for b in blocks for ins in b.instructions]
    assert flattened == instructions
    assert [b.id for b in blocks] == list(range(len(blocks)))
    for block in blocks:
        assert block.instructions
        assert all(ins.mnemonic != "JUMPDEST" for ins in block.instructions[1:])
        assert all(not ins.is_terminator for ins in block.instructions[:-1])
