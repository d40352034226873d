"""Opcode table and a linear-sweep disassembler for EVM bytecode."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple


class OpInfo(NamedTuple):
    name: str
    pops: int
    pushes: int


OPCODES: dict[int, OpInfo] = {
    0x00: OpInfo("STOP", 0, 0),
    0x01: OpInfo("ADD", 2, 1),
    0x02: OpInfo("MUL", 2, 1),
    0x03: OpInfo("SUB", 2, 1),
    0x04: OpInfo("DIV", 2, 1),
    0x05: OpInfo("SDIV", 2, 1),
    0x06: OpInfo("MOD", 2, 1),
    0x07: OpInfo("SMOD", 2, 1),
    0x08: OpInfo("ADDMOD", 3, 1),
    0x09: OpInfo("MULMOD", 3, 1),
    0x0A: OpInfo("EXP", 2, 1),
    0x0B: OpInfo("SIGNEXTEND", 2, 1),
    0x10: OpInfo("LT", 2, 1),
    0x11: OpInfo("GT", 2, 1),
    0x12: OpInfo("SLT", 2, 1),
    0x13: OpInfo("SGT", 2, 1),
    0x14: OpInfo("EQ", 2, 1),
    0x15: OpInfo("ISZERO", 1, 1),
    0x16: OpInfo("AND", 2, 1),
    0x17: OpInfo("OR", 2, 1),
    0x18: OpInfo("XOR", 2, 1),
    0x19: OpInfo("NOT", 1, 1),
    0x1A: OpInfo("BYTE", 2, 1),
    0x1B: OpInfo("SHL", 2, 1),
    0x1C: OpInfo("SHR", 2, 1),
    0x1D: OpInfo("SAR", 2, 1),
    0x20: OpInfo("KECCAK256", 2, 1),
    0x30: OpInfo("ADDRESS", 0, 1),
    0x31: OpInfo("BALANCE", 1, 1),
    0x32: OpInfo("ORIGIN", 0, 1),
    0x33: OpInfo("CALLER", 0, 1),
    0x34: OpInfo("CALLVALUE", 0, 1),
    0x35: OpInfo("CALLDATALOAD", 1, 1),
    0x36: OpInfo("CALLDATASIZE", 0, 1),
    0x37: OpInfo("CALLDATACOPY", 3, 0),
    0x38: OpInfo("CODESIZE", 0, 1),
    0x39: OpInfo("CODECOPY", 3, 0),
    0x3A: OpInfo("GASPRICE", 0, 1),
    0x3B: OpInfo("EXTCODESIZE", 1, 1),
    0x3C: OpInfo("EXTCODECOPY", 4, 0),
    0x3D: OpInfo("RETURNDATASIZE", 0, 1),
    0x3E: OpInfo("RETURNDATACOPY", 3, 0),
    0x3F: OpInfo("EXTCODEHASH", 1, 1),
    0x40: OpInfo("BLOCKHASH", 1, 1),
    0x41: OpInfo("COINBASE", 0, 1),
    0x42: OpInfo("TIMESTAMP", 0, 1),
    0x43: OpInfo("NUMBER", 0, 1),
    0x44: OpInfo("DIFFICULTY", 0, 1),
    0x45: OpInfo("GASLIMIT", 0, 1),
    0x46: OpInfo("CHAINID", 0, 1),
    0x47: OpInfo("SELFBALANCE", 0, 1),
    0x50: OpInfo("POP", 1, 0),
    0x51: OpInfo("MLOAD", 1, 1),
    0x52: OpInfo("MSTORE", 2, 0),
    0x53: OpInfo("MSTORE8", 2, 0),
    0x54: OpInfo("SLOAD", 1, 1),
    0x55: OpInfo("SSTORE", 2, 0),
    0x56: OpInfo("JUMP", 1, 0),
    0x57: OpInfo("JUMPI", 2, 0),
    0x58: OpInfo("PC", 0, 1),
    0x59: OpInfo("MSIZE", 0, 1),
    0x5A: OpInfo("GAS", 0, 1),
    0x5B: OpInfo("JUMPDEST", 0, 0),
    0xA0: OpInfo("LOG0", 2, 0),
    0xA1: OpInfo("LOG1", 3, 0),
    0xA2: OpInfo("LOG2", 4, 0),
    0xA3: OpInfo("LOG3", 5, 0),
    0xA4: OpInfo("LOG4", 6, 0),
    0xF0: OpInfo("CREATE", 3, 1),
    0xF1: OpInfo("CALL", 7, 1),
    0xF2: OpInfo("CALLCODE", 7, 1),
    0xF3: OpInfo("RETURN", 2, 0),
    0xF4: OpInfo("DELEGATECALL", 6, 1),
    0xF5: OpInfo("CREATE2", 4, 1),
    0xFA: OpInfo("STATICCALL", 6, 1),
    0xFD: OpInfo("REVERT", 2, 0),
    0xFE: OpInfo("INVALID", 0, 0),
    0xFF: OpInfo("SELFDESTRUCT", 1, 0),
}
for _n in range(1, 33):
    OPCODES[0x5F + _n] = OpInfo(f"PUSH{_n}", 0, 1)
for _n in range(1, 17):
    OPCODES[0x7F + _n] = OpInfo(f"DUP{_n}", _n, _n + 1)
    OPCODES[0x8F + _n] = OpInfo(f"SWAP{_n}", _n + 1, _n + 1)

BY_NAME: dict[str, int] = {info.name: op for op, info in OPCODES.items()}
BY_NAME["SHA3"] = 0x20

# ops that end a basic block
TERMINATORS = frozenset(
    BY_NAME[n] for n in ("STOP", "JUMP", "JUMPI", "RETURN", "REVERT", "INVALID", "SELFDESTRUCT")
)
HALTING = frozenset(BY_NAME[n] for n in ("STOP", "RETURN", "REVERT", "INVALID", "SELFDESTRUCT"))
CALL_OPS = frozenset(BY_NAME[n] for n in ("CALL", "CALLCODE", "DELEGATECALL", "STATICCALL"))

JUMPDEST = 0x5B
JUMP = 0x56
JUMPI = 0x57
PUSH1 = 0x60
PUSH32 = 0x7F


def is_push(op: int) -> bool:
    return PUSH1 <= op <= PUSH32


def push_width(op: int) -> int:
    return op - PUSH1 + 1 if is_push(op) else 0


def op_name(op: int) -> str:
    info = OPCODES.get(op)
    return info.name if info else f"UNKNOWN_0x{op:02x}"


@dataclass(frozen=True)
class Instruction:
    pc: int
    op: int
    imm: int | None = None  # PUSH immediate, zero-extended if truncated by end of code

    @property
    def name(self) -> str:
        return op_name(self.op)

    @property
    def size(self) -> int:
        return 1 + push_width(self.op)

    @property
    def next_pc(self) -> int:
        return self.pc + self.size

    def __str__(self) -> str:
        if self.imm is None:
            return f"0x{self.pc:04x}: {self.name}"
        return f"0x{self.pc:04x}: {self.name} 0x{self.imm:0{2 * push_width(self.op)}x}"


def iter_instructions(code: bytes) -> Iterator[Instruction]:
    pc = 0
    n = len(code)
    while pc < n:
        op = code[pc]
        width = push_width(op)
        if width:
            raw = code[pc + 1 : pc + 1 + width]
            imm = int.from_bytes(raw.ljust(width, b"\x00"), "big")
            yield Instruction(pc, op, imm)
        else:
            yield Instruction(pc, op)
        pc += 1 + width


def disassemble(code: bytes) -> list[Instruction]:
    return list(iter_instructions(code))


def valid_jumpdests(code: bytes) -> frozenset[int]:
    return frozenset(ins.pc for ins in iter_instructions(code) if ins.op == JUMPDEST)


def static_block_starts(code: bytes) -> frozenset[int]:
    """Offsets that begin a basic block: 0, every JUMPDEST, every instruction after a terminator."""
    starts = {0}
    for ins in iter_instructions(code):
        if ins.op == JUMPDEST:
            starts.add(ins.pc)
        if ins.op in TERMINATORS:
            starts.add(ins.next_pc)
    return frozenset(s for s in starts if s < len(code) or s == 0)


def format_listing(code: bytes) -> str:
    return "\n".join(str(ins) for ins in iter_instructions(code))
