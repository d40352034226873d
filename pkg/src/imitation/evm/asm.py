"""A small two-pass assembler used to author reference contracts and injected code.

Syntax, one whitespace-separated token stream:

    name:            define a label here and emit a JUMPDEST
    @name            PUSH2 <label offset>
    PUSH <v>         shortest PUSH for v; PUSHn <v> forces the width
    SEL:sig          PUSH4 function selector of sig, e.g. SEL:transfer(address,uint256)
    TOPIC:sig        PUSH32 event topic of sig
    .org <offset>    pad with INVALID up to offset
    .bytes <hex>     raw bytes
    ; comment        to end of line

PUSH operands may be integers or names resolved from the ``consts`` mapping.
"""

from __future__ import annotations

import re
from typing import Mapping

from .hashing import event_topic, selector
from .opcodes import BY_NAME, JUMPDEST


class AsmError(ValueError):
    pass


_COMMENT = re.compile(r";[^\n]*")


def _min_width(value: int) -> int:
    return max(1, (value.bit_length() + 7) // 8)


def _parse_int(tok: str, consts: Mapping[str, int]) -> int:
    if tok in consts:
        return consts[tok]
    try:
        return int(tok, 0)
    except ValueError:
        raise AsmError(f"unresolved operand {tok!r}") from None


def assemble(source: str, consts: Mapping[str, int] | None = None, origin: int = 0) -> bytes:
    """Assemble ``source``; ``origin`` is the code offset the output will be placed at."""
    return assemble_with_labels(source, consts, origin)[0]


def assemble_with_labels(
    source: str, consts: Mapping[str, int] | None = None, origin: int = 0
) -> tuple[bytes, dict[str, int]]:
    consts = dict(consts or {})
    tokens = _COMMENT.sub("", source).split()

    # pass 1: sizes and label offsets
    labels: dict[str, int] = {}
    items: list[tuple] = []
    pc = origin
    i = 0
    while i < len(tokens):
        tok = tokens[i]
        if tok.endswith(":") and not tok.startswith(("SEL:", "TOPIC:")):
            name = tok[:-1]
            if name in labels:
                raise AsmError(f"duplicate label {name!r}")
            labels[name] = pc
            items.append(("op", JUMPDEST))
            pc += 1
        elif tok.startswith("@"):
            items.append(("label", tok[1:]))
            pc += 3
        elif tok.startswith("SEL:"):
            items.append(("push", 4, selector(tok[4:])))
            pc += 5
        elif tok.startswith("TOPIC:"):
            items.append(("push", 32, event_topic(tok[6:])))
            pc += 33
        elif tok == ".org":
            target = int(tokens[i + 1], 0)
            if target < pc:
                raise AsmError(f".org 0x{target:x} is behind current offset 0x{pc:x}")
            items.append(("raw", b"\xfe" * (target - pc)))
            pc = target
            i += 1
        elif tok == ".bytes":
            raw = bytes.fromhex(tokens[i + 1].removeprefix("0x"))
            items.append(("raw", raw))
            pc += len(raw)
            i += 1
        elif tok.upper() == "PUSH":
            value = _parse_int(tokens[i + 1], consts)
            width = _min_width(value)
            items.append(("push", width, value))
            pc += 1 + width
            i += 1
        elif re.fullmatch(r"PUSH([1-9]|[12][0-9]|3[0-2])", tok.upper()):
            width = int(tok[4:])
            operand = tokens[i + 1]
            if operand.startswith("@"):
                items.append(("label_w", width, operand[1:]))
            else:
                items.append(("push", width, _parse_int(operand, consts)))
            pc += 1 + width
            i += 1
        else:
            name = tok.upper()
            if name not in BY_NAME:
                raise AsmError(f"unknown mnemonic {tok!r}")
            items.append(("op", BY_NAME[name]))
            pc += 1
        i += 1

    # pass 2: emit
    out = bytearray()
    for item in items:
        kind = item[0]
        if kind == "op":
            out.append(item[1])
        elif kind == "raw":
            out += item[1]
        elif kind in ("label", "label_w"):
            width = 2 if kind == "label" else item[1]
            name = item[-1]
            if name not in labels:
                raise AsmError(f"undefined label {name!r}")
            out.append(0x5F + width)
            out += labels[name].to_bytes(width, "big")
        else:
            _, width, value = item
            if value < 0 or value >= 1 << (8 * width):
                raise AsmError(f"value 0x{value:x} does not fit PUSH{width}")
            out.append(0x5F + width)
            out += value.to_bytes(width, "big")
    return bytes(out), labels
