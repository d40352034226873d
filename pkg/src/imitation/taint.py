"""Forced-path taint replay of an imitation transaction against the victim's recorded branches."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

from .evm.hooks import FrameView, HookSet, Step
from .evm.interpreter import execute_transaction
from .evm.opcodes import BY_NAME, JUMPI, TERMINATORS
from .evm.state import ExecutionResult, Transaction, WorldState, hex_address
from .shadow import Lattice, ShadowTracker
from .trace import DCFG, BlockRef, JumpiRecord, _next_pc, _starts

DEFAULT_SOURCES = frozenset({"ORIGIN", "CALLER", "ADDRESS", "CODESIZE", "SELFBALANCE", "PC"})


class TraceMisalignment(Exception):
    pass


@dataclass(frozen=True)
class TaintTag:
    origins: frozenset[str] = frozenset()

    @property
    def tainted(self) -> bool:
        return bool(self.origins)

    def __or__(self, other: TaintTag) -> TaintTag:
        if not other.origins or other.origins <= self.origins:
            return self
        if not self.origins:
            return other
        return TaintTag(self.origins | other.origins)


CLEAN = TaintTag()


def introduce_taint(opcode: str, sources: Iterable[str] = DEFAULT_SOURCES) -> TaintTag:
    """Tag a word freshly produced by ``opcode``."""
    name = opcode.upper()
    return TaintTag(frozenset({name})) if name in frozenset(sources) else CLEAN


class TaintLattice(Lattice[TaintTag]):
    bottom = CLEAN

    def __init__(self, sources: Iterable[str] = DEFAULT_SOURCES):
        self.sources = frozenset(s.upper() for s in sources)
        self._fresh = {BY_NAME[s]: TaintTag(frozenset({s})) for s in self.sources}

    def join(self, a: TaintTag, b: TaintTag) -> TaintTag:
        return a | b

    def environment(self, op: int, frame: FrameView, value: int) -> TaintTag:
        return self._fresh.get(op, CLEAN)

    def index_influence(self, tag: TaintTag) -> TaintTag:
        return tag


@dataclass(frozen=True)
class TaintedBlock:
    block: BlockRef
    jumpi_pc: int
    victim_condition: bool
    imitation_condition: bool
    origins: frozenset[str]

    def to_json(self) -> dict:
        return {"block": self.block.to_json(), "jumpiPc": self.jumpi_pc, "victimCondition": self.victim_condition,
                "imitationCondition": self.imitation_condition, "origins": sorted(self.origins)}


@dataclass(frozen=True)
class ConditionObservation:
    frame_index: int
    seq_index: int
    contract: int
    pc: int
    value: bool
    tag: TaintTag


@dataclass
class TaintReport:
    tainted_blocks: list[TaintedBlock] = field(default_factory=list)
    aligned_ok: bool = True
    bi_branch: set[tuple[int, int]] = field(default_factory=set)
    untainted_mismatches: list[JumpiRecord] = field(default_factory=list)
    conditions: list[ConditionObservation] = field(default_factory=list)
    forced: int = 0
    result: ExecutionResult | None = None

    @property
    def tainted_contracts(self) -> set[int]:
        return {tb.block.contract for tb in self.tainted_blocks}

    @property
    def empty(self) -> bool:
        return not self.tainted_blocks

    def to_json(self) -> dict:
        return {
            "taintedBlocks": [tb.to_json() for tb in self.tainted_blocks],
            "taintedContracts": sorted(hex_address(c) for c in self.tainted_contracts),
            "alignedOk": self.aligned_ok,
            "biBranch": [{"contract": hex_address(c), "pc": pc} for c, pc in sorted(self.bi_branch)],
            "forcedJumpis": self.forced,
            "imitationStatus": self.result.status.value if self.result else None,
        }


class _ForcedTaintReplay(ShadowTracker[TaintTag]):
    mutates_stack = True

    def __init__(self, dcfg: DCFG, sources: Iterable[str]):
        super().__init__(TaintLattice(sources))
        self.victim = {(r.frame_index, r.seq_index): r for r in dcfg.jumpi_records}
        self.victim_bi = dcfg.bi_branch()
        self.report = TaintReport()
        self._seen: set[tuple[BlockRef, int]] = set()
        self._block: dict[int, tuple[int, int, int]] = {}  # frame -> (block start, prev pc, prev op)
        self._counts: dict[int, list[int]] = {}  # frame -> [instructions, jumpis]
        self._frames: list[tuple[int, int, bytes]] = []  # (index, code address, code)

    def enter_frame(self, frame: FrameView) -> None:
        super().enter_frame(frame)
        self._counts[frame.index] = [0, 0]
        self._frames.append((frame.index, frame.code_address, frame.code))

    def pre_step(self, step: Step) -> None:
        fv = step.frame
        pc, op = step.pc, step.op
        prev = self._block.get(fv.index)
        if (prev is None or pc in _starts(fv.code) or prev[2] in TERMINATORS
                or pc != _next_pc(prev[1], prev[2])):
            start = pc
        else:
            start = prev[0]
        self._block[fv.index] = (start, pc, op)
        counts = self._counts[fv.index]
        counts[0] += 1
        if op == JUMPI and len(step.stack) >= 2:
            counts[1] += 1
            self._jumpi(step, start)
        super().pre_step(step)

    def _jumpi(self, step: Step, block_start: int) -> None:
        fv = step.frame
        rec = self.victim.get((fv.index, step.seq))
        if rec is None or rec.pc != step.pc or rec.contract != fv.code_address:
            where = f"frame {fv.index} step {step.seq} pc 0x{step.pc:x}"
            raise TraceMisalignment(f"no matching victim JUMPI at {where}")
        tag = self.stack_tag(1)
        actual = bool(step.stack[-2])
        self.report.conditions.append(ConditionObservation(fv.index, step.seq, fv.code_address, step.pc, actual, tag))
        if actual == rec.condition:
            return
        if tag.tainted:
            block = BlockRef(fv.code_address, block_start, step.pc)
            if (block, step.pc) not in self._seen:
                self._seen.add((block, step.pc))
                self.report.tainted_blocks.append(TaintedBlock(block, step.pc, rec.condition, actual, tag.origins))
                if (fv.code_address, step.pc) in self.victim_bi:
                    self.report.bi_branch.add((fv.code_address, step.pc))
        else:
            self.report.aligned_ok = False
            self.report.untainted_mismatches.append(rec)
        step.stack[-2] = 1 if rec.condition else 0
        self.report.forced += 1


def taint_replay(state: WorldState, tx_c: Transaction, victim_dcfg: DCFG,
                 sources: Iterable[str] = DEFAULT_SOURCES, gas_table=None) -> TaintReport:
    """Run ``tx_c`` once, pinned to the victim's branch outcomes, and report tainted blocks."""
    replay = _ForcedTaintReplay(victim_dcfg, sources)
    result = execute_transaction(state, tx_c, HookSet(replay, allow_stack_mutation=True), gas_table=gas_table)
    # frames are matched by the code they run: plain accounts may legitimately change
    # (the sender's own address becomes the adversary's)
    victim_shape = [(f.index, f.code_address, len(f.pcs), sum(1 for o in f.ops if o == JUMPI))
                    for f in victim_dcfg.frames]
    ours = [(i, addr, *replay._counts[i]) for i, addr, _ in replay._frames]
    same = len(victim_shape) == len(ours) and all(
        v[0] == o[0] and v[2:] == o[2:] and f.code == code and (v[1] == o[1] or not code)
        for v, o, f, (_, _, code) in zip(victim_shape, ours, victim_dcfg.frames, replay._frames))
    if not same:
        raise TraceMisalignment(_shape_diff(victim_shape, ours))
    replay.report.result = result
    return replay.report


def _shape_diff(victim: list, ours: list) -> str:
    if len(victim) != len(ours):
        return f"victim ran {len(victim)} frames, imitation ran {len(ours)}"
    for v, o in zip(victim, ours):
        if v != o:
            return (f"frame {v[0]}: victim {hex_address(v[1])} {v[2]} steps/{v[3]} JUMPIs, "
                    f"imitation {hex_address(o[1])} {o[2]} steps/{o[3]} JUMPIs")
    return "shape mismatch"
