"""Dynamic control-flow graph of one executed transaction, with value provenance."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Sequence, Union

from .evm.hooks import FrameView, Step
from .evm.interpreter import Create2Unsupported, FrameOutcome, execute_transaction
from .evm.opcodes import BY_NAME, CALL_OPS, JUMP, JUMPI, TERMINATORS, iter_instructions, op_name, static_block_starts
from .evm.state import ExecutionResult, Status, Transaction, WorldState, hex_address
from .shadow import Lattice, ShadowTracker, identity_source

__all__ = [
    "BlockRef", "CallEdge", "Calldata", "CodeConstant", "Computed", "Create2Unsupported", "DCFG", "Edge",
    "Environment", "FrameTrace", "JumpiRecord", "Provenance", "ProvenanceLattice", "StorageSlot",
    "VictimExecutionFailed", "build_dcfg", "block_sequence", "replay_pcs", "trace_transaction",
]


class VictimExecutionFailed(Exception):
    def __init__(self, result: ExecutionResult):
        super().__init__(f"victim transaction ended with {result.status.value}"
                         + (f" ({result.error})" if result.error else ""))
        self.result = result


# ---------------------------------------------------------------- provenance

@dataclass(frozen=True)
class CodeConstant:
    contract: int
    pc: int

    def to_json(self) -> dict:
        return {"kind": "code-constant", "contract": hex_address(self.contract), "pc": self.pc}


@dataclass(frozen=True)
class StorageSlot:
    contract: int
    slot: int

    def to_json(self) -> dict:
        return {"kind": "storage-slot", "contract": hex_address(self.contract), "slot": hex(self.slot)}


@dataclass(frozen=True)
class Calldata:
    offset: int

    def to_json(self) -> dict:
        return {"kind": "calldata", "offset": self.offset}


@dataclass(frozen=True)
class Environment:
    op: str

    def to_json(self) -> dict:
        return {"kind": "environment", "op": self.op}


@dataclass(frozen=True)
class Computed:
    def to_json(self) -> dict:
        return {"kind": "computed"}


Provenance = Union[CodeConstant, StorageSlot, Calldata, Environment, Computed]
COMPUTED = Computed()


class _NoInfluence:
    """Join identity; offsets and keys never change where a loaded word came from."""

    def __repr__(self) -> str:
        return "NO_INFLUENCE"


_NO_INFLUENCE = _NoInfluence()


class ProvenanceLattice(Lattice[Provenance]):
    """Where a word came from. Any mixing collapses to ``Computed``.

    Arithmetic keeps an operand's provenance when the result equals that operand
    (masking an address with 2**160-1, adding zero) so a constant survives the
    usual compiler idioms.
    """

    bottom = COMPUTED

    def join(self, a: Provenance, b: Provenance) -> Provenance:
        if a is _NO_INFLUENCE:
            return b
        if b is _NO_INFLUENCE:
            return a
        return a if a == b else COMPUTED

    def join_all(self, tags) -> Provenance:
        out = _NO_INFLUENCE
        for t in tags:
            out = self.join(out, t)
        return COMPUTED if out is _NO_INFLUENCE else out

    def index_influence(self, tag: Provenance) -> Provenance:
        return _NO_INFLUENCE

    def constant(self, contract: int, pc: int, value: int) -> Provenance:
        return CodeConstant(contract, pc)

    def environment(self, op: int, frame: FrameView, value: int) -> Provenance:
        return Environment(op_name(op))

    def combine(self, op, in_tags, in_vals, out_val) -> Provenance:
        i = identity_source(op, in_tags, in_vals, out_val)
        return in_tags[i] if i is not None else COMPUTED

    def memory_read(self, pieces, start, end) -> Provenance:
        if len(pieces) == 1 and pieces[0][0] == start and pieces[0][1] == end:
            return pieces[0][2]
        return COMPUTED

    def root_calldata(self, offset: int, size: int) -> Provenance:
        return Calldata(offset)

    def sload(self, contract, key, key_tag, stored, poison) -> Provenance:
        return StorageSlot(contract, key)

    def call_result(self, in_tags, args) -> Provenance:
        return COMPUTED


# ---------------------------------------------------------------- graph types

@dataclass(frozen=True, order=True)
class BlockRef:
    contract: int
    start: int
    end: int

    def to_json(self) -> dict:
        return {"contract": hex_address(self.contract), "start": self.start, "end": self.end}


@dataclass(frozen=True)
class Edge:
    src: BlockRef
    dst: BlockRef
    kind: str  # fallthrough | jump | jumpi-taken | jumpi-not-taken


@dataclass(frozen=True)
class CallEdge:
    frame_index: int  # caller frame
    caller_block: BlockRef
    caller: int  # storage context of the caller
    pc: int
    kind: str
    callee: int
    value: int
    target_provenance: Provenance
    callee_frame: int | None = None
    success: bool | None = None

    def to_json(self) -> dict:
        return {
            "frameIndex": self.frame_index,
            "callerBlock": self.caller_block.to_json(),
            "caller": hex_address(self.caller),
            "pc": self.pc,
            "kind": self.kind,
            "callee": hex_address(self.callee),
            "value": hex(self.value),
            "targetProvenance": self.target_provenance.to_json(),
            "calleeFrame": self.callee_frame,
            "success": self.success,
        }


@dataclass(frozen=True)
class JumpiRecord:
    frame_index: int
    seq_index: int
    contract: int
    pc: int
    condition: bool
    destination: int

    def to_json(self) -> dict:
        return {"frameIndex": self.frame_index, "seqIndex": self.seq_index, "contract": hex_address(self.contract),
                "pc": self.pc, "condition": self.condition, "destination": self.destination}


@dataclass
class FrameTrace:
    index: int
    parent: int | None
    depth: int
    kind: str
    address: int
    code_address: int
    caller: int
    value: int
    code: bytes
    pcs: list[int] = field(default_factory=list)
    ops: list[int] = field(default_factory=list)
    status: Status | None = None
    exit_seq: int | None = None  # position in frame-exit order

    @cached_property
    def blocks(self) -> list[BlockRef]:
        # only read once the run is over; the pc stream is final by then
        return block_sequence(self.code_address, self.code, self.pcs, self.ops)


def block_sequence(contract: int, code: bytes, pcs: Sequence[int], ops: Sequence[int]) -> list[BlockRef]:
    """Split one frame's executed pc stream into basic blocks."""
    if not pcs:
        return []
    starts = _starts(code)
    out = []
    cur = pcs[0]
    for i in range(1, len(pcs)):
        if pcs[i] in starts or ops[i - 1] in TERMINATORS or pcs[i] != _next_pc(pcs[i - 1], ops[i - 1]):
            out.append(BlockRef(contract, cur, pcs[i - 1]))
            cur = pcs[i]
    out.append(BlockRef(contract, cur, pcs[-1]))
    return out


@lru_cache(maxsize=256)
def _starts(code: bytes) -> frozenset[int]:
    return static_block_starts(code)


def _next_pc(pc: int, op: int) -> int:
    return pc + 1 + (op - 0x5F if 0x60 <= op <= 0x7F else 0)


def replay_pcs(code: bytes, blocks: Sequence[BlockRef]) -> list[int]:
    """Rebuild the executed pc stream from a block sequence."""
    listing = [ins.pc for ins in iter_instructions(code)]
    index = {pc: i for i, pc in enumerate(listing)}
    out: list[int] = []
    for b in blocks:
        if b.start not in index:  # implicit STOP past the end of code
            out.append(b.start)
            continue
        i = index[b.start]
        while True:
            out.append(listing[i])
            if listing[i] == b.end:
                break
            i += 1
    return out


@dataclass
class DCFG:
    tx: Transaction
    pre_state: WorldState
    frames: list[FrameTrace] = field(default_factory=list)
    call_edges: list[CallEdge] = field(default_factory=list)
    jumpi_records: list[JumpiRecord] = field(default_factory=list)
    jump_sources: dict[tuple[int, int], set[Provenance]] = field(default_factory=lambda: defaultdict(set))
    storage_reads: dict[tuple[int, int], int] = field(default_factory=dict)
    opcode_counts: dict[int, dict[str, int]] = field(default_factory=lambda: defaultdict(lambda: defaultdict(int)))

    # derived views --------------------------------------------------

    @property
    def nodes(self) -> list[BlockRef]:
        seen: dict[BlockRef, None] = {}
        for f in self.frames:
            for b in f.blocks:
                seen.setdefault(b, None)
        return list(seen)

    @property
    def edges(self) -> list[Edge]:
        jumpi = {(r.frame_index, r.pc): [] for r in self.jumpi_records}
        for r in self.jumpi_records:
            jumpi[(r.frame_index, r.pc)].append(r.condition)
        seen: dict[Edge, None] = {}
        for f in self.frames:
            blocks = f.blocks
            cursor: dict[int, int] = defaultdict(int)
            for a, b in zip(blocks, blocks[1:]):
                last_op = f.code[a.end] if a.end < len(f.code) else 0
                if last_op == JUMP:
                    kind = "jump"
                elif last_op == JUMPI:
                    conds = jumpi[(f.index, a.end)]
                    cond = conds[cursor[a.end]]
                    cursor[a.end] += 1
                    kind = "jumpi-taken" if cond else "jumpi-not-taken"
                else:
                    kind = "fallthrough"
                seen.setdefault(Edge(a, b, kind), None)
            # a JUMPI ending the frame still consumes a record
        return list(seen)

    def executed_pcs(self, contract: int) -> set[int]:
        out: set[int] = set()
        for f in self.frames:
            if f.code_address == contract:
                out.update(f.pcs)
        return out

    def contracts(self) -> list[int]:
        seen: dict[int, None] = {}
        for f in self.frames:
            if f.pcs:
                seen.setdefault(f.code_address, None)
        return list(seen)

    def code_of(self, contract: int) -> bytes:
        for f in self.frames:
            if f.code_address == contract and f.kind != "CREATE":
                return f.code
        return self.pre_state.code(contract)

    def jumpi_outcomes(self) -> dict[tuple[int, int], set[bool]]:
        out: dict[tuple[int, int], set[bool]] = defaultdict(set)
        for r in self.jumpi_records:
            out[(r.contract, r.pc)].add(r.condition)
        return out

    def bi_branch(self) -> set[tuple[int, int]]:
        """(contract, JUMPI pc) pairs that went both ways during the run."""
        return {k for k, v in self.jumpi_outcomes().items() if len(v) == 2}

    def last_frame_of(self, contract: int) -> FrameTrace | None:
        """The successful frame running ``contract``'s code that exited last."""
        best = None
        for f in self.frames:
            if f.code_address == contract and f.pcs and self.frame_succeeded(f.index):
                if best is None or f.exit_seq > best.exit_seq:
                    best = f
        return best

    def frame_succeeded(self, index: int) -> bool:
        """True when the frame and every ancestor completed successfully."""
        f = self.frames[index]
        while f is not None:
            if f.status is not Status.SUCCESS:
                return False
            f = self.frames[f.parent] if f.parent is not None else None
        return True

    def instruction_count(self) -> int:
        return sum(len(f.pcs) for f in self.frames)

    def to_json(self) -> dict:
        return {
            "tx": self.tx.canonical(),
            "frames": [
                {"index": f.index, "parent": f.parent, "depth": f.depth, "kind": f.kind,
                 "address": hex_address(f.address), "codeAddress": hex_address(f.code_address),
                 "status": f.status.value if f.status else None,
                 "blocks": [b.to_json() for b in f.blocks]}
                for f in self.frames
            ],
            "nodes": [b.to_json() for b in self.nodes],
            "edges": [{"src": e.src.to_json(), "dst": e.dst.to_json(), "kind": e.kind} for e in self.edges],
            "callEdges": [c.to_json() for c in self.call_edges],
            "jumpiRecord": [r.to_json() for r in self.jumpi_records],
            "storageReads": [
                {"contract": hex_address(a), "slot": hex(s), "value": hex(v)}
                for (a, s), v in sorted(self.storage_reads.items())
            ],
        }


# ---------------------------------------------------------------- builder

_SLOAD = BY_NAME["SLOAD"]
_CREATE = BY_NAME["CREATE"]


class DcfgBuilder(ShadowTracker[Provenance]):
    def __init__(self, tx: Transaction, pre_state: WorldState):
        super().__init__(ProvenanceLattice())
        self.dcfg = DCFG(tx=tx, pre_state=pre_state)
        self._open_calls: dict[int, int] = {}  # caller frame index -> call edge index
        self._exits = 0

    def enter_frame(self, frame: FrameView) -> None:
        super().enter_frame(frame)
        self.dcfg.frames.append(FrameTrace(
            index=frame.index, parent=frame.parent_index, depth=frame.depth, kind=frame.kind,
            address=frame.address, code_address=frame.code_address, caller=frame.caller,
            value=frame.value, code=frame.code,
        ))
        parent = frame.parent_index
        if parent is not None and parent in self._open_calls:
            i = self._open_calls[parent]
            e = self.dcfg.call_edges[i]
            self.dcfg.call_edges[i] = CallEdge(**{**e.__dict__, "callee_frame": frame.index,
                                                  "callee": frame.address if e.kind == "CREATE" else e.callee})

    def exit_frame(self, frame: FrameView, outcome: FrameOutcome) -> None:
        super().exit_frame(frame, outcome)
        ft = self.dcfg.frames[frame.index]
        ft.status = outcome.status
        ft.exit_seq = self._exits
        self._exits += 1

    def pre_step(self, step: Step) -> None:
        fv = step.frame
        ft = self.dcfg.frames[fv.index]
        op, pc, stack = step.op, step.pc, step.stack
        ft.pcs.append(pc)
        ft.ops.append(op)
        self.dcfg.opcode_counts[fv.code_address][op_name(op)] += 1
        if op == JUMPI and len(stack) >= 2:
            self.dcfg.jumpi_records.append(JumpiRecord(fv.index, step.seq, fv.code_address, pc,
                                                       bool(stack[-2]), stack[-1]))
            self.dcfg.jump_sources[(fv.code_address, pc)].add(self.stack_tag(0))
        elif op == JUMP and stack:
            self.dcfg.jump_sources[(fv.code_address, pc)].add(self.stack_tag(0))
        elif op == _SLOAD and stack:
            key = (fv.address, stack[-1])
            if key not in self.dcfg.storage_reads:
                self.dcfg.storage_reads[key] = self.dcfg.pre_state.storage_at(*key)
        elif (op in CALL_OPS and len(stack) >= 7 - (op in (0xF4, 0xFA))) or (op == _CREATE and len(stack) >= 3):
            self._record_call(step, ft)
        super().pre_step(step)

    def _record_call(self, step: Step, ft: FrameTrace) -> None:
        op, stack, fv = step.op, step.stack, step.frame
        if op == _CREATE:
            callee, value, prov = 0, stack[-1], Environment("CREATE")
        else:
            callee = stack[-2] & ((1 << 160) - 1)
            value = stack[-3] if op in (0xF1, 0xF2) else 0
            prov = self.stack_tag(1)
        blocks = block_sequence(ft.code_address, ft.code, ft.pcs, ft.ops)
        self._open_calls[fv.index] = len(self.dcfg.call_edges)
        self.dcfg.call_edges.append(CallEdge(
            frame_index=fv.index, caller_block=blocks[-1], caller=fv.address, pc=step.pc,
            kind=op_name(op), callee=callee, value=value, target_provenance=prov,
        ))

    def post_step(self, step: Step) -> None:
        op = step.op
        if op in CALL_OPS or op == _CREATE:
            i = self._open_calls.pop(step.frame.index, None)
            if i is not None:
                e = self.dcfg.call_edges[i]
                ok = bool(step.stack[-1]) if step.stack else False
                changes = {"success": ok}
                if op == _CREATE and ok:
                    changes["callee"] = step.stack[-1]
                self.dcfg.call_edges[i] = CallEdge(**{**e.__dict__, **changes})
        super().post_step(step)


def trace_transaction(state: WorldState, tx: Transaction, gas_table=None) -> tuple[DCFG, ExecutionResult]:
    """Like :func:`build_dcfg` but returns the graph whatever the outcome."""
    builder = DcfgBuilder(tx, state.copy())
    result = execute_transaction(state, tx, hooks=builder, gas_table=gas_table)
    return builder.dcfg, result


def build_dcfg(state: WorldState, tx_v: Transaction, gas_table=None) -> tuple[DCFG, ExecutionResult]:
    """Execute ``tx_v`` on a copy of ``state`` and record its dynamic control-flow graph."""
    dcfg, result = trace_transaction(state, tx_v, gas_table)
    if not result.success:
        raise VictimExecutionFailed(result)
    return dcfg, result
