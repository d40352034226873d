"""Shadow state that follows every word through stack, memory, storage and call buffers.

The tracker is parameterised by a :class:`Lattice` that decides what a tag is and
how tags combine. Two lattices live elsewhere: value provenance (trace) and
source taint (taint). The tracker owns the bookkeeping they share:

* a shadow stack per frame, kept the same depth as the real stack
* an interval map per frame for memory, plus one for calldata and returndata
* storage tags keyed by (contract, slot)
* argument tags flowing into a callee's calldata and return tags flowing back

Reads and writes at an address that is itself tagged can make far-away data
differ, so the lattice may ask for such accesses to poison the whole region.
"""

from __future__ import annotations

from bisect import bisect_right
from typing import Generic, Iterator, Sequence, TypeVar

from .evm.hooks import FrameView, Hooks, Step
from .evm.interpreter import FrameOutcome
from .evm.opcodes import OPCODES, BY_NAME, is_push

T = TypeVar("T")

_IDENTITY_OPS = frozenset(
    BY_NAME[n] for n in ("ADD", "SUB", "MUL", "DIV", "SDIV", "MOD", "SMOD", "EXP", "SIGNEXTEND",
                         "AND", "OR", "XOR", "SHL", "SHR", "SAR", "ADDMOD", "MULMOD")
)
ENVIRONMENT_OPS = frozenset(
    BY_NAME[n] for n in ("ADDRESS", "ORIGIN", "CALLER", "CALLVALUE", "CALLDATASIZE", "CODESIZE", "GASPRICE",
                         "RETURNDATASIZE", "COINBASE", "TIMESTAMP", "NUMBER", "DIFFICULTY", "GASLIMIT",
                         "CHAINID", "SELFBALANCE", "PC", "GAS", "MSIZE")
)
_COPY_OPS = {BY_NAME["CALLDATACOPY"]: "calldata", BY_NAME["CODECOPY"]: "code",
             BY_NAME["RETURNDATACOPY"]: "returndata", BY_NAME["EXTCODECOPY"]: "extcode"}
_CALLS = {BY_NAME["CALL"]: 3, BY_NAME["CALLCODE"]: 3, BY_NAME["DELEGATECALL"]: 2, BY_NAME["STATICCALL"]: 2}
_CREATE = BY_NAME["CREATE"]
_MSTORE, _MSTORE8, _MLOAD = BY_NAME["MSTORE"], BY_NAME["MSTORE8"], BY_NAME["MLOAD"]
_SLOAD, _SSTORE = BY_NAME["SLOAD"], BY_NAME["SSTORE"]
_CALLDATALOAD, _KECCAK = BY_NAME["CALLDATALOAD"], BY_NAME["KECCAK256"]
_RETURN, _REVERT = BY_NAME["RETURN"], BY_NAME["REVERT"]
_LOGS = frozenset(range(0xA0, 0xA5))


class Lattice(Generic[T]):
    """Tag algebra consumed by :class:`ShadowTracker`. ``bottom`` tags untouched data."""

    bottom: T

    def join(self, a: T, b: T) -> T:
        raise NotImplementedError

    def join_all(self, tags: Sequence[T]) -> T:
        out = self.bottom
        for t in tags:
            out = self.join(out, t)
        return out

    def constant(self, contract: int, pc: int, value: int) -> T:
        return self.bottom

    def environment(self, op: int, frame: FrameView, value: int) -> T:
        return self.bottom

    def combine(self, op: int, in_tags: Sequence[T], in_vals: Sequence[int], out_val: int) -> T:
        return self.join_all(in_tags)

    def memory_read(self, pieces: Sequence[tuple[int, int, T]], start: int, end: int) -> T:
        """Tag for a word read from ``[start, end)``; ``pieces`` are the overlapping tagged spans."""
        return self.join_all([t for _, _, t in pieces])

    def root_calldata(self, offset: int, size: int) -> T:
        """Tag for transaction calldata read at the outermost frame."""
        return self.bottom

    def sload(self, contract: int, key: int, key_tag: T, stored: T, poison: T) -> T:
        return self.join_all((stored, key_tag, poison))

    def index_influence(self, tag: T) -> T:
        """What an access at a tagged offset/key leaks into the accessed region."""
        return self.bottom

    def call_result(self, in_tags: Sequence[T], args: T) -> T:
        return self.join(self.join_all(in_tags), args)


class IntervalMap(Generic[T]):
    """Non-overlapping half-open byte spans, each carrying one tag."""

    __slots__ = ("_starts", "_spans")

    def __init__(self, spans: Sequence[tuple[int, int, T]] = ()):
        self._spans: list[tuple[int, int, T]] = sorted(spans, key=lambda span: span[0])
        self._starts = [s for s, _, _ in self._spans]

    def __iter__(self) -> Iterator[tuple[int, int, T]]:
        return iter(self._spans)

    def __len__(self) -> int:
        return len(self._spans)

    def _first_overlap(self, start: int) -> int:
        i = bisect_right(self._starts, start) - 1
        if i >= 0 and self._spans[i][1] > start:
            return i
        return i + 1

    def overlapping(self, start: int, end: int) -> list[tuple[int, int, T]]:
        """Spans that intersect ``[start, end)``, clipped to it."""
        out = []
        i = self._first_overlap(start)
        while i < len(self._spans) and self._spans[i][0] < end:
            s, e, t = self._spans[i]
            out.append((max(s, start), min(e, end), t))
            i += 1
        return out

    def clear(self, start: int, end: int) -> None:
        if start >= end or not self._spans:
            return
        i = self._first_overlap(start)
        j = i
        keep: list[tuple[int, int, T]] = []
        while j < len(self._spans) and self._spans[j][0] < end:
            s, e, t = self._spans[j]
            if s < start:
                keep.append((s, start, t))
            if e > end:
                keep.append((end, e, t))
            j += 1
        self._spans[i:j] = keep
        self._starts[i:j] = [s for s, _, _ in keep]

    def write(self, start: int, end: int, tag: T, bottom: T) -> None:
        if start >= end:
            return
        self.clear(start, end)
        if tag == bottom:
            return
        i = bisect_right(self._starts, start)
        self._spans.insert(i, (start, end, tag))
        self._starts.insert(i, start)

    def slice(self, start: int, end: int) -> IntervalMap[T]:
        """Copy of ``[start, end)`` rebased to offset 0."""
        return IntervalMap([(s - start, e - start, t) for s, e, t in self.overlapping(start, end)])

    def paste(self, dest: int, src: IntervalMap[T], length: int, bottom: T) -> None:
        """Overwrite ``[dest, dest+length)`` with the first ``length`` bytes of ``src``."""
        self.clear(dest, dest + length)
        for s, e, t in src.overlapping(0, length):
            self.write(dest + s, dest + e, t, bottom)


class ShadowFrame(Generic[T]):
    __slots__ = ("view", "stack", "memory", "calldata", "returndata", "poison", "pending", "call_args", "return_tags")

    def __init__(self, view: FrameView, calldata: IntervalMap[T] | None, bottom: T):
        self.view = view
        self.stack: list[T] = []
        self.memory: IntervalMap[T] = IntervalMap()
        self.calldata = calldata  # None marks transaction calldata
        self.returndata: IntervalMap[T] = IntervalMap()
        self.poison: T = bottom
        self.pending: tuple | None = None
        self.call_args: IntervalMap[T] | None = None
        self.return_tags: IntervalMap[T] = IntervalMap()


class ShadowTracker(Hooks, Generic[T]):
    """Maintains lattice tags alongside a running transaction.

    During a ``pre_step`` callback the current frame's shadow stack still holds
    the operand tags (``stack_tag(0)`` is the top); they are replaced by result
    tags on ``post_step``.
    """

    def __init__(self, lattice: Lattice[T]):
        self.lattice = lattice
        self.frames: list[ShadowFrame[T]] = []
        self.storage: dict[tuple[int, int], T] = {}
        self.storage_poison: dict[int, T] = {}

    # ------------------------------------------------------------------ queries

    @property
    def current(self) -> ShadowFrame[T]:
        return self.frames[-1]

    def stack_tag(self, i: int = 0) -> T:
        """Tag of the i-th word from the top of the current frame's stack."""
        return self.current.stack[-1 - i]

    # ------------------------------------------------------------------ frames

    def enter_frame(self, frame: FrameView) -> None:
        if not self.frames:
            calldata = None
        else:
            parent = self.frames[-1]
            calldata = parent.call_args if parent.call_args is not None else IntervalMap()
            parent.call_args = None
        self.frames.append(ShadowFrame(frame, calldata, self.lattice.bottom))

    def exit_frame(self, frame: FrameView, outcome: FrameOutcome) -> None:
        done = self.frames.pop()
        if frame.code_address == 0x04 and not frame.code:
            ret = done.calldata or IntervalMap()
        elif outcome.output:
            ret = done.return_tags
        else:
            ret = IntervalMap()
        if self.frames:
            self.frames[-1].returndata = ret

    # ------------------------------------------------------------------ steps

    def _read_mem(self, sf: ShadowFrame[T], start: int, size: int) -> T:
        lat = self.lattice
        if size == 0:
            return lat.bottom
        tag = lat.memory_read(sf.memory.overlapping(start, start + size), start, start + size)
        return lat.join(tag, sf.poison) if sf.poison != lat.bottom else tag

    def _mem_range_tag(self, sf: ShadowFrame[T], start: int, size: int) -> T:
        """Join of every tag in a memory range (used for data consumed wholesale)."""
        lat = self.lattice
        if size == 0:
            return lat.bottom
        return lat.join_all([t for _, _, t in sf.memory.overlapping(start, start + size)] + [sf.poison])

    def _poison(self, sf: ShadowFrame[T], *tags: T) -> None:
        lat = self.lattice
        for t in tags:
            infl = lat.index_influence(t)
            if infl != lat.bottom:
                sf.poison = lat.join(sf.poison, infl)

    def pre_step(self, step: Step) -> None:
        sf = self.current
        op = step.op
        stack = step.stack
        info = OPCODES.get(op)
        if info is None or len(stack) < info.pops:
            sf.pending = None
            return
        args = tuple(stack[-1 - i] for i in range(info.pops))  # top first
        extra = None
        if op == _MLOAD:
            extra = self._read_mem(sf, args[0], 32)
        elif op == _KECCAK or op in _LOGS:
            extra = self._mem_range_tag(sf, args[0], args[1])
        elif op in (_RETURN, _REVERT):
            sf.return_tags = sf.memory.slice(args[0], args[0] + args[1]) if args[1] else IntervalMap()
            if sf.poison != self.lattice.bottom and args[1]:
                sf.return_tags = IntervalMap([(0, args[1], self.lattice.join(
                    self._mem_range_tag(sf, args[0], args[1]), sf.poison))])
        elif op in _CALLS:
            sf.returndata = IntervalMap()
            k = _CALLS[op]
            in_off, in_size = args[k], args[k + 1]
            sf.call_args = self._call_args(sf, in_off, in_size)
            extra = self._mem_range_tag(sf, in_off, in_size)
        elif op == _CREATE:
            sf.returndata = IntervalMap()
            sf.call_args = IntervalMap()
            extra = self._mem_range_tag(sf, args[1], args[2])
        sf.pending = (op, step.pc, args, extra)

    def _call_args(self, sf: ShadowFrame[T], off: int, size: int) -> IntervalMap[T]:
        if not size:
            return IntervalMap()
        args = sf.memory.slice(off, off + size)
        if sf.poison != self.lattice.bottom:
            joined = self.lattice.join(self._mem_range_tag(sf, off, size), sf.poison)
            return IntervalMap([(0, size, joined)])
        return args

    def post_step(self, step: Step) -> None:
        sf = self.current
        if sf.pending is None:
            return
        op, pc, args, extra = sf.pending
        sf.pending = None
        lat = self.lattice
        info = OPCODES[op]
        n_in = info.pops
        in_tags = [sf.stack[-1 - i] for i in range(n_in)]  # top first
        if n_in:
            del sf.stack[-n_in:]

        if is_push(op):
            sf.stack.append(lat.constant(step.frame.code_address, pc, step.stack[-1]))
            return
        if 0x80 <= op <= 0x8F:
            # DUPn: inputs top-first are [x1..xn], output duplicates xn
            sf.stack.extend(reversed(in_tags))
            sf.stack.append(in_tags[-1])
            return
        if 0x90 <= op <= 0x9F:
            swapped = list(in_tags)
            swapped[0], swapped[-1] = swapped[-1], swapped[0]
            sf.stack.extend(reversed(swapped))
            return
        if info.pushes == 0:
            self._effects(sf, op, args, in_tags, step)
            return

        out_val = step.stack[-1]
        if op in ENVIRONMENT_OPS:
            tag = lat.environment(op, step.frame, out_val)
            if op == BY_NAME["MSIZE"] and sf.poison != lat.bottom:
                tag = lat.join(tag, sf.poison)
        elif op == _MLOAD:
            tag = lat.join(extra, lat.index_influence(in_tags[0]))
        elif op == _CALLDATALOAD:
            off = args[0]
            if sf.calldata is None:
                tag = lat.root_calldata(off, 32)
            else:
                tag = lat.memory_read(sf.calldata.overlapping(off, off + 32), off, off + 32)
            tag = lat.join(tag, lat.index_influence(in_tags[0]))
        elif op == _SLOAD:
            addr = step.frame.address
            tag = lat.sload(addr, args[0], in_tags[0], self.storage.get((addr, args[0]), lat.bottom),
                            self.storage_poison.get(addr, lat.bottom))
        elif op == _KECCAK:
            tag = lat.combine(op, in_tags + [extra], args, out_val)
        elif op in _CALLS or op == _CREATE:
            tag = lat.call_result(in_tags, extra)
            if op in _CALLS:
                k = _CALLS[op]
                out_off, out_size = args[k + 2], args[k + 3]
                n = min(out_size, len(step.frame.returndata))
                if n:
                    sf.memory.paste(out_off, sf.returndata, n, lat.bottom)
                self._poison(sf, in_tags[k + 2], in_tags[k + 3])
        else:
            tag = lat.combine(op, in_tags, args, out_val)
        sf.stack.append(tag)

    def _effects(self, sf: ShadowFrame[T], op: int, args: tuple, in_tags: list, step: Step) -> None:
        lat = self.lattice
        if op == _MSTORE:
            off = args[0]
            sf.memory.write(off, off + 32, in_tags[1], lat.bottom)
            self._poison(sf, in_tags[0])
        elif op == _MSTORE8:
            off = args[0]
            word = off - off % 32
            joined = lat.join(lat.join_all([t for _, _, t in sf.memory.overlapping(word, word + 32)]), in_tags[1])
            sf.memory.write(word, word + 32, joined, lat.bottom)
            self._poison(sf, in_tags[0])
        elif op == _SSTORE:
            addr = step.frame.address
            key = (addr, args[0])
            if in_tags[1] == lat.bottom:
                self.storage.pop(key, None)
            else:
                self.storage[key] = in_tags[1]
            infl = lat.index_influence(in_tags[0])
            if infl != lat.bottom:
                self.storage_poison[addr] = lat.join(self.storage_poison.get(addr, lat.bottom), infl)
        elif op in _COPY_OPS:
            self._copy(sf, op, args, in_tags, step)

    def _copy(self, sf: ShadowFrame[T], op: int, args: tuple, in_tags: list, step: Step) -> None:
        lat = self.lattice
        kind = _COPY_OPS[op]
        if kind == "extcode":
            _, dest, off, size = args
            src_tag = lat.join(lat.index_influence(in_tags[0]), lat.index_influence(in_tags[2]))
            idx_tags = (in_tags[1], in_tags[3])
        else:
            dest, off, size = args
            src_tag = lat.index_influence(in_tags[1])
            idx_tags = (in_tags[0], in_tags[2])
        if size == 0:
            return
        sf.memory.clear(dest, dest + size)
        if kind == "calldata":
            if sf.calldata is None:
                for k in range(0, size, 32):
                    n = min(32, size - k)
                    sf.memory.write(dest + k, dest + k + n, lat.join(lat.root_calldata(off + k, n), src_tag), lat.bottom)
            else:
                sf.memory.paste(dest, sf.calldata.slice(off, off + size), size, lat.bottom)
        elif kind == "returndata":
            sf.memory.paste(dest, sf.returndata.slice(off, off + size), size, lat.bottom)
        else:
            env = lat.environment(op, step.frame, 0)
            if env != lat.bottom:
                sf.memory.write(dest, dest + size, env, lat.bottom)
        if src_tag != lat.bottom:
            # source offset is tagged: the copied bytes could have come from anywhere
            sf.memory.write(dest, dest + size, lat.join(self._mem_range_tag(sf, dest, size), src_tag), lat.bottom)
        self._poison(sf, *idx_tags)


def identity_source(op: int, in_tags: Sequence[T], in_vals: Sequence[int], out_val: int) -> int | None:
    """Index of an operand whose value passes through ``op`` unchanged, if any."""
    if op not in _IDENTITY_OPS:
        return None
    for i, v in enumerate(in_vals):
        if v == out_val:
            return i
    return None
