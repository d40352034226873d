"""Frontier-to-Istanbul style EVM interpreter with nested frames and a hook bus."""

from __future__ import annotations

import sys
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable

from .gas import GasSchedule, default_schedule
from .hashing import keccak256, keccak_int
from .hooks import FrameView, Hooks, HookSet, Step
from .opcodes import OPCODES, JUMPDEST, valid_jumpdests
from .state import (
    ADDRESS_MASK,
    UINT256,
    UINT256_MAX,
    Account,
    Address,
    ExecutionResult,
    Log,
    Status,
    Transaction,
    WorldState,
    create_address,
)

MAX_DEPTH = 1024
MAX_STACK = 1024
MAX_CODE_SIZE = 24576
IDENTITY_PRECOMPILE = 0x04
_MEMORY_CAP = 1 << 32  # anything past this cannot be paid for with a 256-bit gas budget anyway


class TransactionError(Exception):
    """The transaction is not valid against the given state and cannot be executed."""


class InvalidNonce(TransactionError):
    pass


class InsufficientBalance(TransactionError):
    pass


class IntrinsicGasTooLow(TransactionError):
    pass


class AddressCollision(Exception):
    pass


class Create2Unsupported(Exception):
    pass


class Halt(Exception):
    """Exceptional halt of a frame: all remaining frame gas is consumed."""


class OutOfGas(Halt):
    pass


class StackUnderflow(Halt):
    pass


class StackOverflow(Halt):
    pass


class InvalidJump(Halt):
    pass


class InvalidOpcode(Halt):
    pass


class StaticViolation(Halt):
    pass


class ReturnDataOutOfBounds(Halt):
    pass


@lru_cache(maxsize=512)
def _jumpdests(code: bytes) -> frozenset[int]:
    return valid_jumpdests(code)


def _signed(v: int) -> int:
    return v - UINT256 if v >> 255 else v


def _unsigned(v: int) -> int:
    return v % UINT256


def _words(size: int) -> int:
    return (size + 31) // 32


class Frame:
    __slots__ = (
        "kind", "depth", "index", "parent", "address", "code_address", "caller", "value",
        "calldata", "code", "gas", "static", "stack", "memory", "pc", "returndata", "logs",
        "seq", "view",
    )

    def __init__(self, *, kind, depth, index, parent, address, code_address, caller, value, calldata, code, gas, static):
        self.kind: str = kind
        self.depth: int = depth
        self.index: int = index
        self.parent: Frame | None = parent
        self.address: Address = address
        self.code_address: Address = code_address
        self.caller: Address = caller
        self.value: int = value
        self.calldata: bytes = calldata
        self.code: bytes = code
        self.gas: int = gas
        self.static: bool = static
        self.stack: list[int] = []
        self.memory = bytearray()
        self.pc = 0
        self.returndata = b""
        self.logs: list[Log] = []
        self.seq = 0
        self.view = FrameView(self)


@dataclass(frozen=True)
class FrameOutcome:
    status: Status
    output: bytes
    gas_left: int
    error: str | None = None
    created: Address | None = None

    @property
    def success(self) -> bool:
        return self.status is Status.SUCCESS


class _Stop(Exception):
    def __init__(self, status: Status, output: bytes = b""):
        self.status = status
        self.output = output


class Interpreter:
    """Runs one transaction against a private copy of the world state."""

    def __init__(self, state: WorldState, tx: Transaction, hooks: HookSet | None = None,
                 schedule: GasSchedule | None = None):
        self.state = state
        self.tx = tx
        self.hooks = hooks
        self.schedule = schedule or default_schedule()
        self.frame_counter = 0
        self.selfdestructs: set[Address] = set()
        self.mutable_stack = bool(hooks and hooks.allow_stack_mutation)

    # ---------------------------------------------------------------- messages

    def _new_frame(self, **kw) -> Frame:
        frame = Frame(index=self.frame_counter, **kw)
        self.frame_counter += 1
        return frame

    def message_call(self, *, kind: str, parent: Frame | None, caller: Address, address: Address,
                     code_address: Address, value: int, data: bytes, gas: int, static: bool,
                     transfer: bool) -> tuple[FrameOutcome, list[Log]]:
        depth = 0 if parent is None else parent.depth + 1
        snap = self.state.snapshot()
        sd_snap = set(self.selfdestructs)
        if transfer and value:
            self.state.account(caller).balance -= value
            self.state.account(address).balance += value
        frame = self._new_frame(kind=kind, depth=depth, parent=parent, address=address,
                                code_address=code_address, caller=caller, value=value, calldata=data,
                                code=b"" if code_address == IDENTITY_PRECOMPILE else self.state.code(code_address),
                                gas=gas, static=static)
        if self.hooks:
            self.hooks.enter_frame(frame.view)
        if code_address == IDENTITY_PRECOMPILE:
            cost = 15 + 3 * _words(len(data))
            if cost > gas:
                outcome = FrameOutcome(Status.HALT_ERROR, b"", 0, "OutOfGas")
            else:
                outcome = FrameOutcome(Status.SUCCESS, data, gas - cost)
        else:
            outcome = self._run(frame)
        if not outcome.success:
            self.state.rollback(snap)
            self.selfdestructs = sd_snap
        if self.hooks:
            self.hooks.exit_frame(frame.view, outcome)
        return outcome, (frame.logs if outcome.success else [])

    def create_message(self, *, parent: Frame | None, caller: Address, address: Address, value: int,
                       init_code: bytes, gas: int) -> tuple[FrameOutcome, list[Log]]:
        depth = 0 if parent is None else parent.depth + 1
        snap = self.state.snapshot()
        sd_snap = set(self.selfdestructs)
        target = self.state.account(address)
        target.nonce = 1
        self.state.account(caller).balance -= value
        target.balance += value
        frame = self._new_frame(kind="CREATE", depth=depth, parent=parent, address=address, code_address=address,
                                caller=caller, value=value, calldata=b"", code=init_code, gas=gas, static=False)
        if self.hooks:
            self.hooks.enter_frame(frame.view)
        outcome = self._run(frame)
        if outcome.success:
            code = outcome.output
            deposit = self.schedule.code_deposit_byte * len(code)
            if len(code) > MAX_CODE_SIZE or deposit > outcome.gas_left:
                outcome = FrameOutcome(Status.HALT_ERROR, b"", 0, "CodeDepositFailed")
            else:
                self.state.account(address).code = code
                outcome = FrameOutcome(Status.SUCCESS, b"", outcome.gas_left - deposit, created=address)
        if not outcome.success:
            self.state.rollback(snap)
            self.selfdestructs = sd_snap
        if self.hooks:
            self.hooks.exit_frame(frame.view, outcome)
        return outcome, (frame.logs if outcome.success else [])

    # ---------------------------------------------------------------- main loop

    def _run(self, frame: Frame) -> FrameOutcome:
        code = frame.code
        hooks = self.hooks
        static_cost = self.schedule.static
        try:
            while True:
                pc = frame.pc
                op = code[pc] if pc < len(code) else 0x00
                info = OPCODES.get(op)
                if hooks:
                    stack_view = frame.stack if self.mutable_stack else tuple(frame.stack)
                    hooks.pre_step(Step(frame.view, pc, op, frame.gas, stack_view, frame.seq))
                frame.seq += 1
                if info is None or op == 0xFE:
                    raise InvalidOpcode(f"0x{op:02x} at pc 0x{pc:x}")
                if len(frame.stack) < info.pops:
                    raise StackUnderflow(f"{info.name} at pc 0x{pc:x}")
                if len(frame.stack) - info.pops + info.pushes > MAX_STACK:
                    raise StackOverflow(f"{info.name} at pc 0x{pc:x}")
                self._charge(frame, static_cost[op])
                try:
                    jumped = _HANDLERS[op](self, frame, op)
                except _Stop as stop:
                    if hooks:
                        hooks.post_step(Step(frame.view, pc, op, frame.gas, tuple(frame.stack), frame.seq - 1))
                    return FrameOutcome(stop.status, stop.output, frame.gas)
                if not jumped:
                    frame.pc = pc + 1 + (op - 0x5F if 0x60 <= op <= 0x7F else 0)
                if hooks:
                    stack_view = frame.stack if self.mutable_stack else tuple(frame.stack)
                    hooks.post_step(Step(frame.view, pc, op, frame.gas, stack_view, frame.seq - 1))
        except Halt as exc:
            return FrameOutcome(Status.HALT_ERROR, b"", 0, f"{type(exc).__name__}: {exc}" if str(exc) else type(exc).__name__)

    # ---------------------------------------------------------------- helpers

    @staticmethod
    def _charge(frame: Frame, amount: int) -> None:
        frame.gas -= amount
        if frame.gas < 0:
            frame.gas = 0
            raise OutOfGas()

    def _expand(self, frame: Frame, offset: int, size: int) -> None:
        if size == 0:
            return
        end = offset + size
        if end > _MEMORY_CAP:
            raise OutOfGas("memory expansion")
        have = len(frame.memory)
        if end <= have:
            return
        old_w, new_w = have // 32, _words(end)
        self._charge(frame, self.schedule.memory_cost(new_w) - self.schedule.memory_cost(old_w))
        frame.memory.extend(b"\x00" * (new_w * 32 - have))

    def _mread(self, frame: Frame, offset: int, size: int) -> bytes:
        if size == 0:
            return b""
        self._expand(frame, offset, size)
        return bytes(frame.memory[offset : offset + size])

    def _mwrite(self, frame: Frame, offset: int, data: bytes) -> None:
        if not data:
            return
        self._expand(frame, offset, len(data))
        frame.memory[offset : offset + len(data)] = data

    def _blockhash(self, number: int) -> int:
        cur = self.state.block.number
        if cur - 256 <= number < cur:
            return keccak_int(b"block" + number.to_bytes(32, "big"))
        return 0


# -------------------------------------------------------------------- handlers
# Each handler receives (interp, frame, op) and returns True when it set frame.pc itself.

Handler = Callable[[Interpreter, Frame, int], "bool | None"]
_HANDLERS: dict[int, Handler] = {}


def _op(*ops: int):
    def deco(fn: Handler) -> Handler:
        for o in ops:
            _HANDLERS[o] = fn
        return fn
    return deco


def _binary(fn: Callable[[int, int], int]) -> Handler:
    def handler(vm: Interpreter, f: Frame, op: int) -> None:
        s = f.stack
        a = s.pop()
        b = s.pop()
        s.append(fn(a, b) & UINT256_MAX)
    return handler


def _sdiv(a: int, b: int) -> int:
    if b == 0:
        return 0
    sa, sb = _signed(a), _signed(b)
    q = abs(sa) // abs(sb)
    return _unsigned(-q if (sa < 0) != (sb < 0) else q)


def _smod(a: int, b: int) -> int:
    if b == 0:
        return 0
    sa, sb = _signed(a), _signed(b)
    r = abs(sa) % abs(sb)
    return _unsigned(-r if sa < 0 else r)


def _signextend(k: int, v: int) -> int:
    if k >= 31:
        return v
    bit = 8 * k + 7
    mask = (1 << bit) - 1
    return v | (UINT256_MAX - mask) if (v >> bit) & 1 else v & mask


def _byte(i: int, v: int) -> int:
    return 0 if i >= 32 else (v >> (8 * (31 - i))) & 0xFF


def _sar(shift: int, v: int) -> int:
    sv = _signed(v)
    if shift >= 256:
        return 0 if sv >= 0 else UINT256_MAX
    return _unsigned(sv >> shift)


for _code, _fn in {
    0x01: lambda a, b: a + b,
    0x02: lambda a, b: a * b,
    0x03: lambda a, b: a - b,
    0x04: lambda a, b: a // b if b else 0,
    0x05: _sdiv,
    0x06: lambda a, b: a % b if b else 0,
    0x07: _smod,
    0x0B: _signextend,
    0x10: lambda a, b: int(a < b),
    0x11: lambda a, b: int(a > b),
    0x12: lambda a, b: int(_signed(a) < _signed(b)),
    0x13: lambda a, b: int(_signed(a) > _signed(b)),
    0x14: lambda a, b: int(a == b),
    0x16: lambda a, b: a & b,
    0x17: lambda a, b: a | b,
    0x18: lambda a, b: a ^ b,
    0x1A: _byte,
    0x1B: lambda sh, v: v << sh if sh < 256 else 0,
    0x1C: lambda sh, v: v >> sh if sh < 256 else 0,
    0x1D: _sar,
}.items():
    _HANDLERS[_code] = _binary(_fn)


@_op(0x00)
def _stop(vm, f, op):
    raise _Stop(Status.SUCCESS)


@_op(0x08, 0x09)
def _modarith(vm, f, op):
    s = f.stack
    a, b, n = s.pop(), s.pop(), s.pop()
    if n == 0:
        s.append(0)
    else:
        s.append((a + b) % n if op == 0x08 else (a * b) % n)


@_op(0x0A)
def _exp(vm, f, op):
    s = f.stack
    base, exponent = s.pop(), s.pop()
    vm._charge(f, vm.schedule.exp_byte * ((exponent.bit_length() + 7) // 8))
    s.append(pow(base, exponent, UINT256))


@_op(0x15)
def _iszero(vm, f, op):
    f.stack.append(int(f.stack.pop() == 0))


@_op(0x19)
def _not(vm, f, op):
    f.stack.append(UINT256_MAX ^ f.stack.pop())


@_op(0x20)
def _keccak(vm, f, op):
    s = f.stack
    offset, size = s.pop(), s.pop()
    vm._charge(f, vm.schedule.keccak_word * _words(size))
    s.append(keccak_int(vm._mread(f, offset, size)))


@_op(0x30)
def _address(vm, f, op):
    f.stack.append(f.address)


@_op(0x31)
def _balance(vm, f, op):
    f.stack.append(vm.state.balance(f.stack.pop() & ADDRESS_MASK))


@_op(0x32)
def _origin(vm, f, op):
    f.stack.append(vm.tx.sender)


@_op(0x33)
def _caller(vm, f, op):
    f.stack.append(f.caller)


@_op(0x34)
def _callvalue(vm, f, op):
    f.stack.append(f.value)


@_op(0x35)
def _calldataload(vm, f, op):
    off = f.stack.pop()
    chunk = f.calldata[off : off + 32] if off < len(f.calldata) else b""
    f.stack.append(int.from_bytes(chunk.ljust(32, b"\x00"), "big"))


@_op(0x36)
def _calldatasize(vm, f, op):
    f.stack.append(len(f.calldata))


def _copy_into(vm: Interpreter, f: Frame, dest: int, src: bytes, off: int, size: int) -> None:
    vm._charge(f, vm.schedule.copy_word * _words(size))
    if size == 0:
        return
    chunk = src[off : off + size] if off < len(src) else b""
    vm._mwrite(f, dest, chunk.ljust(size, b"\x00"))


@_op(0x37)
def _calldatacopy(vm, f, op):
    s = f.stack
    dest, off, size = s.pop(), s.pop(), s.pop()
    _copy_into(vm, f, dest, f.calldata, off, size)


@_op(0x38)
def _codesize(vm, f, op):
    f.stack.append(len(f.code))


@_op(0x39)
def _codecopy(vm, f, op):
    s = f.stack
    dest, off, size = s.pop(), s.pop(), s.pop()
    _copy_into(vm, f, dest, f.code, off, size)


@_op(0x3A)
def _gasprice(vm, f, op):
    f.stack.append(vm.tx.gas_price)


@_op(0x3B)
def _extcodesize(vm, f, op):
    f.stack.append(len(vm.state.code(f.stack.pop() & ADDRESS_MASK)))


@_op(0x3C)
def _extcodecopy(vm, f, op):
    s = f.stack
    addr, dest, off, size = s.pop() & ADDRESS_MASK, s.pop(), s.pop(), s.pop()
    _copy_into(vm, f, dest, vm.state.code(addr), off, size)


@_op(0x3D)
def _returndatasize(vm, f, op):
    f.stack.append(len(f.returndata))


@_op(0x3E)
def _returndatacopy(vm, f, op):
    s = f.stack
    dest, off, size = s.pop(), s.pop(), s.pop()
    if off + size > len(f.returndata):
        raise ReturnDataOutOfBounds()
    _copy_into(vm, f, dest, f.returndata, off, size)


@_op(0x3F)
def _extcodehash(vm, f, op):
    addr = f.stack.pop() & ADDRESS_MASK
    acc = vm.state.accounts.get(addr)
    if acc is None or (acc.balance == 0 and acc.nonce == 0 and not acc.code):
        f.stack.append(0)
    else:
        f.stack.append(keccak_int(acc.code))


@_op(0x40)
def _blockhash(vm, f, op):
    f.stack.append(vm._blockhash(f.stack.pop()))


_BLOCK_FIELDS = {0x41: "coinbase", 0x42: "timestamp", 0x43: "number", 0x45: "gas_limit", 0x46: "chain_id"}


@_op(*_BLOCK_FIELDS)
def _blockfield(vm, f, op):
    f.stack.append(getattr(vm.state.block, _BLOCK_FIELDS[op]))


@_op(0x44)
def _difficulty(vm, f, op):
    f.stack.append(0x20000)


@_op(0x47)
def _selfbalance(vm, f, op):
    f.stack.append(vm.state.balance(f.address))


@_op(0x50)
def _pop(vm, f, op):
    f.stack.pop()


@_op(0x51)
def _mload(vm, f, op):
    off = f.stack.pop()
    f.stack.append(int.from_bytes(vm._mread(f, off, 32), "big"))


@_op(0x52)
def _mstore(vm, f, op):
    off, val = f.stack.pop(), f.stack.pop()
    vm._mwrite(f, off, val.to_bytes(32, "big"))


@_op(0x53)
def _mstore8(vm, f, op):
    off, val = f.stack.pop(), f.stack.pop()
    vm._mwrite(f, off, bytes([val & 0xFF]))


@_op(0x54)
def _sload(vm, f, op):
    f.stack.append(vm.state.storage_at(f.address, f.stack.pop()))


@_op(0x55)
def _sstore(vm, f, op):
    if f.static:
        raise StaticViolation("SSTORE")
    key, val = f.stack.pop(), f.stack.pop()
    current = vm.state.storage_at(f.address, key)
    vm._charge(f, vm.schedule.sstore_set if current == 0 and val != 0 else vm.schedule.sstore_reset)
    vm.state.set_storage(f.address, key, val)


def _jump_to(f: Frame, dest: int) -> None:
    if dest not in _jumpdests(f.code):
        raise InvalidJump(f"0x{dest:x}")
    f.pc = dest


@_op(0x56)
def _jump(vm, f, op):
    _jump_to(f, f.stack.pop())
    return True


@_op(0x57)
def _jumpi(vm, f, op):
    dest, cond = f.stack.pop(), f.stack.pop()
    if cond:
        _jump_to(f, dest)
        return True
    return False


@_op(0x58)
def _pc(vm, f, op):
    f.stack.append(f.pc)


@_op(0x59)
def _msize(vm, f, op):
    f.stack.append(len(f.memory))


@_op(0x5A)
def _gas(vm, f, op):
    f.stack.append(f.gas)


@_op(JUMPDEST)
def _jumpdest(vm, f, op):
    pass


def _push(vm, f, op):
    width = op - 0x5F
    raw = f.code[f.pc + 1 : f.pc + 1 + width]
    f.stack.append(int.from_bytes(raw.ljust(width, b"\x00"), "big"))


def _dup(vm, f, op):
    f.stack.append(f.stack[-(op - 0x7F)])


def _swap(vm, f, op):
    s = f.stack
    n = op - 0x8F
    s[-1], s[-1 - n] = s[-1 - n], s[-1]


for _n in range(32):
    _HANDLERS[0x60 + _n] = _push
for _n in range(16):
    _HANDLERS[0x80 + _n] = _dup
    _HANDLERS[0x90 + _n] = _swap


@_op(0xA0, 0xA1, 0xA2, 0xA3, 0xA4)
def _log(vm, f, op):
    if f.static:
        raise StaticViolation("LOG")
    s = f.stack
    off, size = s.pop(), s.pop()
    topics = tuple(s.pop() for _ in range(op - 0xA0))
    vm._charge(f, vm.schedule.log_data_byte * size)
    data = vm._mread(f, off, size)
    f.logs.append(Log(f.address, topics, data))


def _all_but_64th(gas: int) -> int:
    return gas - gas // 64


@_op(0xF0)
def _create(vm, f, op):
    if f.static:
        raise StaticViolation("CREATE")
    s = f.stack
    value, off, size = s.pop(), s.pop(), s.pop()
    init = vm._mread(f, off, size)
    f.returndata = b""
    creator = vm.state.account(f.address)
    if f.depth + 1 > MAX_DEPTH or creator.balance < value:
        s.append(0)
        return
    new_addr = create_address(f.address, creator.nonce)
    creator.nonce += 1
    child_gas = _all_but_64th(f.gas)
    f.gas -= child_gas
    existing = vm.state.accounts.get(new_addr)
    if existing is not None and (existing.code or existing.nonce):
        s.append(0)
        return
    outcome, logs = vm.create_message(parent=f, caller=f.address, address=new_addr, value=value,
                                      init_code=init, gas=child_gas)
    f.gas += outcome.gas_left
    if outcome.success:
        f.logs.extend(logs)
        s.append(new_addr)
    else:
        f.returndata = outcome.output if outcome.status is Status.REVERT else b""
        s.append(0)


@_op(0xF5)
def _create2(vm, f, op):
    raise Create2Unsupported(f"CREATE2 at pc 0x{f.pc:x} in 0x{f.address:040x}")


@_op(0xF1, 0xF2, 0xF4, 0xFA)
def _call(vm, f, op):
    s = f.stack
    gas_req = s.pop()
    target = s.pop() & ADDRESS_MASK
    value = s.pop() if op in (0xF1, 0xF2) else 0
    in_off, in_size, out_off, out_size = s.pop(), s.pop(), s.pop(), s.pop()
    if op == 0xF1 and value and f.static:
        raise StaticViolation("CALL with value")
    sched = vm.schedule
    vm._expand(f, in_off, in_size)
    vm._expand(f, out_off, out_size)
    extra = 0
    if value:
        extra += sched.call_value
        if op == 0xF1 and not vm.state.exists(target):
            extra += sched.call_new_account
    vm._charge(f, extra)
    child_gas = min(gas_req, _all_but_64th(f.gas))
    vm._charge(f, child_gas)
    data = bytes(f.memory[in_off : in_off + in_size]) if in_size else b""
    f.returndata = b""
    if f.depth + 1 > MAX_DEPTH or vm.state.balance(f.address) < value:
        f.gas += child_gas
        s.append(0)
        return
    if value:
        child_gas += sched.call_stipend
    if op == 0xF1:
        kw = dict(caller=f.address, address=target, code_address=target, value=value, static=f.static, transfer=True)
    elif op == 0xF2:
        kw = dict(caller=f.address, address=f.address, code_address=target, value=value, static=f.static, transfer=True)
    elif op == 0xF4:
        kw = dict(caller=f.caller, address=f.address, code_address=target, value=f.value, static=f.static, transfer=False)
    else:
        kw = dict(caller=f.address, address=target, code_address=target, value=0, static=True, transfer=True)
    outcome, logs = vm.message_call(kind=OPCODES[op].name, parent=f, data=data, gas=child_gas, **kw)
    f.gas += outcome.gas_left
    f.returndata = outcome.output
    if out_size:
        out = outcome.output[:out_size]
        f.memory[out_off : out_off + len(out)] = out
    if outcome.success:
        f.logs.extend(logs)
    s.append(int(outcome.success))


@_op(0xF3, 0xFD)
def _return(vm, f, op):
    off, size = f.stack.pop(), f.stack.pop()
    raise _Stop(Status.SUCCESS if op == 0xF3 else Status.REVERT, vm._mread(f, off, size))


@_op(0xFF)
def _selfdestruct(vm, f, op):
    if f.static:
        raise StaticViolation("SELFDESTRUCT")
    beneficiary = f.stack.pop() & ADDRESS_MASK
    balance = vm.state.balance(f.address)
    if balance and not vm.state.exists(beneficiary):
        vm._charge(f, vm.schedule.selfdestruct_new_account)
    vm.state.account(f.address).balance = 0
    vm.state.account(beneficiary).balance += balance
    vm.selfdestructs.add(f.address)
    raise _Stop(Status.SUCCESS)


# -------------------------------------------------------------------- entry points

def _check_tx(state: WorldState, tx: Transaction, schedule: GasSchedule) -> int:
    nonce = state.nonce(tx.sender)
    if tx.nonce != nonce:
        raise InvalidNonce(f"tx nonce {tx.nonce} != account nonce {nonce} for 0x{tx.sender:040x}")
    upfront = tx.value + tx.gas_limit * tx.gas_price
    if state.balance(tx.sender) < upfront:
        raise InsufficientBalance(f"0x{tx.sender:040x} holds {state.balance(tx.sender)}, needs {upfront}")
    intrinsic = schedule.intrinsic(tx.data, tx.is_create)
    if tx.gas_limit < intrinsic:
        raise IntrinsicGasTooLow(f"gas limit {tx.gas_limit} below intrinsic cost {intrinsic}")
    return intrinsic


def execute_transaction(state: WorldState, tx: Transaction,
                        hooks: HookSet | Hooks | Iterable[Hooks] | None = None,
                        gas_table: GasSchedule | None = None) -> ExecutionResult:
    """Apply ``tx`` to a copy of ``state``; the input state is never modified."""
    schedule = gas_table or default_schedule()
    intrinsic = _check_tx(state, tx, schedule)
    if sys.getrecursionlimit() < 8 * MAX_DEPTH:
        sys.setrecursionlimit(8 * MAX_DEPTH)

    work = state.copy()
    sender = work.account(tx.sender)
    sender.balance -= tx.gas_limit * tx.gas_price
    sender.nonce += 1
    vm = Interpreter(work, tx, HookSet.of(hooks), schedule)
    gas = tx.gas_limit - intrinsic

    created = None
    if tx.is_create:
        addr = create_address(tx.sender, tx.nonce)
        existing = work.accounts.get(addr)
        if existing is not None and (existing.code or existing.nonce):
            outcome, logs = FrameOutcome(Status.HALT_ERROR, b"", 0, "AddressCollision"), []
        else:
            outcome, logs = vm.create_message(parent=None, caller=tx.sender, address=addr, value=tx.value,
                                              init_code=tx.data, gas=gas)
        created = outcome.created
    else:
        outcome, logs = vm.message_call(kind="CALL", parent=None, caller=tx.sender, address=tx.to,
                                        code_address=tx.to, value=tx.value, data=tx.data, gas=gas,
                                        static=False, transfer=True)

    gas_used = tx.gas_limit - outcome.gas_left
    work.account(tx.sender).balance += outcome.gas_left * tx.gas_price
    fee = gas_used * tx.gas_price
    if fee:
        work.account(work.block.coinbase).balance += fee
    for addr in vm.selfdestructs:
        work.accounts.pop(addr, None)
    return ExecutionResult(
        status=outcome.status,
        gas_used=gas_used,
        return_data=outcome.output,
        logs=list(logs),
        state_after=work,
        error=outcome.error,
        created=created,
        gas_price=tx.gas_price,
    )


def direct_deploy_gas(code: bytes, schedule: GasSchedule | None = None) -> int:
    """Gas charged by a direct-runtime deployment: a creation tx carrying ``code`` plus its deposit."""
    schedule = schedule or default_schedule()
    return schedule.intrinsic(code, True) + schedule.code_deposit_byte * len(code)


def deploy_contract(state: WorldState, creator: Address, code: bytes, mode: str = "direct-runtime",
                    gas_price: int = 0, storage: dict[int, int] | None = None,
                    gas_table: GasSchedule | None = None) -> Address:
    """Create a contract at the creator's next CREATE address, mutating ``state`` in place.

    ``init-code`` runs ``code`` as a creation transaction. ``direct-runtime`` installs
    ``code`` verbatim as the runtime (plus optional ``storage``) and debits the
    creator for :func:`direct_deploy_gas` at ``gas_price``.
    """
    if not state.exists(creator):
        raise ValueError(f"creator 0x{creator:040x} does not exist")
    nonce = state.nonce(creator)
    addr = create_address(creator, nonce)
    existing = state.accounts.get(addr)
    if existing is not None and (existing.code or existing.nonce):
        raise AddressCollision(f"0x{addr:040x}")
    if mode == "init-code":
        schedule = gas_table or default_schedule()
        need = schedule.intrinsic(code, True) + 3_000_000
        tx = Transaction(creator, None, 0, code, gas_limit=need, gas_price=gas_price, nonce=nonce)
        res = execute_transaction(state, tx, gas_table=schedule)
        if not res.success:
            raise RuntimeError(f"init code failed: {res.status.value} {res.error or ''}".strip())
        state.accounts = res.state_after.accounts
        if storage:
            for k, v in storage.items():
                state.set_storage(addr, k, v)
        return addr
    if mode != "direct-runtime":
        raise ValueError(f"unknown deployment mode {mode!r}")
    fee = direct_deploy_gas(code, gas_table) * gas_price
    acc = state.account(creator)
    if acc.balance < fee:
        raise InsufficientBalance(f"deployment fee {fee} exceeds balance {acc.balance}")
    acc.balance -= fee
    acc.nonce += 1
    if fee:
        state.account(state.block.coinbase).balance += fee
    prior = existing.balance if existing else 0
    state.accounts[addr] = Account(balance=prior, nonce=1, code=bytes(code),
                                   storage={k: v for k, v in (storage or {}).items() if v})
    return addr
