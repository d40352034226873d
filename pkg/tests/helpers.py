"""Small builders shared by the test modules."""

from __future__ import annotations

import random

from imitation.evm import Account, BlockContext, StepRecorder, Transaction, WorldState, assemble, execute_transaction
from imitation.evm.opcodes import JUMPI

E = 10**18
SENDER = 0xA11CE00000000000000000000000000000000001
OTHER = 0xB0B0000000000000000000000000000000000002
CONTRACT = 0xC0DE000000000000000000000000000000000003
HELPER = 0xC0DE000000000000000000000000000000000004
COINBASE = 0xC0FFEE0000000000000000000000000000000005
BLOCK = BlockContext(number=100, timestamp=1_600_000_000, coinbase=COINBASE, gas_limit=30_000_000, chain_id=1,
                     base_gas_price=0)


def world(*pairs, funded=(SENDER, OTHER)) -> WorldState:
    accounts = {a: Account(balance=100 * E) for a in funded}
    accounts.update({a: acc for a, acc in pairs})
    return WorldState(accounts, BLOCK)


def call(to=CONTRACT, data=b"", sender=SENDER, value=0, gas=1_000_000, price=1, nonce=0) -> Transaction:
    return Transaction(sender, to, value, data, gas, price, nonce)


def run_code(source: str, data=b"", consts=None, **extra):
    """Deploy assembled ``source`` at CONTRACT and call it from SENDER."""
    state = world((CONTRACT, Account(code=assemble(source, consts))), **extra)
    return state, execute_transaction(state, call(data=data))


# ---------------------------------------------------------------- random programs for the taint corpus

SOURCES = ("CALLER", "ORIGIN")
_BINARY = ("ADD", "SUB", "MUL", "DIV", "MOD", "AND", "OR", "XOR", "EQ", "LT", "GT", "SHL", "SHR", "BYTE", "SLT")
_UNARY = ("ISZERO", "NOT")


class ProgramGen:
    """Random straight-line programs whose JUMPIs all reconverge.

    Every conditional jump targets the very next instruction, so the executed path does not
    depend on any condition value; only the condition words change when the sender does.
    Values move through the stack, memory, storage and an optional helper call.
    """

    def __init__(self, seed: int):
        self.rng = random.Random(seed)
        self.labels = 0
        self.out: list[str] = []
        self.depth = 0

    def _label(self) -> str:
        self.labels += 1
        return f"L{self.labels}"

    def emit(self, *toks: str, delta: int = 0) -> None:
        self.out.extend(toks)
        self.depth += delta

    def push_value(self) -> None:
        r = self.rng.random()
        if r < 0.3:
            self.emit(self.rng.choice(SOURCES), delta=1)
        elif r < 0.5:
            self.emit(f"PUSH {self.rng.choice([0, 1, 2, 31, 255, 2**160 - 1, self.rng.getrandbits(64)])}", delta=1)
        elif r < 0.6:
            self.emit(f"PUSH {self.rng.choice([0, 4, 32])}", "CALLDATALOAD", delta=1)
        elif r < 0.7:
            self.emit(f"PUSH {self.rng.randrange(4)}", "SLOAD", delta=1)
        elif r < 0.8:
            self.emit(f"PUSH {32 * self.rng.randrange(4)}", "MLOAD", delta=1)
        else:
            self.emit("CALLVALUE" if self.rng.random() < 0.5 else "NUMBER", delta=1)

    def step(self) -> None:
        r = self.rng.random()
        if self.depth < 2 or r < 0.25:
            self.push_value()
        elif r < 0.5:
            self.emit(self.rng.choice(_BINARY), delta=-1)
        elif r < 0.55:
            self.emit(self.rng.choice(_UNARY))
        elif r < 0.62:
            self.emit(f"PUSH {32 * self.rng.randrange(4)}", "MSTORE", delta=-1)
        elif r < 0.68:
            # tainted keys must leak too, so the slot may come off the stack
            if self.rng.random() < 0.5:
                self.emit(f"PUSH {self.rng.randrange(4)}", "SSTORE", delta=-1)
            else:
                self.emit("PUSH 3", "AND", "SSTORE", delta=-2)
        elif r < 0.72:
            self.emit("DUP1", "PUSH 3", "AND", "SLOAD", delta=1)
        elif r < 0.76:
            self.emit(f"DUP{self.rng.randint(1, min(self.depth, 4))}", delta=1)
        elif r < 0.8:
            self.emit(f"SWAP{self.rng.randint(1, min(self.depth - 1, 4))}" if self.depth > 1 else "DUP1",
                      delta=0 if self.depth > 1 else 1)
        elif r < 0.84:
            self.emit("PUSH 0 MSTORE PUSH 32 PUSH 0 KECCAK256", delta=0)
        elif r < 0.88:
            # helper call: argument word from the stack, result word back on it
            self.emit("PUSH 0 MSTORE", "PUSH 32 PUSH 0 PUSH 32 PUSH 0 PUSH 0 PUSH20 HELPER GAS CALL POP",
                      "PUSH 0 MLOAD", delta=0)
        elif r < 0.92:
            self.emit("POP", delta=-1)
        else:
            self.jumpi()

    def jumpi(self) -> None:
        if self.depth < 1:
            self.push_value()
        lab = self._label()
        self.emit(f"@{lab}", "JUMPI", f"{lab}:", delta=-1)

    def program(self, length: int) -> str:
        for _ in range(length):
            self.step()
            if self.depth > 12:
                self.emit("POP", delta=-1)
        if self.depth:
            self.jumpi()
        self.emit("STOP")
        return " ".join(self.out)


def helper_code() -> bytes:
    """Returns f(calldata word) and branches on it, so taint must cross the call boundary both ways."""
    return assemble("""
        PUSH 0 CALLDATALOAD DUP1 PUSH 1 AND @h1 JUMPI h1:
        DUP1 PUSH 7 MUL PUSH 0 MSTORE
        DUP1 PUSH 0xff AND PUSH 0x10 LT @h2 JUMPI h2:
        POP PUSH 32 PUSH 0 RETURN
    """)


def corpus_program(seed: int, length: int = 40) -> bytes:
    return assemble(ProgramGen(seed).program(length), {"HELPER": HELPER})


def corpus_state(code: bytes) -> WorldState:
    return world((CONTRACT, Account(code=code)), (HELPER, Account(code=helper_code())),
                 funded=(SENDER, OTHER, 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFF, 0x1))


def jumpi_conditions(state: WorldState, tx: Transaction) -> list[tuple[int, int, int, int]]:
    """(frame, pc, depth, condition) for every executed JUMPI, recorded by a plain step hook."""

    class Conds(StepRecorder):
        def __init__(self):
            super().__init__()
            self.conds = []

        def pre_step(self, step):
            if step.op == JUMPI:
                self.conds.append((step.frame.index, step.pc, step.frame.depth, step.stack[-2]))

    rec = Conds()
    execute_transaction(state, tx, hooks=rec)
    return rec.conds


PERTURBED_SENDERS = (OTHER, 0xFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFFF, 0x1)


def taint_soundness(seeds, length: int = 40) -> dict:
    """Run the perturbation oracle over ``seeds``.

    Each program runs as a victim from SENDER. It is re-executed with every perturbed
    sender, and the JUMPI condition words of both runs are compared position by position.
    A condition that changes truthiness is a true dependency and must carry a taint tag in
    the forced replay. Returns the counts, with any misses listed under ``false_negatives``.
    """
    from imitation.taint import taint_replay
    from imitation.trace import build_dcfg

    stats = {"programs": 0, "jumpis": 0, "flips": 0, "tainted": 0, "over_tainted": 0, "false_negatives": []}
    data = (123).to_bytes(32, "big") * 2
    for seed in seeds:
        state = corpus_state(corpus_program(seed, length))
        tx = call(data=data)
        dcfg, _ = build_dcfg(state, tx)
        victim = jumpi_conditions(state, tx)
        stats["programs"] += 1
        for sender in PERTURBED_SENDERS:
            other = tx.replace(sender=sender)
            flipped = [bool(a[3]) != bool(b[3]) for a, b in zip(victim, jumpi_conditions(state, other))]
            report = taint_replay(state, other, dcfg)
            assert len(report.conditions) == len(victim) == len(flipped)
            flagged = {(tb.block.contract, tb.jumpi_pc) for tb in report.tainted_blocks}
            for flip, obs in zip(flipped, report.conditions):
                stats["jumpis"] += 1
                stats["tainted"] += obs.tag.tainted
                if flip:
                    stats["flips"] += 1
                    if not (obs.tag.tainted and (obs.contract, obs.pc) in flagged):
                        stats["false_negatives"].append((seed, hex(sender), obs.contract, obs.pc))
                elif obs.tag.tainted:
                    stats["over_tainted"] += 1
    stats["over_taint_rate"] = stats["over_tainted"] / stats["tainted"] if stats["tainted"] else 0.0
    return stats
