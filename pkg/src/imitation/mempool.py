"""Block building over a pending pool, front-running every victim the pipeline can imitate."""

from __future__ import annotations

import heapq
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Sequence

from .evm.interpreter import TransactionError, execute_transaction
from .evm.state import Transaction, WorldState, hex_address
from .fixtures.schema import StateFixture
from .pipeline import AttackOutcome, ape_attack


@dataclass
class MempoolSim:
    pending: Sequence[Transaction]
    state: WorldState
    block_gas_limit: int
    fixture: StateFixture | None = None  # pricing and pools; its state is ignored


@dataclass
class BlockEntry:
    tx: Transaction
    gas_used: int
    origin: str  # pending | attack

    def to_json(self) -> dict:
        return {"tx": self.tx.canonical(), "gasUsed": self.gas_used, "origin": self.origin}


@dataclass
class MempoolResult:
    block: list[BlockEntry] = field(default_factory=list)
    outcomes: list[AttackOutcome] = field(default_factory=list)
    metrics: list[dict] = field(default_factory=list)
    dropped: list[tuple[Transaction, str]] = field(default_factory=list)
    replaced: list[Transaction] = field(default_factory=list)
    state: WorldState | None = None

    @property
    def transactions(self) -> list[Transaction]:
        return [e.tx for e in self.block]

    @property
    def gas_used(self) -> int:
        return sum(e.gas_used for e in self.block)

    def to_json(self) -> dict:
        return {
            "block": [e.to_json() for e in self.block],
            "gasUsed": self.gas_used,
            "outcomes": [o.to_json() for o in self.outcomes],
            "metrics": list(self.metrics),
            "replaced": [t.canonical() for t in self.replaced],
            "dropped": [{"tx": t.canonical(), "reason": r} for t, r in self.dropped],
        }


def nonce_filter(pending: Sequence[Transaction], state: WorldState) -> tuple[list[Transaction], list]:
    """Keep, per sender, the run of consecutive nonces starting at the account nonce."""
    position = {id(t): i for i, t in enumerate(pending)}
    by_sender: dict[int, list[Transaction]] = defaultdict(list)
    for tx in pending:
        by_sender[tx.sender].append(tx)
    kept, dropped = [], []
    for sender, txs in by_sender.items():
        want = state.nonce(sender)
        for tx in sorted(txs, key=lambda t: t.nonce):
            if tx.nonce == want:
                kept.append(tx)
                want += 1
            else:
                dropped.append((tx, f"nonce {tx.nonce}, expected {want}"))
    kept.sort(key=lambda t: position[id(t)])
    return kept, dropped


def gas_price_order(txs: Sequence[Transaction]) -> list[Transaction]:
    """Highest gas price first, never reordering one sender's nonces; ties keep pool order."""
    queues: dict[int, list[Transaction]] = defaultdict(list)
    for tx in txs:
        queues[tx.sender].append(tx)
    for q in queues.values():
        q.sort(key=lambda t: t.nonce)
    position = {id(t): i for i, t in enumerate(txs)}
    heap = [(-q[0].gas_price, position[id(q[0])], s) for s, q in queues.items()]
    heapq.heapify(heap)
    out = []
    while heap:
        _, _, sender = heapq.heappop(heap)
        tx = queues[sender].pop(0)
        out.append(tx)
        if queues[sender]:
            nxt = queues[sender][0]
            heapq.heappush(heap, (-nxt.gas_price, position[id(nxt)], sender))
    return out


def simulate_mempool(sim: MempoolSim, adversary: int, *, block_arrival: float = 12.0,
                     attack: Callable[..., AttackOutcome] = ape_attack,
                     clock: Callable[[], float] = time.perf_counter) -> MempoolResult:
    """Order the pool, try to imitate each transaction on the state it would see, and fill one block.

    Metric ``t0`` is the attack generation time; ``t1`` is the slack between the end of
    generation and a synthetic block arrival ``block_arrival`` seconds after the start.
    """
    result = MempoolResult()
    kept, result.dropped = nonce_filter(sim.pending, sim.state)
    state = sim.state
    start = clock()
    used = 0
    for tx in gas_price_order(kept):
        if tx.sender != adversary:
            t = clock()
            outcome = attack(state, tx, adversary, sim.fixture)
            done = clock()
            result.outcomes.append(outcome)
            result.metrics.append({"tx": hex_address(tx.sender) + f":{tx.nonce}", "kind": outcome.kind,
                                   "t0": done - t, "t1": block_arrival - (done - start)})
            if outcome.success and used + outcome.gas_used <= sim.block_gas_limit:
                results = _apply_all(state, outcome.transactions)
                if results is not None:
                    for a, r in zip(outcome.transactions, results):
                        result.block.append(BlockEntry(a, r.gas_used, "attack"))
                    used += outcome.gas_used
                    state = results[-1].state_after
                    result.replaced.append(tx)
                    continue
        try:
            res = execute_transaction(state, tx)
        except TransactionError as exc:
            result.dropped.append((tx, f"{type(exc).__name__}: {exc}"))
            continue
        if used + res.gas_used > sim.block_gas_limit:
            result.dropped.append((tx, "block gas limit"))
            continue
        used += res.gas_used
        result.block.append(BlockEntry(tx, res.gas_used, "pending"))
        state = res.state_after
    result.state = state
    return result


def _apply_all(state: WorldState, txs: Sequence[Transaction]):
    results = []
    for tx in txs:
        try:
            res = execute_transaction(state, tx)
        except TransactionError:
            return None
        results.append(res)
        state = res.state_after
    return results or None
