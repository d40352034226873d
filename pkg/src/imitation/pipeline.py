"""End-to-end imitation: analysis steps, validation on a fork, and the naive baseline."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable

from .evm.interpreter import TransactionError, execute_transaction
from .evm.state import ExecutionResult, Transaction, WorldState, address_bytes, hex_address
from .fixtures.contracts import encode_call
from .fixtures.schema import StateFixture
from .patch import PatchPlan, identify_patch_set
from .profit import ProfitReport, analyze_profitability, token_balance
from .synth import (
    BiBranchBlock,
    ComputedJumpUnresolved,
    SynthesisError,
    SynthesizedContract,
    init_code,
    synthesize,
)
from .taint import DEFAULT_SOURCES, TaintReport, TraceMisalignment, taint_replay
from .trace import DCFG, VictimExecutionFailed, block_sequence, build_dcfg, trace_transaction

STEPS = ("dcfg", "profitability", "taint", "patch", "synthesis", "validation")
EXCHANGE_GAS = 200_000


@dataclass
class AttackOutcome:
    kind: str  # naive | ape | abort
    tx_c: Transaction | None = None
    deployments: list[SynthesizedContract] = field(default_factory=list)
    transactions: list[Transaction] = field(default_factory=list)
    revenue_e: int = 0
    gas_cost_e: int = 0
    opportunity_cost_e: int = 0
    net_profit_e: int = 0
    gas_used: int = 0
    timings: dict[str, float] = field(default_factory=dict)
    abort_cause: str | None = None
    abort_detail: str = ""
    profit: ProfitReport | None = None
    taint: TaintReport | None = None
    plan: PatchPlan | None = None
    path_equivalent: bool | None = None
    imitation_dcfg: DCFG | None = None
    state_after: WorldState | None = None

    @property
    def success(self) -> bool:
        return self.kind in ("naive", "ape")

    def to_json(self) -> dict:
        return {
            "kind": self.kind,
            "abortCause": self.abort_cause,
            "abortDetail": self.abort_detail,
            "txC": self.tx_c.canonical() if self.tx_c else None,
            "deployments": [d.to_json() for d in self.deployments],
            "transactions": [t.canonical() for t in self.transactions],
            "revenueE": str(self.revenue_e),
            "gasCostE": str(self.gas_cost_e),
            "opportunityCostE": str(self.opportunity_cost_e),
            "netProfitE": str(self.net_profit_e),
            "gasUsed": self.gas_used,
            "taintedBlocks": [tb.to_json() for tb in self.taint.tainted_blocks] if self.taint else [],
            "pathEquivalent": self.path_equivalent,
            "timings": dict(self.timings),
        }


class _Abort(Exception):
    def __init__(self, cause: str, detail: str = ""):
        super().__init__(f"{cause}: {detail}")
        self.cause = cause
        self.detail = detail


# ---------------------------------------------------------------- helpers

def naive_tx(tx_v: Transaction, adversary: int, nonce: int) -> Transaction:
    """The victim transaction with its sender swapped for ``adversary``, in the envelope and the data."""
    data = tx_v.data.replace(address_bytes(tx_v.sender), address_bytes(adversary))
    return tx_v.replace(sender=adversary, data=data, nonce=nonce)


def _apply(state: WorldState, tx: Transaction, gas_table=None) -> ExecutionResult:
    try:
        return execute_transaction(state, tx, gas_table=gas_table)
    except TransactionError as exc:
        raise _Abort("validation", f"{type(exc).__name__}: {exc}") from None


def read_token_balance(state: WorldState, token: int, holder: int, fixture: StateFixture | None) -> int:
    if fixture is not None and token in fixture.token_layouts:
        return token_balance(state, token, holder, fixture.token_layouts)
    probe = Transaction(holder, token, data=encode_call("balanceOf(address)", holder), gas_limit=200_000,
                        gas_price=0, nonce=state.nonce(holder))
    try:
        res = execute_transaction(state, probe)
    except TransactionError:
        return 0
    return int.from_bytes(res.return_data[:32], "big") if res.success and len(res.return_data) >= 32 else 0


def _tracked_tokens(fixture: StateFixture | None, profit: ProfitReport | None) -> list[int]:
    tokens: set[int] = set()
    if fixture is not None:
        tokens |= {p.token for p in fixture.amm_pools} | set(fixture.token_layouts)
    if profit is not None:
        tokens |= {a for a in profit.flows if a is not None}
    return sorted(tokens)


def _exchange(state: WorldState, before: WorldState, adversary: int, fixture: StateFixture | None,
              profit: ProfitReport | None, gas_price: int, gas_table=None) -> tuple[WorldState, list, list]:
    """Sell every token the adversary gained into its fixture pool."""
    txs, results = [], []
    if fixture is None:
        return state, txs, results
    for token in _tracked_tokens(fixture, profit):
        pool = fixture.pool_for(token)
        if pool is None:
            continue
        gained = read_token_balance(state, token, adversary, fixture) - read_token_balance(before, token, adversary, fixture)
        if gained <= 0:
            continue
        for to, data in ((token, encode_call("transfer(address,uint256)", pool.pool, gained)),
                         (pool.pool, encode_call("swap(address)", adversary))):
            tx = Transaction(adversary, to, 0, data, EXCHANGE_GAS, gas_price, state.nonce(adversary))
            res = _apply(state, tx, gas_table)
            if not res.success:
                raise _Abort("validation", f"exchange of {hex_address(token)} failed ({res.status.value})")
            txs.append(tx)
            results.append(res)
            state = res.state_after
    return state, txs, results


def _account(outcome: AttackOutcome, start: WorldState, end: WorldState, adversary: int,
             results: list[ExecutionResult], victim_fee: int) -> None:
    delta = end.balance(adversary) - start.balance(adversary)
    outcome.gas_cost_e = sum(r.fee for r in results)
    outcome.gas_used = sum(r.gas_used for r in results)
    outcome.revenue_e = delta + outcome.gas_cost_e
    outcome.opportunity_cost_e = victim_fee
    outcome.net_profit_e = delta - victim_fee
    outcome.state_after = end


def _victim_fee(state: WorldState, tx_v: Transaction, gas_table=None) -> int:
    try:
        return execute_transaction(state, tx_v, gas_table=gas_table).fee
    except TransactionError:
        return 0


# ---------------------------------------------------------------- naive

def naive_imitate(state: WorldState, tx_v: Transaction, adversary: int, fixture: StateFixture | None = None,
                  opportunity_cost: bool = True, gas_table=None) -> AttackOutcome:
    """String-replace imitation, validated on a fork."""
    t0 = time.perf_counter()
    tx_c = naive_tx(tx_v, adversary, state.nonce(adversary))
    outcome = AttackOutcome(kind="abort", tx_c=tx_c)
    try:
        fee = _victim_fee(state, tx_v, gas_table) if opportunity_cost else 0
        res = _apply(state, tx_c, gas_table)
        if not res.success:
            raise _Abort("validation", f"imitation ended with {res.status.value}")
        end, ex_txs, ex_res = _exchange(res.state_after, state, adversary, fixture, None, tx_v.gas_price, gas_table)
        outcome.transactions = [tx_c] + ex_txs
        _account(outcome, state, end, adversary, [res] + ex_res, fee)
        if outcome.net_profit_e > 0:
            outcome.kind = "naive"
        else:
            outcome.abort_cause, outcome.abort_detail = "unprofitable", "imitation does not pay off"
    except _Abort as a:
        outcome.abort_cause, outcome.abort_detail = a.cause, a.detail
    outcome.timings["naive"] = time.perf_counter() - t0
    if not outcome.success:
        outcome.state_after = None
    return outcome


# ---------------------------------------------------------------- path equivalence

def path_equivalence(victim: DCFG, imitation: DCFG, deployments: Iterable[SynthesizedContract],
                     adversary: int | None = None) -> tuple[bool, str]:
    """Replaced contracts walk the victim's blocks, and make the victim's calls, in the same order."""
    deployments = list(deployments)
    back = {d.address: d.victim for d in deployments}
    if adversary is not None:
        back[adversary] = victim.tx.sender
    for d in deployments:
        vf = [f for f in victim.frames if f.code_address == d.victim and f.pcs]
        af = [f for f in imitation.frames if f.code_address == d.address and f.pcs]
        if len(vf) != len(af):
            return False, f"{hex_address(d.victim)}: {len(vf)} victim frames, {len(af)} imitation frames"
        rev = d.reverse_offsets()
        lo, hi = d.sweep_range or (0, 0)
        code = d.victim_code
        for v, a in zip(vf, af):
            mapped = [rev[pc] for pc in a.pcs if pc in rev and not lo <= pc < hi]
            ops = [code[pc] if pc < len(code) else 0 for pc in mapped]
            if block_sequence(d.victim, code, mapped, ops) != v.blocks:
                return False, f"{hex_address(d.victim)}: frame {v.index} block sequence differs"
        v_calls = [(e.kind, e.callee) for e in victim.call_edges
                   if victim.frames[e.frame_index].code_address == d.victim]
        a_calls = [(e.kind, back.get(e.callee, e.callee)) for e in imitation.call_edges
                   if imitation.frames[e.frame_index].code_address == d.address and not lo <= e.pc < hi]
        if v_calls != a_calls:
            return False, f"{hex_address(d.victim)}: external call sequence differs"
    return True, ""


# ---------------------------------------------------------------- APE

def build_attack_tx(tx_c: Transaction, plan: PatchPlan, deployments: list[SynthesizedContract],
                    nonce: int) -> Transaction:
    new = {d.victim: d.address for d in deployments}
    data = bytearray(tx_c.data)
    for rw in plan.calldata_rewrites:
        word = data[rw.offset:rw.offset + 32]
        if len(word) == 32 and int.from_bytes(word, "big") == rw.victim:
            data[rw.offset:rw.offset + 32] = new[rw.victim].to_bytes(32, "big")
    to = new.get(tx_c.to, tx_c.to) if plan.tx_to_redirect else tx_c.to
    extra = 300_000 * len(deployments)
    return tx_c.replace(to=to, data=bytes(data), nonce=nonce, gas_limit=tx_c.gas_limit + extra)


def deployment_txs(deployments: list[SynthesizedContract], adversary: int, nonce: int,
                   gas_price: int) -> list[Transaction]:
    out = []
    for i, d in enumerate(deployments):
        code = init_code(d.runtime_code, d.storage_init)
        gas = 100_000 + 32_000 + 250 * len(code) + 25_000 * len(d.storage_init)
        out.append(Transaction(adversary, None, 0, code, gas, gas_price, nonce + i))
    return out


class _Clock:
    def __init__(self, timings: dict[str, float], clock: Callable[[], float]):
        self.timings = timings
        self.clock = clock

    def run(self, step: str, fn, *args, **kwargs):
        t0 = self.clock()
        try:
            return fn(*args, **kwargs)
        finally:
            self.timings[step] = self.clock() - t0


def ape_attack(state: WorldState, tx_v: Transaction, adversary: int, fixture: StateFixture | None = None, *,
               sources: Iterable[str] = DEFAULT_SOURCES, opportunity_cost: bool = True, gas_table=None,
               clock: Callable[[], float] = time.perf_counter) -> AttackOutcome:
    """Run the six steps on forks of ``state``; ``state`` itself is never modified."""
    fixture = fixture.with_state(state) if fixture is not None else StateFixture(state)
    timings: dict[str, float] = {}
    outcome = AttackOutcome(kind="abort", timings=timings)
    steps = _Clock(timings, clock)
    try:
        _ape_steps(outcome, steps, state, tx_v, adversary, fixture, frozenset(sources), opportunity_cost, gas_table)
    except _Abort as a:
        outcome.kind, outcome.abort_cause, outcome.abort_detail = "abort", a.cause, a.detail
    if not outcome.success:
        outcome.state_after = None
    return outcome


def _guard(step: str, fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except _Abort:
        raise
    except VictimExecutionFailed as exc:
        raise _Abort("victim-failed", str(exc)) from None
    except TransactionError as exc:
        raise _Abort("invalid-transaction", f"{type(exc).__name__}: {exc}") from None
    except TraceMisalignment as exc:
        raise _Abort("misalignment", str(exc)) from None
    except BiBranchBlock as exc:
        raise _Abort("bi-branch", str(exc)) from None
    except ComputedJumpUnresolved as exc:
        raise _Abort("computed-jump", str(exc)) from None
    except SynthesisError as exc:
        raise _Abort("synthesis", str(exc)) from None
    except Exception as exc:  # any internal failure is an abort, never a partial attack
        raise _Abort(f"{step}-error", f"{type(exc).__name__}: {exc}") from None


def _ape_steps(outcome: AttackOutcome, steps: _Clock, state: WorldState, tx_v: Transaction, adversary: int,
               fixture: StateFixture, sources: frozenset[str], opportunity_cost: bool, gas_table) -> None:
    dcfg, result = steps.run("dcfg", _guard, "dcfg", build_dcfg, state, tx_v, gas_table)

    profit = steps.run("profitability", _guard, "profitability", analyze_profitability, dcfg, result, fixture)
    outcome.profit = profit
    if not profit.proceed:
        raise _Abort("unprofitable", "no beneficiary flow worth imitating")

    nonce = state.nonce(adversary)
    tx_c = naive_tx(tx_v, adversary, nonce)
    outcome.tx_c = tx_c
    taint = steps.run("taint", _guard, "taint", taint_replay, state, tx_c, dcfg, sources, gas_table)
    outcome.taint = taint
    if not taint.aligned_ok:
        raise _Abort("misalignment", "an untainted branch diverged; the imitation cannot follow the victim")

    plan = steps.run("patch", _guard, "patch", identify_patch_set, taint, profit, dcfg, fixture)
    outcome.plan = plan
    if plan.abort:
        raise _Abort(plan.abort, plan.abort_detail)
    if plan.empty:
        # nothing to replace: the naive imitation is the attack
        steps.timings["synthesis"] = 0.0
    else:
        outcome.deployments = steps.run("synthesis", _guard, "synthesis", synthesize, plan, dcfg, taint, adversary,
                                        nonce, profit)

    steps.run("validation", _guard, "validation", _validate, outcome, state, tx_v, tx_c, plan, dcfg, adversary,
              fixture, profit, opportunity_cost, gas_table)


def _validate(outcome: AttackOutcome, state: WorldState, tx_v: Transaction, tx_c: Transaction, plan: PatchPlan,
              dcfg: DCFG, adversary: int, fixture: StateFixture, profit: ProfitReport, opportunity_cost: bool,
              gas_table) -> None:
    fee = _victim_fee(state, tx_v, gas_table) if opportunity_cost else 0
    nonce = state.nonce(adversary)
    deployments = outcome.deployments
    fork = state
    results: list[ExecutionResult] = []
    txs = deployment_txs(deployments, adversary, nonce, tx_v.gas_price)
    for d, tx in zip(deployments, txs):
        res = _apply(fork, tx, gas_table)
        if not res.success or res.created != d.address:
            raise _Abort("validation", f"deployment of {hex_address(d.address)} failed ({res.status.value})")
        results.append(res)
        fork = res.state_after

    attack = build_attack_tx(tx_c, plan, deployments, nonce + len(deployments)) if deployments else tx_c
    imitation, res = trace_transaction(fork, attack, gas_table)
    outcome.imitation_dcfg = imitation
    if not res.success:
        raise _Abort("validation", f"imitation transaction ended with {res.status.value}")
    results.append(res)
    txs.append(attack)
    outcome.tx_c = attack

    if deployments:
        ok, detail = path_equivalence(dcfg, imitation, deployments, adversary)
        outcome.path_equivalent = ok
        if not ok:
            raise _Abort("path-mismatch", detail)

    end, ex_txs, ex_res = _exchange(res.state_after, state, adversary, fixture, profit, tx_v.gas_price, gas_table)
    outcome.transactions = txs + ex_txs
    _account(outcome, state, end, adversary, results + ex_res, fee)
    if outcome.net_profit_e <= 0:
        raise _Abort("unprofitable", f"validated net profit {outcome.net_profit_e} wei")
    outcome.kind = "ape" if deployments else "naive"

