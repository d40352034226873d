"""The eleven acceptance criteria, one test each; conftest prints a PASS/FAIL line per test."""

import json
import statistics
import time
from fractions import Fraction

import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

import imitation.pipeline as P
from imitation.evm import StepRecorder, disassemble, execute_transaction
from imitation.evm.opcodes import BY_NAME, JUMPI
from imitation.fixtures import contracts as C
from imitation.fixtures.scenarios import (
    ADVERSARY,
    GUARD,
    MD_AMOUNTS,
    MD_RESERVE_E,
    MD_RESERVE_T,
    MD_TOKEN,
    MD_VAULT,
    MINT_AMOUNT,
    MINT_RESERVE_E,
    MINT_RESERVE_T,
    POOL_VICTIM_PRICE,
    _addr,
    shipped,
    synthetic_pool,
)
from imitation.fixtures.scenarios import BUILDERS
from imitation.mempool import MempoolSim, simulate_mempool
from imitation.pipeline import STEPS, ape_attack, build_attack_tx, deployment_txs, naive_imitate
from imitation.report import report

from helpers import jumpi_conditions, taint_soundness

NAMES = sorted(BUILDERS)
BUNDLES = {n: shipped(n) for n in NAMES}  # the JSON files on disk, not the in-memory builders


def _quote(amount, reserve_in, reserve_out):
    """Independent constant-product oracle with the 0.3% fee, on exact rationals."""
    return int(Fraction(amount * 997 * reserve_out, reserve_in * 1000 + amount * 997))


def _ape(name, **kw):
    b = BUNDLES[name]
    return ape_attack(b.fixture.state, b.victim_tx, b.adversary, b.fixture, **kw)


def _naive(name):
    b = BUNDLES[name]
    return naive_imitate(b.fixture.state, b.victim_tx, b.adversary, b.fixture)


def _timed(fn, *args, **kw):
    t0 = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - t0


def test_c01_guard_bypass():
    """1. guard: naive aborts, ape succeeds with one contract whose tainted JUMPI is fed by CALLER, < 1 s"""
    b = BUNDLES["guard"]
    assert _naive("guard").kind == "abort"
    out, elapsed = _timed(ape_attack, b.fixture.state, b.victim_tx, b.adversary, b.fixture)
    assert out.kind == "ape" and out.net_profit_e > 0 and elapsed < 1.0
    (synth,) = out.deployments
    assert synth.victim == GUARD
    (tb,) = out.taint.tainted_blocks
    assert tb.block.contract == GUARD and tb.origins == {"CALLER"}

    # second route: the block really reads CALLER, and swapping the caller really flips that JUMPI
    code = b.fixture.state.code(GUARD)
    block_ops = [i.op for i in disassemble(code) if tb.block.start <= i.pc <= tb.jumpi_pc]
    assert BY_NAME["CALLER"] in block_ops and code[tb.jumpi_pc] == JUMPI
    state = b.fixture.state
    victim = {pc: c for _, pc, depth, c in jumpi_conditions(state, b.victim_tx) if depth == 0}
    tx_c = b.victim_tx.replace(sender=ADVERSARY, nonce=state.nonce(ADVERSARY))
    imitation = {pc: c for _, pc, depth, c in jumpi_conditions(state, tx_c) if depth == 0}
    assert bool(victim[tb.jumpi_pc]) and not bool(imitation[tb.jumpi_pc])


def test_c02_mass_deposit():
    """2. massDeposit: vault replaced, every deposited token swept, profit = AMM value - gas exactly, < 1 s"""
    b = BUNDLES["mass-deposit"]
    out, elapsed = _timed(ape_attack, b.fixture.state, b.victim_tx, b.adversary, b.fixture)
    assert out.kind == "ape" and elapsed < 1.0
    (vault,) = out.deployments
    assert vault.victim == MD_VAULT

    # replay deployment + attack and count tokens before any exchange
    state = b.fixture.state
    for tx in deployment_txs(out.deployments, ADVERSARY, state.nonce(ADVERSARY), b.victim_tx.gas_price):
        state = execute_transaction(state, tx).state_after
    attack = build_attack_tx(P.naive_tx(b.victim_tx, ADVERSARY, 0), out.plan, out.deployments,
                             state.nonce(ADVERSARY))
    after = execute_transaction(state, attack).state_after
    held = lambda who, s: s.storage_at(MD_TOKEN, C.balance_slot(who))  # noqa: E731
    deposited = sum(MD_AMOUNTS)
    assert held(ADVERSARY, after) - held(ADVERSARY, state) == deposited
    assert held(vault.address, after) == 0

    value = _quote(deposited, MD_RESERVE_T, MD_RESERVE_E)
    assert out.revenue_e == value
    assert out.net_profit_e == value - out.gas_cost_e - out.opportunity_cost_e
    delta = out.state_after.balance(ADVERSARY) - b.fixture.state.balance(ADVERSARY)
    assert delta == value - out.gas_cost_e


def test_c03_naive_mint_and_swap():
    """3. mint-and-swap: naive succeeds with revenue equal to the constant-product quote, to the wei"""
    out = _naive("mint-and-swap")
    assert out.kind == "naive"
    assert out.revenue_e == _quote(MINT_AMOUNT, MINT_RESERVE_T, MINT_RESERVE_E)


def test_c04_ecdsa_vault_aborts():
    """4. ECDSA vault: abort, never a false success"""
    b = BUNDLES["ecdsa-vault"]
    for adversary in (b.adversary, _addr(0x99)):
        state = b.fixture.state.copy()
        state.account(adversary).balance = max(state.balance(adversary), 10**19)
        assert ape_attack(state, b.victim_tx, adversary, b.fixture).kind == "abort"
        assert naive_imitate(state, b.victim_tx, adversary, b.fixture).kind == "abort"
        assert ape_attack(state, b.victim_tx, adversary, b.fixture, opportunity_cost=False).kind == "abort"


def test_c05_taint_soundness_corpus():
    """5. taint soundness: 1000 random programs, zero false negatives against the perturbation oracle"""
    stats = taint_soundness(range(1000))
    print(f"\ncorpus: {stats['programs']} programs, {stats['jumpis']} JUMPIs, {stats['flips']} flips, "
          f"over-taint rate {stats['over_taint_rate']:.3f}")
    assert stats["programs"] == 1000 and stats["flips"] > 0
    assert stats["false_negatives"] == []


class _Pcs(StepRecorder):
    def __init__(self):
        super().__init__()
        self.by_frame = {}

    def pre_step(self, step):
        self.by_frame.setdefault(step.frame.index, (step.frame.code_address, []))[1].append(step.pc)


def test_c06_path_equivalence():
    """6. path equivalence: every successful ape imitation walks the victim's blocks exactly"""
    checked = 0
    for name in NAMES:
        out = _ape(name)
        if out.kind != "ape":
            continue
        assert out.path_equivalent is True
        # second route: instruction-level pc streams from a plain recorder, mapped back through the layout
        b = BUNDLES[name]
        victim = _Pcs()
        execute_transaction(b.fixture.state, b.victim_tx, hooks=victim)
        state = b.fixture.state
        for tx in out.transactions[:len(out.deployments)]:
            state = execute_transaction(state, tx).state_after
        imitation = _Pcs()
        execute_transaction(state, out.transactions[len(out.deployments)], hooks=imitation)
        for d in out.deployments:
            rev, (lo, hi) = d.reverse_offsets(), d.sweep_range or (0, 0)
            v = [pcs for addr, pcs in victim.by_frame.values() if addr == d.victim]
            a = [[rev[pc] for pc in pcs if pc in rev and not lo <= pc < hi]
                 for addr, pcs in imitation.by_frame.values() if addr == d.address]
            assert v == a, name
        checked += 1
    assert checked >= 3


def test_c07_untainted_equivalence():
    """7. untainted fixtures: the ape transaction is byte-identical to the naive one"""
    # "no source influence": no tainted branch and the profit lands on the sender itself.
    # Fixtures whose payout lands in a caller-named contract (mass-deposit, tiny-claimer)
    # need that contract replaced whatever the sender is, so they are out of scope here.
    checked = []
    for name in NAMES:
        b = BUNDLES[name]
        out = _ape(name)
        if out.taint is None or not out.taint.empty or out.profit.beneficiaries != {b.victim_tx.sender}:
            continue
        naive = _naive(name)
        assert out.success and naive.success and out.deployments == []
        assert json.dumps(out.tx_c.canonical()) == json.dumps(naive.tx_c.canonical())
        assert out.net_profit_e == naive.net_profit_e
        checked.append(name)
    assert sorted(checked) == ["calldata-airdrop", "mint-and-swap"]


_INJECTED = {
    "dcfg": "build_dcfg",
    "profitability": "analyze_profitability",
    "taint": "taint_replay",
    "patch": "identify_patch_set",
    "synthesis": "synthesize",
    "validation": "_validate",
}
_LATE = ["trace_transaction", "_exchange", "path_equivalence", "deployment_txs"]  # inside validation


@settings(max_examples=120, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.sampled_from(NAMES), st.sampled_from(list(_INJECTED.values()) + _LATE),
       st.sampled_from([RuntimeError, KeyError, ValueError, ZeroDivisionError, AssertionError]))
def test_c08_risk_free_aborts(name, target, exc):
    """8. risk-free: a failure injected at any of the six steps leaves state and adversary balance bit-identical"""
    assert set(_INJECTED) == set(STEPS)
    b = BUNDLES[name]
    before = json.dumps(b.fixture.state.canonical())
    balance = b.fixture.state.balance(b.adversary)

    def boom(*a, **k):
        raise exc("injected")

    with pytest.MonkeyPatch.context() as mp:
        calls = []
        real = getattr(P, target)

        def spy(*a, **k):
            calls.append(target)
            return boom(*a, **k)

        mp.setattr(P, target, spy)
        out = ape_attack(b.fixture.state, b.victim_tx, b.adversary, b.fixture)
    if calls:
        assert out.kind == "abort" and out.state_after is None and out.transactions == []
        assert out.abort_cause
    assert json.dumps(b.fixture.state.canonical()) == before
    assert b.fixture.state.balance(b.adversary) == balance
    assert real is getattr(P, target)


def test_c09_size_reduction_sign_range():
    """9. size reduction: positive on the guard, negative on a minimal victim plus sweep"""
    (guard,) = _ape("guard").deployments
    assert guard.size_reduction_pct > 0
    assert Fraction(len(guard.victim_code) - len(guard.runtime_code), len(guard.victim_code)) * 100 \
        == guard.size_reduction_pct
    (tiny,) = _ape("tiny-claimer").deployments
    assert tiny.sweep_assets and tiny.size_reduction_pct < 0


def test_c10_timing_envelope():
    """10. timing: mean single-transaction pipeline time under 2 s; per-step timings in table shape"""
    outcomes, wall = [], []
    for name in NAMES:
        out, elapsed = _timed(_ape, name)
        outcomes.append(out)
        wall.append(elapsed)
    assert statistics.fmean(wall) < 2.0
    summary = report(outcomes)
    assert list(summary.step_timings) == list(STEPS)
    assert summary.total_timing.count == len(NAMES) and summary.total_timing.mean < 2.0
    text = summary.render()
    print("\n" + text)
    for label in ("DCFG", "Profitability", "Taint", "Patch", "Synthesis", "Validation", "Total"):
        assert any(line.startswith(label) for line in text.splitlines())


def test_c11_mempool():
    """11. mempool: gas-price order, nonce filter, victim replacement and the block gas limit on 20 txs"""
    fixture, pending, limit = synthetic_pool()
    assert len(pending) == 20
    res = simulate_mempool(MempoolSim(pending, fixture.state, limit, fixture), ADVERSARY)

    # replacement: the vulnerable tx is gone, the adversary's pair stands in its slot
    (victim,) = res.replaced
    assert victim.to == GUARD and victim not in res.transactions
    origins = [e.origin for e in res.block]
    at = origins.index("attack")
    assert origins[at:at + 2] == ["attack", "attack"] and origins.count("attack") == 2

    # ordering: a plain quadratic reference (best-priced ready tx first, ties by arrival)
    account_nonce = {t.sender: fixture.state.nonce(t.sender) for t in pending}
    waiting, expected = list(pending), []
    while True:
        ready = [t for t in waiting if t.nonce == account_nonce[t.sender]]
        if not ready:
            break
        best = max(ready, key=lambda t: (t.gas_price, -pending.index(t)))
        expected.append(best)
        waiting.remove(best)
        account_nonce[best.sender] += 1
    seen = [victim if e.origin == "attack" else e.tx for e in res.block]
    seen = [t for i, t in enumerate(seen) if i == 0 or t is not seen[i - 1]]  # the attack pair stands for one tx
    assert seen == [t for t in expected if not any(t is d for d, _ in res.dropped)]

    # nonces: the gap tx is filtered, the reverse-priced pair lands in nonce order
    dropped = {(t.sender, t.nonce): r for t, r in res.dropped}
    assert dropped[(_addr(0x3F1), 3)].startswith("nonce")
    twice = [e.tx.nonce for e in res.block if e.tx.sender == _addr(0x3F0)]
    assert twice == sorted(twice)

    # gas limit: respected, and it actually bit
    assert res.gas_used <= limit and "block gas limit" in dropped.values()
    included = sum(1 for e in res.block if e.origin == "pending")
    assert included + len(res.replaced) + len(res.dropped) == 20
