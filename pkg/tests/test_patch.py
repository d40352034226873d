import pytest

from imitation.evm import Account
from imitation.fixtures import StateFixture
from imitation.fixtures import contracts as C
from imitation.fixtures.scenarios import (
    ADVERSARY,
    GUARD,
    MD_VAULT,
    PAIR_FORWARDER,
    PAIR_GUARDED,
    TINY_CLAIMER,
    build_all,
)
from imitation.patch import close_replace_set, deploy_order, hardcoded_edges, identify_patch_set
from imitation.profit import analyze_profitability
from imitation.taint import taint_replay
from imitation.trace import CodeConstant, build_dcfg

from helpers import E, OTHER, SENDER, call, world


def _analyse(state, tx, fixture=None, adversary=ADVERSARY):
    fixture = fixture or StateFixture(state)
    dcfg, res = build_dcfg(state, tx)
    profit = analyze_profitability(dcfg, res, fixture)
    taint = taint_replay(state, tx.replace(sender=adversary, nonce=state.nonce(adversary)), dcfg)
    return dcfg, profit, taint


def _plan(name):
    b = build_all()[name]
    dcfg, profit, taint = _analyse(b.fixture.state, b.victim_tx, b.fixture)
    return identify_patch_set(taint, profit, dcfg, b.fixture), dcfg, profit, taint


@pytest.mark.parametrize("name", ["mint-and-swap", "calldata-airdrop"])
def test_profitable_untainted_runs_need_no_replacement(name):
    plan, *_ = _plan(name)
    assert plan.empty and plan.abort is None and not plan.tx_to_redirect


def test_guard_replaces_only_the_guard():
    plan, *_ = _plan("guard")
    assert plan.victims == [GUARD] and plan.reason_of(GUARD) == "tainted" and plan.tx_to_redirect


def test_hardcoded_caller_joins_the_plan():
    # the forwarder is untainted but embeds the guarded contract's address in a PUSH20
    plan, dcfg, *_ = _plan("hardcoded-pair")
    assert plan.victims == [PAIR_GUARDED, PAIR_FORWARDER]
    assert plan.reason_of(PAIR_FORWARDER) == "hardcoded-caller"
    (edge,) = plan.replace[0].caller_edges
    assert edge.caller == PAIR_FORWARDER and edge.target_provenance == CodeConstant(PAIR_FORWARDER, edge.target_provenance.pc)
    assert plan.tx_to_redirect


def test_beneficiary_contracts_are_replaced():
    assert _plan("tiny-claimer")[0].victims == [TINY_CLAIMER]
    plan, *_ = _plan("mass-deposit")
    assert plan.victims == [MD_VAULT] and plan.reason_of(MD_VAULT) == "beneficiary"
    # the vault address came in through calldata, so the imitation rewrites that word
    assert [(c.offset, c.victim) for c in plan.calldata_rewrites] == [(4, MD_VAULT)]
    assert not plan.tx_to_redirect


@pytest.mark.parametrize("name", ["ecdsa-vault", "priced-transfer"])
def test_unprofitable_runs_abort(name):
    plan, *_ = _plan(name)
    assert plan.abort == "unprofitable" and plan.empty


def test_asset_contracts_cannot_be_replaced():
    plan, dcfg, profit, taint = _plan("guard")
    profit.asset_contracts = {GUARD}
    plan = identify_patch_set(taint, profit, dcfg)
    assert plan.abort == "asset-contract"


def test_misaligned_taint_aborts_first():
    _, dcfg, profit, taint = _plan("guard")
    taint.aligned_ok = False
    assert identify_patch_set(taint, profit, dcfg).abort == "misalignment"


A, B, GUARDED, FAUCET = (0xAAAA0000000000000000000000000000000000A1, 0xAAAA0000000000000000000000000000000000B1,
                         0xAAAA0000000000000000000000000000000000C1, 0xAAAA0000000000000000000000000000000000F1)


def _chain():
    state = world(
        (A, Account(code=C.forwarding_caller_code(B))),
        (B, Account(code=C.forwarding_caller_code(GUARDED))),
        (GUARDED, Account(code=C.origin_guarded_code(SENDER, FAUCET))),
        (FAUCET, Account(balance=E, code=C.bounty_code(), storage={1: E})),
    )
    return _analyse(state, call(to=A), adversary=OTHER)


def test_closure_walks_the_whole_caller_chain():
    dcfg, profit, taint = _chain()
    assert taint.tainted_contracts == {GUARDED}
    members = close_replace_set({GUARDED: "tainted"}, dcfg)
    assert {m: r for m, (r, _) in members.items()} == {GUARDED: "tainted", B: "hardcoded-caller",
                                                         A: "hardcoded-caller"}
    # fixpoint: closing again adds nothing
    again = close_replace_set({m: r for m, (r, _) in members.items()}, dcfg)
    assert set(again) == set(members)
    plan = identify_patch_set(taint, profit, dcfg)
    assert plan.victims == [GUARDED, B, A]


def test_deploy_order_puts_callees_first():
    dcfg, *_ = _chain()
    for members in ([A, B, GUARDED], [GUARDED, A, B], [B, GUARDED, A]):
        order = deploy_order(members, dcfg)
        for e in hardcoded_edges(dcfg, set(members)):
            assert order.index(e.callee) < order.index(e.target_provenance.contract)


def test_every_plan_is_closed():
    for name in build_all():
        plan, dcfg, *_ = _plan(name)
        if plan.abort:
            continue
        for e in hardcoded_edges(dcfg, set(plan.victims)):
            assert e.target_provenance.contract in plan.victims
