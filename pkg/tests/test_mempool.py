from hypothesis import given, settings, strategies as st

from imitation.evm import Transaction
from imitation.fixtures.scenarios import ADVERSARY, GUARD, GWEI, POOL_VICTIM_PRICE, _addr, synthetic_pool
from imitation.mempool import MempoolSim, gas_price_order, nonce_filter, simulate_mempool
from imitation.pipeline import AttackOutcome

from helpers import OTHER, SENDER, world

BUYER = 0xDEAD


def _transfer(sender, price, nonce=0, value=1):
    return Transaction(sender, BUYER, value, b"", 21_000, price, nonce)


def _never(state, tx, adversary, fixture=None):
    return AttackOutcome(kind="abort", abort_cause="unprofitable")


def test_empty_pool_builds_an_empty_block():
    res = simulate_mempool(MempoolSim([], world(), 1_000_000), ADVERSARY)
    assert res.block == [] and res.gas_used == 0 and res.outcomes == [] and res.dropped == []


def test_three_transfers_in_price_order():
    c = 0xC0C0
    pending = [_transfer(SENDER, 5), _transfer(OTHER, 9), _transfer(c, 7)]
    state = world(funded=(SENDER, OTHER, c))
    res = simulate_mempool(MempoolSim(pending, state, 1_000_000), ADVERSARY, attack=_never)
    assert [t.sender for t in res.transactions] == [OTHER, c, SENDER]
    assert res.gas_used == 63_000 and res.state.balance(BUYER) == 3
    assert [m["kind"] for m in res.metrics] == ["abort"] * 3


def test_adversary_transactions_are_not_attacked():
    pending = [_transfer(ADVERSARY, 5)]
    res = simulate_mempool(MempoolSim(pending, world(funded=(ADVERSARY,)), 1_000_000), ADVERSARY)
    assert res.outcomes == [] and res.transactions == pending


def test_synthetic_pool_end_to_end():
    fixture, pending, limit = synthetic_pool()
    res = simulate_mempool(MempoolSim(pending, fixture.state, limit, fixture), ADVERSARY)

    # the guard victim is swapped for the deployment and the attack
    (victim,) = res.replaced
    assert victim.to == GUARD and victim.gas_price == POOL_VICTIM_PRICE
    origins = [e.origin for e in res.block]
    assert origins.count("attack") == 2 and victim not in res.transactions
    attack_at = origins.index("attack")
    assert [e.tx.to for e in res.block[attack_at:attack_at + 2]][0] is None  # deployment first
    assert all(e.tx.sender == ADVERSARY for e in res.block[attack_at:attack_at + 2])
    # everything priced above the victim is ahead of it
    ahead = [e.tx.gas_price for e in res.block[:attack_at]]
    assert ahead and min(ahead) >= POOL_VICTIM_PRICE

    # nonce gap dropped up front; the block gas limit is respected
    reasons = {(t.sender, t.nonce): r for t, r in res.dropped}
    assert reasons[(_addr(0x3F1), 3)].startswith("nonce")
    assert res.gas_used <= limit
    assert any(r == "block gas limit" for r in reasons.values())

    # the adversary is richer than before
    assert res.state.balance(ADVERSARY) > fixture.state.balance(ADVERSARY)
    assert len(res.metrics) == len(res.outcomes) and all(m["t0"] >= 0 for m in res.metrics)


def test_one_sender_keeps_nonce_order_despite_prices():
    twice = _addr(0x3F0)
    pending = [_transfer(twice, 95 * GWEI, nonce=1), _transfer(twice, 2 * GWEI, nonce=0), _transfer(SENDER, 50 * GWEI)]
    ordered = gas_price_order(pending)
    assert [(t.sender, t.nonce) for t in ordered] == [(SENDER, 0), (twice, 0), (twice, 1)]


def test_nonce_filter_keeps_only_contiguous_runs():
    state = world(funded=(SENDER,))
    state.account(SENDER).nonce = 2
    pending = [_transfer(SENDER, 1, n) for n in (4, 2, 1, 3, 6)]
    kept, dropped = nonce_filter(pending, state)
    assert [t.nonce for t in kept] == [4, 2, 3]  # pool order is preserved
    assert sorted(t.nonce for t, _ in dropped) == [1, 6]


_senders = st.sampled_from([0xA1, 0xA2, 0xA3, 0xA4])


@settings(max_examples=200)
@given(st.lists(st.tuples(_senders, st.integers(1, 50)), max_size=20))
def test_price_order_is_a_nonce_respecting_permutation(specs):
    counts = {}
    pending = []
    for sender, price in specs:
        pending.append(_transfer(sender, price, counts.get(sender, 0)))
        counts[sender] = counts.get(sender, 0) + 1
    ordered = gas_price_order(pending)
    assert sorted(map(id, ordered)) == sorted(map(id, pending))
    nxt = {}
    for i, tx in enumerate(ordered):
        ready = [t for t in ordered[i:] if t.nonce == nxt.get(t.sender, 0)]
        assert any(t is tx for t in ready)
        # no ready transaction with a higher price was skipped
        assert tx.gas_price == max(t.gas_price for t in ready)
        nxt[tx.sender] = tx.nonce + 1
