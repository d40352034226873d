import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from imitation.evm import WorldState, execute_transaction
from imitation.fixtures import (
    AmmPool,
    HexError,
    SchemaError,
    StateFixture,
    UnknownAsset,
    amm_quote,
    bundle_from_json,
    bundle_to_json,
    dumps,
    fixture_from_json,
    fixture_to_json,
    load_fixture,
    load_scenario,
    quote_to_native,
)
from imitation.fixtures.scenarios import BUILDERS, GUARD, GUARD_AUTH, build_all, data_dir, synthetic_pool
from imitation.fixtures.schema import load_pool, pool_to_json

from helpers import BLOCK

TOKEN = 0x7000000000000000000000000000000000000007
POOL = 0x9000000000000000000000000000000000000009


def _minimal(**extra):
    return {"accounts": {}, "blockContext": {"number": 1}, **extra}


def test_minimal_fixture_is_an_empty_world():
    fx = fixture_from_json(_minimal())
    assert fx.state.accounts == {} and fx.state.block.number == 1
    assert fx.price_table == {} and fx.amm_pools == []


def test_nineteen_byte_address_names_the_key():
    bad = "0x" + "11" * 19
    with pytest.raises(SchemaError) as err:
        fixture_from_json(_minimal(accounts={bad: {"balance": "0x1"}}))
    assert bad in str(err.value) and "20 bytes" in str(err.value)
    assert err.value.path.startswith("$.accounts")


@pytest.mark.parametrize("doc,path", [
    (_minimal(accounts={"0x" + "11" * 20: {"storage": {"0x01": "0x" + "00" * 32}}}), "storage"),
    (_minimal(accounts={"0x" + "11" * 20: {"balance": "0xzz"}}), "balance"),
    (_minimal(accounts={"0x" + "11" * 20: {"bogus": 1}}), "$.accounts"),
    (_minimal(priceTable={"0x" + "11" * 20: {"num": "0x1", "den": "0x0"}}), "den"),
    ({"accounts": {}}, "blockContext"),
])
def test_schema_errors_carry_a_field_path(doc, path):
    with pytest.raises(SchemaError) as err:
        fixture_from_json(doc)
    assert path in err.value.path


def test_malformed_hex_is_a_hex_error():
    with pytest.raises(HexError):
        fixture_from_json(_minimal(accounts={"0x" + "11" * 20: {"code": "0x123"}}))


def test_guard_bundle_holds_the_guard_bytecode():
    b = load_scenario(data_dir() / "guard.json")
    contracts = [a for a, acc in b.fixture.state.accounts.items() if acc.code]
    assert GUARD in contracts
    code = b.fixture.state.code(GUARD)
    assert GUARD_AUTH.to_bytes(20, "big") in code
    assert b.victim_tx.sender == GUARD_AUTH and b.expected_outcome == "ape-succeeds"


@pytest.mark.parametrize("name", sorted(BUILDERS))
def test_shipped_files_match_builders(name):
    path = data_dir() / f"{name}.json"
    assert path.read_text() == dumps(bundle_to_json(BUILDERS[name]()))


def test_shipped_mempool_matches_builder():
    fixture, pending, limit = synthetic_pool()
    d = data_dir() / "mempool"
    assert (d / "state.json").read_text() == dumps(fixture_to_json(fixture))
    loaded, loaded_limit, _ = load_pool(d / "pool.json")
    assert loaded == pending and loaded_limit == limit


@pytest.mark.parametrize("name", sorted(BUILDERS))
def test_round_trip_is_byte_stable(name, tmp_path):
    text = (data_dir() / f"{name}.json").read_text()
    again = dumps(bundle_to_json(bundle_from_json(json.loads(text))))
    assert again == text
    fx_path = tmp_path / "fx.json"
    fx_path.write_text(dumps(json.loads(text)["state"]))
    assert dumps(fixture_to_json(load_fixture(fx_path))) == fx_path.read_text()


def test_loading_twice_is_deterministic():
    p = data_dir() / "mass-deposit.json"
    assert load_fixture(p).state == load_fixture(p).state


@pytest.mark.parametrize("name", sorted(BUILDERS))
def test_every_shipped_victim_succeeds(name):
    b = build_all()[name]
    assert execute_transaction(b.fixture.state, b.victim_tx).success


def test_bundle_with_failing_victim_is_rejected():
    doc = bundle_to_json(build_all()["guard"])
    doc["victimTx"]["sender"] = "0x" + "22" * 20
    with pytest.raises(SchemaError) as err:
        bundle_from_json(doc)
    assert "victimTx" in err.value.path


def test_pool_round_trip():
    _, pending, limit = synthetic_pool()
    doc = pool_to_json(pending, limit)
    assert json.loads(dumps(doc)) == doc


# ---------------------------------------------------------------- pricing

def _fixture(**kw) -> StateFixture:
    return StateFixture(WorldState({}, BLOCK), **kw)


def test_zero_amount_is_worth_nothing():
    assert quote_to_native(TOKEN, 0, _fixture()) == 0


def test_price_table_is_linear():
    assert quote_to_native(TOKEN, 10, _fixture(price_table={TOKEN: Fraction(2)})) == 20


def test_amm_quote_reference_value():
    # 100*1000*997 / (1000*1000 + 100*997) = 99_700_000 / 1_099_700 = 90.66...
    assert Fraction(100 * 1000 * 997, 1000 * 1000 + 100 * 997) == Fraction(99_700_000, 1_099_700)
    assert amm_quote(100, 1000, 1000) == 90
    fx = _fixture(amm_pools=[AmmPool(POOL, TOKEN, 1000, 1000)])
    assert quote_to_native(TOKEN, 100, fx) == 90


def test_price_table_wins_over_pool():
    fx = _fixture(price_table={TOKEN: Fraction(1, 2)}, amm_pools=[AmmPool(POOL, TOKEN, 1000, 1000)])
    assert quote_to_native(TOKEN, 10, fx) == 5


def test_unknown_asset():
    with pytest.raises(UnknownAsset):
        quote_to_native(TOKEN, 1, _fixture())


def _exact(a, rt, re):
    return Fraction(a * re * 997, rt * 1000 + a * 997)


reserves = st.integers(1, 10**30)


@settings(max_examples=200)
@given(st.integers(0, 10**30), reserves, reserves)
def test_integer_quote_is_the_floor_of_the_exact_quote(a, rt, re):
    assert amm_quote(a, rt, re) == int(_exact(a, rt, re))


@settings(max_examples=200)
@given(st.integers(1, 10**24), st.integers(1, 10**24), reserves, reserves)
def test_quote_is_monotone_concave_and_subadditive(a1, a2, rt, re):
    # exact (unfloored) curve: strictly increasing, strictly concave, subadditive
    q = lambda a: _exact(a, rt, re)  # noqa: E731
    assert q(a1 + a2) > q(a1)
    assert q(a1 + a2) < q(a1) + q(a2)
    lo, hi = min(a1, a2), max(a1, a2)
    if lo != hi:
        mid = Fraction(lo + hi, 2)
        exact_mid = Fraction(mid * re * 997) / (rt * 1000 + mid * 997)
        assert exact_mid > (q(lo) + q(hi)) / 2
    # the floored quote keeps monotonicity and is subadditive up to one unit of rounding
    assert amm_quote(a1 + a2, rt, re) >= amm_quote(a1, rt, re)
    assert amm_quote(a1 + a2, rt, re) <= amm_quote(a1, rt, re) + amm_quote(a2, rt, re) + 1
