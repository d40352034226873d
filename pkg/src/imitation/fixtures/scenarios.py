"""Builders for the shipped scenario bundles.

``python -m imitation.fixtures.scenarios [DIR]`` regenerates the JSON files under
``data/``; the test suite checks the committed files against these builders.
"""

from __future__ import annotations

import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

from ..evm.state import Account, BlockContext, Transaction, WorldState
from . import contracts as C
from .schema import (
    AmmPool,
    ScenarioBundle,
    StateFixture,
    dumps,
    load_scenario,
    pool_to_json,
    save_fixture,
    save_scenario,
)

E = 10**18
GWEI = 10**9
GAS_PRICE = GWEI

ADVERSARY = int("ab" + "00" * 18 + "cd", 16)
GUARD_AUTH = int("53d8" + "00" * 16 + "0d81", 16)
COINBASE = int("c0" * 20, 16)

BLOCK = BlockContext(number=13_810_360, timestamp=1_639_500_000, coinbase=COINBASE,
                     gas_limit=30_000_000, chain_id=1, base_gas_price=0)


def _addr(tag: int) -> int:
    # readable, collision-free fixture addresses: 0x1000...00<tag>
    return (0x10 << 152) | tag


def _state(*pairs: tuple[int, Account]) -> WorldState:
    accounts = {a: acc for a, acc in pairs}
    accounts.setdefault(ADVERSARY, Account(balance=100 * E))
    return WorldState(accounts, BLOCK)


def _call(sender: int, to: int, data: bytes = b"", value: int = 0, gas: int = 1_000_000) -> Transaction:
    return Transaction(sender=sender, to=to, value=value, data=data, gas_limit=gas, gas_price=GAS_PRICE, nonce=0)


# ---------------------------------------------------------------- scenarios

GUARD = _addr(0x0B)
BOUNTY = _addr(0xB0)
GUARD_PAYOUT = 5 * E


def guard_scenario() -> ScenarioBundle:
    """Liquidation contract that only its operator may trigger; the payout goes to the caller."""
    state = _state(
        (GUARD_AUTH, Account(balance=10 * E)),
        (GUARD, Account(code=C.guard_contract_code(GUARD_AUTH, BOUNTY))),
        (BOUNTY, Account(balance=GUARD_PAYOUT, code=C.bounty_code(), storage={1: GUARD_PAYOUT})),
    )
    tx = _call(GUARD_AUTH, GUARD, C.encode_call("printMoney()"))
    return ScenarioBundle("guard", StateFixture(state), tx, ADVERSARY, "ape-succeeds",
                          "operator-only liquidation guarded by a CALLER check")


PAIR_OWNER = _addr(0x70)
PAIR_FORWARDER = _addr(0x7A)
PAIR_GUARDED = _addr(0x7B)
PAIR_FAUCET = _addr(0x7C)


def pair_scenario() -> ScenarioBundle:
    """Untainted forwarder hard-codes the address of an ORIGIN-guarded claimer."""
    state = _state(
        (PAIR_OWNER, Account(balance=10 * E)),
        (PAIR_FORWARDER, Account(code=C.forwarding_caller_code(PAIR_GUARDED))),
        (PAIR_GUARDED, Account(code=C.origin_guarded_code(PAIR_OWNER, PAIR_FAUCET))),
        (PAIR_FAUCET, Account(balance=3 * E, code=C.bounty_code(), storage={1: 3 * E})),
    )
    tx = _call(PAIR_OWNER, PAIR_FORWARDER)
    return ScenarioBundle("hardcoded-pair", StateFixture(state), tx, ADVERSARY, "ape-succeeds",
                          "tainted contract reached through a PUSH20 constant in its caller")


TINY_SENDER = _addr(0x50)
TINY_CLAIMER = _addr(0x5C)
TINY_FAUCET = _addr(0x5F)


def tiny_claimer_scenario() -> ScenarioBundle:
    """A few-byte contract collects a faucet payout and keeps it."""
    state = _state(
        (TINY_SENDER, Account(balance=10 * E)),
        (TINY_CLAIMER, Account(code=C.tiny_claimer_code(TINY_FAUCET))),
        (TINY_FAUCET, Account(balance=1 * E, code=C.bounty_code(), storage={1: 1 * E})),
    )
    tx = _call(TINY_SENDER, TINY_CLAIMER)
    return ScenarioBundle("tiny-claimer", StateFixture(state), tx, ADVERSARY, "ape-succeeds",
                          "beneficiary contract far smaller than the injected sweep")


MINT_SENDER = _addr(0x60)
MINT_TOKEN = _addr(0x61)
MINT_POOL = _addr(0x62)
MINT_AMOUNT = 10**15 * E
MINT_RESERVE_E = 40 * E
MINT_RESERVE_T = MINT_AMOUNT * 926 // 10_000


def _pool_account(token: int, reserve_token: int, reserve_e: int) -> Account:
    return Account(balance=reserve_e, code=C.amm_pool_code(), storage={0: token, 1: reserve_token, 2: reserve_e})


def mint_scenario() -> ScenarioBundle:
    """increaseAllowance mints to an arbitrary spender; the sender mints to itself."""
    state = _state(
        (MINT_SENDER, Account(balance=10 * E)),
        (MINT_TOKEN, Account(code=C.erc20_code(mintable=True), storage={
            C.balance_slot(MINT_POOL): MINT_RESERVE_T, C.TOKEN_SUPPLY_SLOT: MINT_RESERVE_T})),
        (MINT_POOL, _pool_account(MINT_TOKEN, MINT_RESERVE_T, MINT_RESERVE_E)),
    )
    fixture = StateFixture(state, amm_pools=[AmmPool(MINT_POOL, MINT_TOKEN, MINT_RESERVE_T, MINT_RESERVE_E)],
                           token_layouts={MINT_TOKEN: C.TOKEN_BALANCES_SLOT})
    tx = _call(MINT_SENDER, MINT_TOKEN, C.encode_call("increaseAllowance(address,uint256)", MINT_SENDER, MINT_AMOUNT))
    return ScenarioBundle("mint-and-swap", fixture, tx, ADVERSARY, "naive-succeeds",
                          "free mint followed by an exchange through the token/native pool")


ECDSA_SENDER = _addr(0xEC)
ECDSA_VAULT = _addr(0xED)


def ecdsa_scenario() -> ScenarioBundle:
    """Signature-gated withdrawal; the recovery precompile is not available."""
    state = _state(
        (ECDSA_SENDER, Account(balance=10 * E)),
        (ECDSA_VAULT, Account(balance=20 * E, code=C.ecdsa_vault_code())),
    )
    digest = 0x5EED
    tx = _call(ECDSA_SENDER, ECDSA_VAULT, C.encode_call("withdraw(bytes32,uint8,bytes32,bytes32)",
                                                        digest, 27, 0x1111, 0x2222))
    return ScenarioBundle("ecdsa-vault", StateFixture(state), tx, ADVERSARY, "abort",
                          "withdrawal needs a signature by the caller; not imitable")


MD_SENDER = _addr(0xD0)
MD_OWNER = _addr(0xD1)
MD_DEPOSITER = _addr(0xD2)
MD_VAULT = _addr(0xD3)
MD_TOKEN = _addr(0xD4)
MD_POOL = _addr(0xD5)
MD_USERS = [_addr(0xE1), _addr(0xE2), _addr(0xE3)]
MD_AMOUNTS = [250 * E, 150 * E, 200 * E]
MD_HOLDINGS = 1_000 * E
MD_RESERVE_T = 20_000 * E
MD_RESERVE_E = 100 * E


def mass_deposit_scenario() -> ScenarioBundle:
    """Anyone may call massDeposit and name the vault that collects the deposits."""
    token_storage = {
        C.balance_slot(MD_DEPOSITER): MD_HOLDINGS,
        C.balance_slot(MD_POOL): MD_RESERVE_T,
        C.TOKEN_SUPPLY_SLOT: MD_HOLDINGS + MD_RESERVE_T,
    }
    state = _state(
        (MD_SENDER, Account(balance=10 * E)),
        (MD_DEPOSITER, Account(code=C.depositer_code(), storage={0: MD_OWNER})),
        (MD_VAULT, Account(code=C.vault_code(), storage={0: MD_TOKEN})),
        (MD_TOKEN, Account(code=C.erc20_code(), storage=token_storage)),
        (MD_POOL, _pool_account(MD_TOKEN, MD_RESERVE_T, MD_RESERVE_E)),
    )
    fixture = StateFixture(state, amm_pools=[AmmPool(MD_POOL, MD_TOKEN, MD_RESERVE_T, MD_RESERVE_E)],
                           token_layouts={MD_TOKEN: C.TOKEN_BALANCES_SLOT})
    data = C.encode_call("massDeposit(address,address,address[],uint256[])",
                         MD_VAULT, MD_TOKEN, MD_USERS, MD_AMOUNTS)
    tx = _call(MD_SENDER, MD_DEPOSITER, data)
    return ScenarioBundle("mass-deposit", fixture, tx, ADVERSARY, "ape-succeeds",
                          "caller-chosen vault collects the depositer's tokens")


PRICED_SENDER = _addr(0xF0)
PRICED_TOKEN = _addr(0xF1)


def priced_transfer_scenario() -> ScenarioBundle:
    """Plain token transfer valued through the fixed price table."""
    state = _state(
        (PRICED_SENDER, Account(balance=10 * E)),
        (PRICED_TOKEN, Account(code=C.erc20_code(), storage={C.balance_slot(PRICED_SENDER): 1_000})),
    )
    fixture = StateFixture(state, price_table={PRICED_TOKEN: Fraction(2 * E)},
                           token_layouts={PRICED_TOKEN: C.TOKEN_BALANCES_SLOT})
    tx = _call(PRICED_SENDER, PRICED_TOKEN, C.encode_call("transfer(address,uint256)", _addr(0xF2), 10))
    return ScenarioBundle("priced-transfer", fixture, tx, ADVERSARY, "abort",
                          "sender gives tokens away; nothing to imitate")


AIRDROP_SENDER = _addr(0xA1)
AIRDROP = _addr(0xA2)


def airdrop_scenario() -> ScenarioBundle:
    """The payee is a calldata argument, so nothing the sender controls implicitly matters."""
    state = _state(
        (AIRDROP_SENDER, Account(balance=10 * E)),
        (AIRDROP, Account(balance=2 * E, code=C.airdrop_code())),
    )
    tx = _call(AIRDROP_SENDER, AIRDROP, C.encode_call("claim(address)", AIRDROP_SENDER))
    return ScenarioBundle("calldata-airdrop", StateFixture(state), tx, ADVERSARY, "naive-succeeds",
                          "no sender-derived value reaches a branch; imitation is a plain copy")


BUILDERS = {
    "guard": guard_scenario,
    "hardcoded-pair": pair_scenario,
    "tiny-claimer": tiny_claimer_scenario,
    "mint-and-swap": mint_scenario,
    "ecdsa-vault": ecdsa_scenario,
    "mass-deposit": mass_deposit_scenario,
    "priced-transfer": priced_transfer_scenario,
    "calldata-airdrop": airdrop_scenario,
}


POOL_SIZE = 20
POOL_VICTIM_PRICE = 90 * GWEI
POOL_BLOCK_GAS_LIMIT = 500_000


def synthetic_pool() -> tuple[StateFixture, list[Transaction], int]:
    """Twenty pending transactions around the guard victim: plain transfers, one sender with two
    nonces priced in reverse, one nonce gap, and a gas limit that cannot fit them all.

    Returns the fixture, the pool in arrival order and the block gas limit.
    """
    guard = guard_scenario()
    state = guard.fixture.state.copy()
    pending: list[Transaction] = []
    prices = [100, 80, 75, 70, 65, 60, 55, 50, 45, 40, 35, 30, 25, 20, 15, 10]
    for i, price in enumerate(prices):
        sender, recipient = _addr(0x300 + i), _addr(0x400 + i)
        state.account(sender).balance = 1 * E
        pending.append(Transaction(sender, recipient, 10**15 * (i + 1), b"", 21_000, price * GWEI, 0))
    twice = _addr(0x3F0)
    state.account(twice).balance = 1 * E
    pending.append(Transaction(twice, _addr(0x4F0), 1, b"", 21_000, 95 * GWEI, 1))
    pending.append(Transaction(twice, _addr(0x4F0), 1, b"", 21_000, 2 * GWEI, 0))
    gap = _addr(0x3F1)
    state.account(gap).balance = 1 * E
    pending.append(Transaction(gap, _addr(0x4F1), 1, b"", 21_000, 99 * GWEI, 3))
    pending.append(guard.victim_tx.replace(gas_price=POOL_VICTIM_PRICE))
    # deterministic shuffle so arrival order differs from price order
    pending = pending[7::3] + pending[8::3] + pending[6::3] + pending[:6]
    assert len(pending) == POOL_SIZE
    return StateFixture(state), pending, POOL_BLOCK_GAS_LIMIT


def build_all() -> dict[str, ScenarioBundle]:
    return {name: build() for name, build in BUILDERS.items()}


def data_dir() -> Path:
    return Path(str(resources.files(__package__) / "data"))


def shipped(name: str) -> ScenarioBundle:
    return load_scenario(data_dir() / f"{name}.json")


def write_all(directory: str | Path | None = None) -> list[Path]:
    out = Path(directory) if directory else data_dir()
    out.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, bundle in build_all().items():
        path = out / f"{name}.json"
        save_scenario(bundle, path)
        paths.append(path)
    fixture, pending, limit = synthetic_pool()
    (out / "mempool").mkdir(exist_ok=True)
    save_fixture(fixture, out / "mempool" / "state.json")
    (out / "mempool" / "pool.json").write_text(dumps(pool_to_json(pending, limit, ADVERSARY)))
    paths += [out / "mempool" / "state.json", out / "mempool" / "pool.json"]
    return paths


if __name__ == "__main__":
    for p in write_all(sys.argv[1] if len(sys.argv) > 1 else None):
        print(p)
