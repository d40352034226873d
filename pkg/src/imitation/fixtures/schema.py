"""JSON wire format for world-state fixtures and scenario bundles.

Every integer is a ``0x``-prefixed hex string (JSON numbers are accepted on input
for convenience). Addresses are exactly 20 bytes and storage keys/values exactly
32 bytes. See ``docs/fixture-format.md`` for the full layout.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from ..evm.state import Account, BlockContext, Transaction, WorldState, hex_address

EXPECTED_OUTCOMES = ("naive-succeeds", "ape-succeeds", "abort")
_HEX = re.compile(r"0x[0-9a-fA-F]*")


class SchemaError(ValueError):
    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class HexError(SchemaError):
    pass


# ---------------------------------------------------------------- primitives

def _hex_bytes(value: Any, path: str) -> bytes:
    if not isinstance(value, str) or not value.startswith("0x"):
        raise SchemaError(path, f"expected 0x-prefixed hex string, got {value!r}")
    if not _HEX.fullmatch(value) or len(value) % 2:
        raise HexError(path, f"malformed hex {value!r}")
    return bytes.fromhex(value[2:])


def _int(value: Any, path: str) -> int:
    if isinstance(value, bool):
        raise SchemaError(path, "expected integer, got boolean")
    if isinstance(value, int):
        if value < 0:
            raise SchemaError(path, "negative integer")
        return value
    if not isinstance(value, str) or not value.startswith("0x"):
        raise SchemaError(path, f"expected hex integer, got {value!r}")
    if not _HEX.fullmatch(value) or len(value) == 2:
        raise HexError(path, f"malformed hex integer {value!r}")
    return int(value, 16)


def _address(value: Any, path: str) -> int:
    raw = _hex_bytes(value, path)
    if len(raw) != 20:
        raise SchemaError(path, f"address must be 20 bytes, got {len(raw)}")
    return int.from_bytes(raw, "big")


def _word(value: Any, path: str) -> int:
    raw = _hex_bytes(value, path)
    if len(raw) != 32:
        raise SchemaError(path, f"storage word must be 32 bytes, got {len(raw)}")
    return int.from_bytes(raw, "big")


def _obj(value: Any, path: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(path, f"expected object, got {type(value).__name__}")
    return value


def _only(obj: dict, allowed: set[str], path: str) -> None:
    extra = set(obj) - allowed
    if extra:
        raise SchemaError(path, f"unknown field(s) {sorted(extra)}")


def _word_hex(v: int) -> str:
    return f"0x{v:064x}"


# ---------------------------------------------------------------- fixture types

@dataclass(frozen=True)
class AmmPool:
    pool: int
    token: int
    reserve_token: int
    reserve_e: int


@dataclass
class StateFixture:
    state: WorldState
    price_table: dict[int, Fraction] = field(default_factory=dict)
    amm_pools: list[AmmPool] = field(default_factory=list)
    token_layouts: dict[int, int] = field(default_factory=dict)  # token -> balances mapping slot

    def pool_for(self, token: int) -> AmmPool | None:
        for p in self.amm_pools:
            if p.token == token:
                return p
        return None

    def copy(self) -> StateFixture:
        return StateFixture(self.state.copy(), dict(self.price_table), list(self.amm_pools), dict(self.token_layouts))

    def with_state(self, state: WorldState) -> StateFixture:
        return StateFixture(state, self.price_table, self.amm_pools, self.token_layouts)


@dataclass
class ScenarioBundle:
    name: str
    fixture: StateFixture
    victim_tx: Transaction
    adversary: int
    expected_outcome: str
    notes: str = ""


# ---------------------------------------------------------------- decoding

_BLOCK_KEYS = {"number": "number", "timestamp": "timestamp", "coinbase": "coinbase", "gasLimit": "gas_limit",
               "chainId": "chain_id", "baseGasPrice": "base_gas_price"}


def _decode_block(raw: Any, path: str) -> BlockContext:
    obj = _obj(raw, path)
    _only(obj, set(_BLOCK_KEYS), path)
    kw = {}
    for key, attr in _BLOCK_KEYS.items():
        if key in obj:
            p = f"{path}.{key}"
            kw[attr] = _address(obj[key], p) if key == "coinbase" else _int(obj[key], p)
    return BlockContext(**kw)


def _decode_accounts(raw: Any, path: str) -> dict[int, Account]:
    accounts: dict[int, Account] = {}
    for key, acc in _obj(raw, path).items():
        p = f"{path}[{key!r}]"
        addr = _address(key, p)
        acc = _obj(acc, p)
        _only(acc, {"balance", "nonce", "code", "storage"}, p)
        storage = {}
        for sk, sv in _obj(acc.get("storage", {}), f"{p}.storage").items():
            sp = f"{p}.storage[{sk!r}]"
            k, v = _word(sk, sp), _word(sv, sp)
            if v:
                storage[k] = v
        accounts[addr] = Account(
            balance=_int(acc.get("balance", "0x0"), f"{p}.balance"),
            nonce=_int(acc.get("nonce", "0x0"), f"{p}.nonce"),
            code=_hex_bytes(acc.get("code", "0x"), f"{p}.code"),
            storage=storage,
        )
    return accounts


def _decode_price(raw: Any, path: str) -> Fraction:
    if isinstance(raw, dict):
        _only(raw, {"num", "den"}, path)
        num = _int(raw.get("num"), f"{path}.num")
        den = _int(raw.get("den", "0x1"), f"{path}.den")
        if den == 0:
            raise SchemaError(f"{path}.den", "zero denominator")
        return Fraction(num, den)
    return Fraction(_int(raw, path))


def fixture_from_json(doc: Any, path: str = "$") -> StateFixture:
    obj = _obj(doc, path)
    _only(obj, {"accounts", "blockContext", "priceTable", "ammPools", "tokens"}, path)
    if "accounts" not in obj:
        raise SchemaError(f"{path}.accounts", "missing required field")
    if "blockContext" not in obj:
        raise SchemaError(f"{path}.blockContext", "missing required field")
    state = WorldState(_decode_accounts(obj["accounts"], f"{path}.accounts"),
                       _decode_block(obj["blockContext"], f"{path}.blockContext"))
    prices = {}
    for k, v in _obj(obj.get("priceTable", {}), f"{path}.priceTable").items():
        p = f"{path}.priceTable[{k!r}]"
        prices[_address(k, p)] = _decode_price(v, p)
    pools = []
    raw_pools = obj.get("ammPools", [])
    if not isinstance(raw_pools, list):
        raise SchemaError(f"{path}.ammPools", "expected list")
    for i, rp in enumerate(raw_pools):
        p = f"{path}.ammPools[{i}]"
        rp = _obj(rp, p)
        _only(rp, {"poolAddress", "tokenAddress", "reserveToken", "reserveE"}, p)
        for req in ("poolAddress", "tokenAddress", "reserveToken", "reserveE"):
            if req not in rp:
                raise SchemaError(f"{p}.{req}", "missing required field")
        pools.append(AmmPool(_address(rp["poolAddress"], f"{p}.poolAddress"),
                             _address(rp["tokenAddress"], f"{p}.tokenAddress"),
                             _int(rp["reserveToken"], f"{p}.reserveToken"),
                             _int(rp["reserveE"], f"{p}.reserveE")))
    layouts = {}
    for k, v in _obj(obj.get("tokens", {}), f"{path}.tokens").items():
        p = f"{path}.tokens[{k!r}]"
        v = _obj(v, p)
        _only(v, {"balancesSlot"}, p)
        layouts[_address(k, p)] = _int(v.get("balancesSlot", "0x0"), f"{p}.balancesSlot")
    return StateFixture(state, prices, pools, layouts)


def tx_from_json(doc: Any, path: str = "$") -> Transaction:
    obj = _obj(doc, path)
    _only(obj, {"sender", "to", "value", "data", "gasLimit", "gasPrice", "nonce"}, path)
    if "sender" not in obj:
        raise SchemaError(f"{path}.sender", "missing required field")
    to = obj.get("to")
    return Transaction(
        sender=_address(obj["sender"], f"{path}.sender"),
        to=None if to is None else _address(to, f"{path}.to"),
        value=_int(obj.get("value", "0x0"), f"{path}.value"),
        data=_hex_bytes(obj.get("data", "0x"), f"{path}.data"),
        gas_limit=_int(obj.get("gasLimit", hex(1_000_000)), f"{path}.gasLimit"),
        gas_price=_int(obj.get("gasPrice", "0x1"), f"{path}.gasPrice"),
        nonce=_int(obj.get("nonce", "0x0"), f"{path}.nonce"),
    )


# ---------------------------------------------------------------- encoding

def fixture_to_json(fx: StateFixture) -> dict:
    canon = fx.state.canonical()
    accounts = {}
    for a, acc in canon["accounts"].items():
        accounts[a] = acc
    block = fx.state.block
    out: dict[str, Any] = {
        "accounts": accounts,
        "blockContext": {
            "number": hex(block.number), "timestamp": hex(block.timestamp), "coinbase": hex_address(block.coinbase),
            "gasLimit": hex(block.gas_limit), "chainId": hex(block.chain_id), "baseGasPrice": hex(block.base_gas_price),
        },
    }
    if fx.price_table:
        out["priceTable"] = {hex_address(k): {"num": hex(v.numerator), "den": hex(v.denominator)}
                             for k, v in sorted(fx.price_table.items())}
    if fx.amm_pools:
        out["ammPools"] = [{"poolAddress": hex_address(p.pool), "tokenAddress": hex_address(p.token),
                            "reserveToken": hex(p.reserve_token), "reserveE": hex(p.reserve_e)}
                           for p in fx.amm_pools]
    if fx.token_layouts:
        out["tokens"] = {hex_address(k): {"balancesSlot": hex(v)} for k, v in sorted(fx.token_layouts.items())}
    return out


def tx_to_json(tx: Transaction) -> dict:
    return tx.canonical()


def dumps(doc: Any) -> str:
    """Canonical rendering: sorted keys, two-space indent, trailing newline."""
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _read(path: str | Path) -> Any:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError("$", f"invalid JSON: {exc}") from None


def load_fixture(path: str | Path) -> StateFixture:
    doc = _read(path)
    if isinstance(doc, dict) and "state" in doc and "victimTx" in doc:
        doc = doc["state"]
    return fixture_from_json(doc)


def save_fixture(fx: StateFixture, path: str | Path) -> None:
    Path(path).write_text(dumps(fixture_to_json(fx)))


def load_tx(path: str | Path) -> Transaction:
    doc = _read(path)
    if isinstance(doc, dict) and "victimTx" in doc:
        doc = doc["victimTx"]
    return tx_from_json(doc)


def pool_from_json(doc: Any) -> list[Transaction]:
    """A pending pool: a list of transactions, or an object with a ``pending`` list."""
    if isinstance(doc, dict):
        _only(doc, {"pending", "blockGasLimit", "adversary"}, "$")
        doc = doc.get("pending", [])
    if not isinstance(doc, list):
        raise SchemaError("$", "pool must be a list of transactions")
    return [tx_from_json(t, f"$.pending[{i}]") for i, t in enumerate(doc)]


def pool_to_json(pending: list[Transaction], block_gas_limit: int | None = None,
                 adversary: int | None = None) -> dict:
    doc: dict[str, Any] = {"pending": [tx_to_json(t) for t in pending]}
    if block_gas_limit is not None:
        doc["blockGasLimit"] = hex(block_gas_limit)
    if adversary is not None:
        doc["adversary"] = hex_address(adversary)
    return doc


def load_pool(path: str | Path) -> tuple[list[Transaction], int | None, int | None]:
    """Pending transactions plus the optional block gas limit and adversary stored alongside them."""
    doc = _read(path)
    pending = pool_from_json(doc)
    limit = adversary = None
    if isinstance(doc, dict):
        if "blockGasLimit" in doc:
            limit = _int(doc["blockGasLimit"], "$.blockGasLimit")
        if "adversary" in doc:
            adversary = _address(doc["adversary"], "$.adversary")
    return pending, limit, adversary


def bundle_to_json(b: ScenarioBundle) -> dict:
    return {
        "name": b.name,
        "state": fixture_to_json(b.fixture),
        "victimTx": tx_to_json(b.victim_tx),
        "adversary": hex_address(b.adversary),
        "expectedOutcome": b.expected_outcome,
        "notes": b.notes,
    }


def bundle_from_json(doc: Any, check: bool = True) -> ScenarioBundle:
    obj = _obj(doc, "$")
    _only(obj, {"name", "state", "victimTx", "adversary", "expectedOutcome", "notes"}, "$")
    for req in ("state", "victimTx", "adversary", "expectedOutcome"):
        if req not in obj:
            raise SchemaError(f"$.{req}", "missing required field")
    if obj["expectedOutcome"] not in EXPECTED_OUTCOMES:
        raise SchemaError("$.expectedOutcome", f"must be one of {EXPECTED_OUTCOMES}")
    bundle = ScenarioBundle(
        name=str(obj.get("name", "")),
        fixture=fixture_from_json(obj["state"], "$.state"),
        victim_tx=tx_from_json(obj["victimTx"], "$.victimTx"),
        adversary=_address(obj["adversary"], "$.adversary"),
        expected_outcome=obj["expectedOutcome"],
        notes=str(obj.get("notes", "")),
    )
    if check:
        check_well_formed(bundle)
    return bundle


def load_scenario(path: str | Path, check: bool = True) -> ScenarioBundle:
    return bundle_from_json(_read(path), check)


def save_scenario(b: ScenarioBundle, path: str | Path) -> None:
    Path(path).write_text(dumps(bundle_to_json(b)))


def check_well_formed(b: ScenarioBundle) -> None:
    """The victim transaction must succeed on the bundled state."""
    from ..evm.interpreter import TransactionError, execute_transaction

    try:
        res = execute_transaction(b.fixture.state, b.victim_tx)
    except TransactionError as exc:
        raise SchemaError("$.victimTx", f"not executable: {exc}") from None
    if not res.success:
        raise SchemaError("$.victimTx", f"victim transaction does not succeed ({res.status.value})")
