"""Asset-flow extraction and the beneficiary / profitability decision for a victim run."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .evm.hashing import event_topic
from .evm.interpreter import execute_transaction
from .evm.state import ExecutionResult, Log, Transaction, WorldState, hex_address
from .fixtures.contracts import balance_slot
from .fixtures.pricing import UnknownAsset, quote_to_native
from .fixtures.schema import StateFixture
from .trace import DCFG

# keccak("Transfer(address,address,uint256)")
TRANSFER_TOPIC = 0xDDF252AD1BE2C89B69C2B068FC378DAA952BA7F163C4A11628F55A4DF523B3EF
APPROVAL_TOPIC = event_topic("Approval(address,address,uint256)")

NATIVE = None  # asset id of the native coin; tokens are identified by contract address
Asset = Optional[int]
ZERO_ADDRESS = 0
_MASK = (1 << 160) - 1


class UnknownAssetLayout(LookupError):
    pass


@dataclass(frozen=True)
class AssetTransfer:
    asset: Asset
    sender: int
    recipient: int
    amount: int

    def to_json(self) -> dict:
        return {"asset": "native" if self.asset is None else hex_address(self.asset),
                "from": hex_address(self.sender), "to": hex_address(self.recipient), "amount": hex(self.amount)}


@dataclass
class ProfitReport:
    per_account_net: dict[int, int]
    beneficiaries: set[int]
    sender: int
    sender_net: int
    decision: str  # proceed | abort
    unpriced_assets: set[int] = field(default_factory=set)
    flows: dict[Asset, dict[int, int]] = field(default_factory=dict)
    transfers: list[AssetTransfer] = field(default_factory=list)
    asset_contracts: set[int] = field(default_factory=set)
    warnings: list[str] = field(default_factory=list)

    @property
    def proceed(self) -> bool:
        return self.decision == "proceed"

    def assets_gained(self, account: int) -> list[Asset]:
        """Assets with a positive net flow into ``account``; tokens first, native last."""
        tokens = sorted(a for a, f in self.flows.items() if a is not None and f.get(account, 0) > 0)
        native = [NATIVE] if self.flows.get(NATIVE, {}).get(account, 0) > 0 else []
        return tokens + native

    def to_json(self) -> dict:
        return {
            "decision": self.decision,
            "sender": hex_address(self.sender),
            "senderNet": str(self.sender_net),
            "beneficiaries": sorted(hex_address(b) for b in self.beneficiaries),
            "perAccountNet": {hex_address(a): str(v) for a, v in sorted(self.per_account_net.items())},
            "unpricedAssets": sorted(hex_address(a) for a in self.unpriced_assets),
            "transfers": [t.to_json() for t in self.transfers],
            "warnings": list(self.warnings),
        }


# ---------------------------------------------------------------- balances

def token_balance(state: WorldState, token: int, holder: int, layouts: dict[int, int]) -> int:
    if token not in layouts:
        raise UnknownAssetLayout(f"no balance layout declared for token {hex_address(token)}")
    return state.storage_at(token, balance_slot(holder, layouts[token]))


def asset_balance(state: WorldState, asset: Asset, holder: int, layouts: dict[int, int] | None = None) -> int:
    if asset is NATIVE:
        return state.balance(holder)
    return token_balance(state, asset, holder, layouts or {})


def balance_delta(state: WorldState, tx: Transaction, account: int, asset: Asset = NATIVE,
                  layouts: dict[int, int] | None = None, gas_table=None) -> int:
    """Balance of ``account`` in ``asset`` after ``tx`` minus before."""
    before = asset_balance(state, asset, account, layouts)
    after_state = execute_transaction(state, tx, gas_table=gas_table).state_after
    return asset_balance(after_state, asset, account, layouts) - before


# ---------------------------------------------------------------- extraction

def token_transfers(logs: Iterable[Log]) -> list[AssetTransfer]:
    out = []
    for log in logs:
        if len(log.topics) == 3 and log.topics[0] == TRANSFER_TOPIC and len(log.data) == 32:
            out.append(AssetTransfer(log.address, log.topics[1] & _MASK, log.topics[2] & _MASK,
                                     int.from_bytes(log.data, "big")))
    return out


def native_transfers(dcfg: DCFG) -> list[AssetTransfer]:
    """Value moved by the transaction itself and by every call that took effect."""
    out = []
    tx = dcfg.tx
    if tx.value and dcfg.frames:
        out.append(AssetTransfer(NATIVE, tx.sender, dcfg.frames[0].address, tx.value))
    for e in dcfg.call_edges:
        if not e.value or e.kind in ("DELEGATECALL", "STATICCALL", "CALLCODE") or e.callee_frame is None:
            continue
        if dcfg.frame_succeeded(e.callee_frame):
            out.append(AssetTransfer(NATIVE, e.caller, dcfg.frames[e.callee_frame].address, e.value))
    return out


def net_flows(transfers: Iterable[AssetTransfer]) -> dict[Asset, dict[int, int]]:
    flows: dict[Asset, dict[int, int]] = defaultdict(lambda: defaultdict(int))
    for t in transfers:
        flows[t.asset][t.sender] -= t.amount
        flows[t.asset][t.recipient] += t.amount
    return {a: {k: v for k, v in f.items() if v} for a, f in flows.items()}


def _state_native_net(dcfg: DCFG, result: ExecutionResult) -> dict[int, int]:
    before, after = dcfg.pre_state, result.state_after
    out = {}
    for a in set(before.accounts) | set(after.accounts):
        d = after.balance(a) - before.balance(a)
        if a == dcfg.tx.sender:
            d += result.fee
        if a == after.block.coinbase:
            d -= result.fee
        if d:
            out[a] = d
    return out


def _storage_token_net(token: int, holders: Iterable[int], dcfg: DCFG, result: ExecutionResult,
                       layouts: dict[int, int]) -> dict[int, int]:
    out = {}
    for h in holders:
        d = token_balance(result.state_after, token, h, layouts) - token_balance(dcfg.pre_state, token, h, layouts)
        if d:
            out[h] = d
    return out


# ---------------------------------------------------------------- valuation / decision

def value_in_native(asset: Asset, amount: int, fixture: StateFixture) -> int:
    """Signed valuation; outflows are valued as the negated quote of their magnitude."""
    if asset is NATIVE or amount == 0:
        return amount
    sign = 1 if amount > 0 else -1
    return sign * quote_to_native(asset, abs(amount), fixture)


def assess(flows: dict[Asset, dict[int, int]], sender: int, fixture: StateFixture) -> ProfitReport:
    """Beneficiaries and the proceed/abort decision from per-asset net flows."""
    per_account: dict[int, int] = defaultdict(int)
    unpriced: set[int] = set()
    for asset in sorted(flows, key=lambda a: -1 if a is None else a):
        for account, amount in flows[asset].items():
            try:
                per_account[account] += value_in_native(asset, amount, fixture)
            except UnknownAsset:
                unpriced.add(asset)
                per_account[account] += 0
    per_account = dict(per_account)
    beneficiaries = {a for a, v in per_account.items() if v > 0 and a != ZERO_ADDRESS}
    sender_net = per_account.get(sender, 0)
    others = sum(per_account[b] for b in beneficiaries if b != sender)
    proceed = sender in beneficiaries or others + sender_net > 0
    return ProfitReport(per_account, beneficiaries, sender, sender_net, "proceed" if proceed else "abort",
                        unpriced, flows)


def analyze_profitability(dcfg: DCFG, result: ExecutionResult, fixture: StateFixture) -> ProfitReport:
    transfers = native_transfers(dcfg) + token_transfers(result.logs)
    flows = net_flows(transfers)
    warnings = []

    # native: the state diff is exact, the edge list misses SELFDESTRUCT payouts
    exact = _state_native_net(dcfg, result)
    if flows.get(NATIVE, {}) != exact:
        warnings.append("native: call-edge transfers disagree with balance diff; using balance diff")
    if exact:
        flows[NATIVE] = exact
    else:
        flows.pop(NATIVE, None)

    for token in sorted(a for a in flows if a is not None):
        if token not in fixture.token_layouts:
            continue
        by_storage = _storage_token_net(token, set(flows[token]) - {ZERO_ADDRESS}, dcfg, result,
                                        fixture.token_layouts)
        by_log = {k: v for k, v in flows[token].items() if k != ZERO_ADDRESS}
        if by_storage != by_log:
            warnings.append(f"{hex_address(token)}: storage-diff cross-check failed")

    report = assess(flows, dcfg.tx.sender, fixture)
    report.transfers = transfers
    report.asset_contracts = {log.address for log in result.logs
                              if log.topics and log.topics[0] in (TRANSFER_TOPIC, APPROVAL_TOPIC)}
    report.warnings = warnings
    return report
