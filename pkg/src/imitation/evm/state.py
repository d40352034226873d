"""World state, transactions and execution results."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

from .hashing import keccak256

UINT256 = 1 << 256
UINT256_MAX = UINT256 - 1
ADDRESS_MASK = (1 << 160) - 1

Address = int


def to_address(value: int | str | bytes) -> Address:
    if isinstance(value, int):
        return value & ADDRESS_MASK
    if isinstance(value, bytes):
        return int.from_bytes(value[-20:], "big")
    return int(value, 16) & ADDRESS_MASK


def hex_address(addr: Address) -> str:
    return "0x" + addr.to_bytes(20, "big").hex()


def address_bytes(addr: Address) -> bytes:
    return addr.to_bytes(20, "big")


def _rlp_bytes(data: bytes) -> bytes:
    if len(data) == 1 and data[0] < 0x80:
        return data
    if len(data) < 56:
        return bytes([0x80 + len(data)]) + data
    n = len(data).to_bytes((len(data).bit_length() + 7) // 8, "big")
    return bytes([0xB7 + len(n)]) + n + data


def create_address(creator: Address, nonce: int) -> Address:
    """Standard CREATE address: keccak(rlp([creator, nonce]))[12:]."""
    nonce_bytes = nonce.to_bytes((nonce.bit_length() + 7) // 8, "big") if nonce else b""
    payload = _rlp_bytes(address_bytes(creator)) + _rlp_bytes(nonce_bytes)
    return int.from_bytes(keccak256(bytes([0xC0 + len(payload)]) + payload)[12:], "big")


@dataclass
class Account:
    balance: int = 0
    nonce: int = 0
    code: bytes = b""
    storage: dict[int, int] = field(default_factory=dict)

    def copy(self) -> Account:
        return Account(self.balance, self.nonce, self.code, dict(self.storage))


@dataclass(frozen=True)
class BlockContext:
    number: int = 1
    timestamp: int = 1_700_000_000
    coinbase: Address = 0xC0FFEE
    gas_limit: int = 30_000_000
    chain_id: int = 1
    base_gas_price: int = 0


class WorldState:
    """Accounts keyed by integer address plus the block context they are evaluated in."""

    def __init__(self, accounts: dict[Address, Account] | None = None, block: BlockContext | None = None):
        self.accounts: dict[Address, Account] = accounts if accounts is not None else {}
        self.block = block or BlockContext()

    def copy(self) -> WorldState:
        return WorldState({a: acc.copy() for a, acc in self.accounts.items()}, self.block)

    # snapshot/rollback is a full copy; fixture states are small
    def snapshot(self) -> dict[Address, Account]:
        return {a: acc.copy() for a, acc in self.accounts.items()}

    def rollback(self, snap: dict[Address, Account]) -> None:
        self.accounts = {a: acc.copy() for a, acc in snap.items()}

    def account(self, addr: Address) -> Account:
        acc = self.accounts.get(addr)
        if acc is None:
            acc = self.accounts[addr] = Account()
        return acc

    def exists(self, addr: Address) -> bool:
        return addr in self.accounts

    def balance(self, addr: Address) -> int:
        acc = self.accounts.get(addr)
        return acc.balance if acc else 0

    def nonce(self, addr: Address) -> int:
        acc = self.accounts.get(addr)
        return acc.nonce if acc else 0

    def code(self, addr: Address) -> bytes:
        acc = self.accounts.get(addr)
        return acc.code if acc else b""

    def storage_at(self, addr: Address, slot: int) -> int:
        acc = self.accounts.get(addr)
        return acc.storage.get(slot, 0) if acc else 0

    def set_storage(self, addr: Address, slot: int, value: int) -> None:
        acc = self.account(addr)
        if value:
            acc.storage[slot] = value
        else:
            acc.storage.pop(slot, None)

    def total_balance(self) -> int:
        return sum(acc.balance for acc in self.accounts.values())

    def canonical(self) -> dict:
        """Plain, sorted representation used for equality checks and serialization."""
        return {
            "accounts": {
                hex_address(a): {
                    "balance": hex(acc.balance),
                    "nonce": hex(acc.nonce),
                    "code": "0x" + acc.code.hex(),
                    "storage": {f"0x{k:064x}": f"0x{v:064x}" for k, v in sorted(acc.storage.items()) if v},
                }
                for a, acc in sorted(self.accounts.items())
            },
            "block": {k: hex(v) for k, v in vars(self.block).items()},
        }

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WorldState):
            return NotImplemented
        return self.canonical() == other.canonical()

    def __repr__(self) -> str:
        return f"WorldState({len(self.accounts)} accounts, block={self.block.number})"


@dataclass(frozen=True)
class Transaction:
    sender: Address
    to: Address | None
    value: int = 0
    data: bytes = b""
    gas_limit: int = 1_000_000
    gas_price: int = 1
    nonce: int = 0

    def replace(self, **changes) -> Transaction:
        return replace(self, **changes)

    @property
    def is_create(self) -> bool:
        return self.to is None

    def canonical(self) -> dict:
        return {
            "sender": hex_address(self.sender),
            "to": None if self.to is None else hex_address(self.to),
            "value": hex(self.value),
            "data": "0x" + self.data.hex(),
            "gasLimit": hex(self.gas_limit),
            "gasPrice": hex(self.gas_price),
            "nonce": hex(self.nonce),
        }


@dataclass(frozen=True)
class Log:
    address: Address
    topics: tuple[int, ...]
    data: bytes


class Status(str, Enum):
    SUCCESS = "success"
    REVERT = "revert"
    HALT_ERROR = "halt-error"


@dataclass
class ExecutionResult:
    status: Status
    gas_used: int
    return_data: bytes
    logs: list[Log]
    state_after: WorldState
    error: str | None = None
    created: Address | None = None
    gas_price: int = 0

    @property
    def success(self) -> bool:
        return self.status is Status.SUCCESS

    @property
    def fee(self) -> int:
        return self.gas_used * self.gas_price
