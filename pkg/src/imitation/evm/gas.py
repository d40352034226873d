from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from .opcodes import OPCODES


@dataclass(frozen=True)
class GasSchedule:
    static: tuple[int, ...]  # indexed by opcode byte
    memory_word: int
    memory_quad_divisor: int
    copy_word: int
    keccak_word: int
    exp_byte: int
    log_data_byte: int
    sstore_set: int
    sstore_reset: int
    call_value: int
    call_new_account: int
    call_stipend: int
    selfdestruct_new_account: int
    code_deposit_byte: int
    tx_base: int
    tx_create: int
    tx_data_zero: int
    tx_data_nonzero: int

    @classmethod
    def from_mapping(cls, table: dict) -> GasSchedule:
        per_op = {k.upper(): int(v) for k, v in table.get("opcodes", {}).items()}
        unlisted = int(table.get("defaults", {}).get("unlisted", 3))
        names = {info.name for info in OPCODES.values()}
        unknown = set(per_op) - names
        if unknown:
            raise ValueError(f"gas table names unknown opcodes: {sorted(unknown)}")
        static = [unlisted] * 256
        for op, info in OPCODES.items():
            if info.name in per_op:
                static[op] = per_op[info.name]
            elif info.name.startswith(("PUSH", "DUP", "SWAP")):
                static[op] = 3
        dyn = {k: int(v) for k, v in table.get("dynamic", {}).items()}
        return cls(static=tuple(static), **dyn)

    def intrinsic(self, data: bytes, is_create: bool) -> int:
        zeros = data.count(0)
        cost = self.tx_base + zeros * self.tx_data_zero + (len(data) - zeros) * self.tx_data_nonzero
        if is_create:
            cost += self.tx_create
        return cost

    def memory_cost(self, words: int) -> int:
        return self.memory_word * words + words * words // self.memory_quad_divisor


def load_gas_table(path: str | Path) -> GasSchedule:
    with open(path, "rb") as fh:
        return GasSchedule.from_mapping(tomllib.load(fh))


@lru_cache(maxsize=1)
def default_schedule() -> GasSchedule:
    text = resources.files("imitation.evm").joinpath("gas_table.toml").read_text()
    return GasSchedule.from_mapping(tomllib.loads(text))
