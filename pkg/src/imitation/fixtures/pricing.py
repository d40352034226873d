from __future__ import annotations

from .schema import StateFixture


class UnknownAsset(KeyError):
    pass


def amm_quote(amount: int, reserve_token: int, reserve_e: int) -> int:
    """Native coin received for selling ``amount`` tokens into a 0.3%-fee constant-product pool."""
    if amount == 0:
        return 0
    return amount * reserve_e * 997 // (reserve_token * 1000 + amount * 997)


def quote_to_native(asset: int, amount: int, fixture: StateFixture) -> int:
    """Value ``amount`` of ``asset`` in wei: fixed price if listed, else the pool quote."""
    if amount == 0:
        return 0
    price = fixture.price_table.get(asset)
    if price is not None:
        return int(amount * price)
    pool = fixture.pool_for(asset)
    if pool is not None:
        return amm_quote(amount, pool.reserve_token, pool.reserve_e)
    raise UnknownAsset(f"0x{asset:040x}")
