"""World-state fixtures, scenario bundles and the reference contracts they use."""

from .pricing import UnknownAsset, amm_quote, quote_to_native
from .schema import (
    AmmPool,
    HexError,
    ScenarioBundle,
    SchemaError,
    StateFixture,
    bundle_from_json,
    bundle_to_json,
    dumps,
    fixture_from_json,
    fixture_to_json,
    load_fixture,
    load_scenario,
    load_tx,
    save_fixture,
    save_scenario,
    tx_from_json,
)

__all__ = [
    "AmmPool", "HexError", "ScenarioBundle", "SchemaError", "StateFixture", "UnknownAsset", "amm_quote",
    "bundle_from_json", "bundle_to_json", "dumps", "fixture_from_json", "fixture_to_json", "load_fixture",
    "load_scenario", "load_tx", "quote_to_native", "save_fixture", "save_scenario", "tx_from_json",
]
