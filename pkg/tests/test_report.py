import json
import math

from imitation.fixtures.scenarios import build_all
from imitation.pipeline import STEPS, AttackOutcome, ape_attack
from imitation.report import Stats, ether, report

E = 10**18


def _ok(net, revenue, gas, timings=None):
    return AttackOutcome(kind="ape", net_profit_e=net, revenue_e=revenue, gas_cost_e=gas, timings=timings or {})


def test_zero_outcomes():
    s = report([])
    assert s.total == 0 and s.net_profit_e == 0 and s.by_kind == {"naive": 0, "ape": 0, "abort": 0}
    assert s.total_timing == Stats() and "outcomes: 0" in s.render()
    json.dumps(s.to_json())


def test_profit_totals_are_exact():
    outs = [_ok(E, E + 10, 10), _ok(2 * E, 2 * E + 5, 5),
            AttackOutcome(kind="abort", abort_cause="unprofitable", net_profit_e=-7)]
    s = report(outs)
    assert s.net_profit_e == 3 * E and s.revenue_e == 3 * E + 15 and s.gas_cost_e == 15
    assert s.by_kind == {"naive": 0, "ape": 2, "abort": 1} and s.abort_causes == {"unprofitable": 1}
    assert s.to_json()["netProfitE"] == str(3 * E)


def test_step_statistics():
    outs = [_ok(1, 1, 0, {s: 1.0 for s in STEPS}), _ok(1, 1, 0, {s: 3.0 for s in STEPS})]
    s = report(outs)
    st = s.step_timings["taint"]
    assert (st.count, st.mean, st.std, st.max, st.min) == (2, 2.0, 1.0, 3.0, 1.0)
    assert s.total_timing.mean == 12.0


def test_render_has_one_row_per_step():
    text = report([ape_attack(b.fixture.state, b.victim_tx, b.adversary, b.fixture)
                   for b in build_all().values()]).render()
    rows = [line.split()[0] for line in text.splitlines() if line and line.split()[0] in
            ("DCFG", "Profitability", "Taint", "Patch", "Synthesis", "Validation", "Total")]
    assert rows == ["DCFG", "Profitability", "Taint", "Patch", "Synthesis", "Validation", "Total"]
    assert "size reduction over" in text


def test_ether_is_exact():
    assert ether(0) == "0" and ether(E) == "1" and ether(-E // 2) == "-0.5"
    assert ether(1) == "0.000000000000000001"
    assert ether(36600587371512481644) == "36.600587371512481644"


def test_stats_of_one_value():
    s = Stats.of([0.5])
    assert s.mean == s.max == s.min == 0.5 and s.std == 0 and not math.isnan(s.std)
