"""Aggregate statistics over attack outcomes, as JSON and as plain-text tables."""

from __future__ import annotations

import statistics
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .pipeline import STEPS, AttackOutcome

E = 10**18
STEP_LABELS = {"dcfg": "DCFG", "profitability": "Profitability", "taint": "Taint", "patch": "Patch",
               "synthesis": "Synthesis", "validation": "Validation"}


@dataclass(frozen=True)
class Stats:
    count: int = 0
    mean: float = 0.0
    std: float = 0.0
    max: float = 0.0
    min: float = 0.0

    @classmethod
    def of(cls, values: Sequence[float]) -> Stats:
        if not values:
            return cls()
        return cls(len(values), statistics.fmean(values), statistics.pstdev(values), max(values), min(values))

    def to_json(self) -> dict:
        return {"count": self.count, "mean": self.mean, "std": self.std, "max": self.max, "min": self.min}


@dataclass
class Summary:
    total: int = 0
    by_kind: dict[str, int] = field(default_factory=lambda: {"naive": 0, "ape": 0, "abort": 0})
    abort_causes: dict[str, int] = field(default_factory=dict)
    net_profit_e: int = 0
    revenue_e: int = 0
    gas_cost_e: int = 0
    step_timings: dict[str, Stats] = field(default_factory=lambda: {s: Stats() for s in STEPS})
    total_timing: Stats = field(default_factory=Stats)
    size_reduction: Stats = field(default_factory=Stats)

    def to_json(self) -> dict:
        return {
            "total": self.total,
            "byKind": dict(self.by_kind),
            "abortCauses": dict(sorted(self.abort_causes.items())),
            "netProfitE": str(self.net_profit_e),
            "revenueE": str(self.revenue_e),
            "gasCostE": str(self.gas_cost_e),
            "stepTimings": {s: st.to_json() for s, st in self.step_timings.items()},
            "totalTiming": self.total_timing.to_json(),
            "sizeReductionPct": self.size_reduction.to_json(),
        }

    def render(self) -> str:
        lines = [
            f"outcomes: {self.total} (naive {self.by_kind['naive']}, ape {self.by_kind['ape']}, "
            f"abort {self.by_kind['abort']})",
            f"net profit: {ether(self.net_profit_e)} E (revenue {ether(self.revenue_e)} E, "
            f"gas {ether(self.gas_cost_e)} E)",
        ]
        if self.abort_causes:
            lines.append("abort causes: " + ", ".join(f"{c} {n}" for c, n in sorted(self.abort_causes.items())))
        lines += ["", f"{'step':<14}{'mean (s)':>12}{'std':>12}{'max':>12}{'min':>12}"]
        rows = [(STEP_LABELS[s], self.step_timings[s]) for s in STEPS] + [("Total", self.total_timing)]
        for label, st in rows:
            lines.append(f"{label:<14}{st.mean:>12.4f}{st.std:>12.4f}{st.max:>12.4f}{st.min:>12.4f}")
        sr = self.size_reduction
        if sr.count:
            lines += ["", f"size reduction over {sr.count} contracts: mean {sr.mean:.2f}%, std {sr.std:.2f}%, "
                          f"max {sr.max:.2f}%, min {sr.min:.2f}%"]
        return "\n".join(lines) + "\n"


def ether(wei: int) -> str:
    """Exact decimal rendering of a wei amount in E."""
    sign = "-" if wei < 0 else ""
    whole, frac = divmod(abs(wei), E)
    return f"{sign}{whole}.{frac:018d}".rstrip("0").rstrip(".") if frac else f"{sign}{whole}"


def report(outcomes: Iterable[AttackOutcome]) -> Summary:
    outcomes = list(outcomes)
    s = Summary(total=len(outcomes))
    causes: Counter[str] = Counter()
    per_step: dict[str, list[float]] = {step: [] for step in STEPS}
    totals, reductions = [], []
    for o in outcomes:
        s.by_kind[o.kind] = s.by_kind.get(o.kind, 0) + 1
        if o.success:
            s.net_profit_e += o.net_profit_e
            s.revenue_e += o.revenue_e
            s.gas_cost_e += o.gas_cost_e
        else:
            causes[o.abort_cause or "unknown"] += 1
        for step in STEPS:
            if step in o.timings:
                per_step[step].append(o.timings[step])
        if o.timings:
            totals.append(sum(o.timings.values()))
        reductions += [float(Fraction(d.size_reduction_pct)) for d in o.deployments]
    s.abort_causes = dict(causes)
    s.step_timings = {step: Stats.of(v) for step, v in per_step.items()}
    s.total_timing = Stats.of(totals)
    s.size_reduction = Stats.of(reductions)
    return s
