"""Which victim contracts must be swapped for synthesized copies, and in what order."""

from __future__ import annotations

from dataclasses import dataclass, field

from .evm.state import hex_address
from .fixtures.schema import StateFixture
from .profit import ProfitReport
from .taint import TaintReport
from .trace import DCFG, Calldata, CallEdge, CodeConstant, StorageSlot

REASONS = ("tainted", "beneficiary", "hardcoded-caller")
ABORT_CAUSES = ("asset-contract", "bi-branch", "misalignment", "unprofitable")


@dataclass
class Replacement:
    victim: int
    reason: str
    caller_edges: list[CallEdge] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"victimAddress": hex_address(self.victim), "reason": self.reason,
                "callerEdges": [{"frameIndex": e.frame_index, "caller": hex_address(e.caller), "pc": e.pc,
                                 "provenance": e.target_provenance.to_json()} for e in self.caller_edges]}


@dataclass(frozen=True)
class CalldataRewrite:
    """Replace the address word at ``offset`` of the imitation's data."""
    offset: int
    victim: int


@dataclass
class PatchPlan:
    replace: list[Replacement] = field(default_factory=list)
    tx_to_redirect: bool = False
    abort: str | None = None
    abort_detail: str = ""
    calldata_rewrites: list[CalldataRewrite] = field(default_factory=list)

    @property
    def victims(self) -> list[int]:
        return [r.victim for r in self.replace]

    @property
    def empty(self) -> bool:
        return not self.replace

    def reason_of(self, victim: int) -> str | None:
        for r in self.replace:
            if r.victim == victim:
                return r.reason
        return None

    def to_json(self) -> dict:
        return {
            "replaceSet": [r.to_json() for r in self.replace],
            "txToRedirect": self.tx_to_redirect,
            "calldataRewrites": [{"offset": c.offset, "victim": hex_address(c.victim)} for c in self.calldata_rewrites],
            "abort": None if self.abort is None else {"cause": self.abort, "detail": self.abort_detail},
        }


def _aborted(cause: str, detail: str) -> PatchPlan:
    return PatchPlan(abort=cause, abort_detail=detail)


def hardcoded_edges(dcfg: DCFG, targets: set[int]) -> list[CallEdge]:
    """Call edges into ``targets`` whose address word came from code or storage."""
    return [e for e in dcfg.call_edges
            if e.kind != "CREATE" and e.callee in targets
            and isinstance(e.target_provenance, (CodeConstant, StorageSlot))]


def close_replace_set(seed: dict[int, str], dcfg: DCFG) -> dict[int, tuple[str, list[CallEdge]]]:
    """Grow ``seed`` until every hard-coded caller of a member is itself a member."""
    members: dict[int, tuple[str, list[CallEdge]]] = {a: (r, []) for a, r in seed.items()}
    changed = True
    while changed:
        changed = False
        for e in hardcoded_edges(dcfg, set(members)):
            holder = e.target_provenance.contract
            edges = members[e.callee][1]
            if e not in edges:
                edges.append(e)
            if holder not in members:
                members[holder] = ("hardcoded-caller", [])
                changed = True
    return members


def deploy_order(members: list[int], dcfg: DCFG) -> list[int] | None:
    """Callees before the contracts that embed their address; None on a cycle."""
    deps: dict[int, set[int]] = {m: set() for m in members}
    for e in hardcoded_edges(dcfg, set(members)):
        holder = e.target_provenance.contract
        if holder in deps and holder != e.callee:
            deps[holder].add(e.callee)
    order: list[int] = []
    done: set[int] = set()
    while len(order) < len(members):
        ready = [m for m in members if m not in done and deps[m] <= done]
        if not ready:
            return None
        order.append(ready[0])
        done.add(ready[0])
    return order


def identify_patch_set(taint: TaintReport, profit: ProfitReport, dcfg: DCFG,
                       fixture: StateFixture | None = None) -> PatchPlan:
    if not taint.aligned_ok:
        return _aborted("misalignment", "untainted branch diverged between victim and imitation")
    if not profit.proceed:
        return _aborted("unprofitable", "profitability analysis did not find a beneficiary worth imitating")
    if taint.bi_branch:
        c, pc = sorted(taint.bi_branch)[0]
        return _aborted("bi-branch", f"tainted JUMPI {hex_address(c)}:0x{pc:x} went both ways in the victim run")

    sender = dcfg.tx.sender
    pre = dcfg.pre_state
    seed: dict[int, str] = {}
    executed = set(dcfg.contracts())
    for c in sorted(taint.tainted_contracts, key=_first_seen(dcfg)):
        seed[c] = "tainted"
    for b in sorted(profit.beneficiaries, key=_first_seen(dcfg)):
        # only code-bearing beneficiaries can be swapped; EOAs other than the sender are out of reach
        if b != sender and b not in seed and (pre.code(b) or b in executed):
            seed[b] = "beneficiary"

    members = close_replace_set(seed, dcfg)
    asset = sorted(set(members) & profit.asset_contracts)
    if asset:
        return _aborted("asset-contract", f"{hex_address(asset[0])} emits asset events and cannot be replaced")

    ordered = deploy_order(sorted(members, key=_first_seen(dcfg)), dcfg)
    if ordered is None:
        return _aborted("misalignment", "replaced contracts hard-code each other's addresses")

    plan = PatchPlan(replace=[Replacement(m, members[m][0], members[m][1]) for m in ordered])
    plan.tx_to_redirect = dcfg.tx.to in members
    seen: set[int] = set()
    for e in dcfg.call_edges:
        prov = e.target_provenance
        if e.callee in members and isinstance(prov, Calldata) and prov.offset not in seen:
            seen.add(prov.offset)
            plan.calldata_rewrites.append(CalldataRewrite(prov.offset, e.callee))
    return plan


def _first_seen(dcfg: DCFG):
    order = {c: i for i, c in enumerate(dcfg.contracts())}
    return lambda a: (order.get(a, len(order)), a)
