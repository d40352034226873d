"""``ape`` command line. Every subcommand prints JSON on stdout; exit status 2 means bad input."""

from __future__ import annotations

import argparse
import difflib
import json
import sys
from pathlib import Path

from .evm.opcodes import format_listing
from .evm.state import hex_address
from .fixtures.schema import SchemaError, StateFixture, dumps, load_fixture, load_pool, load_scenario, load_tx
from .mempool import MempoolSim, simulate_mempool
from .patch import identify_patch_set
from .pipeline import ape_attack, naive_imitate, naive_tx
from .profit import analyze_profitability
from .report import report
from .synth import synthesize
from .taint import TraceMisalignment, taint_replay
from .trace import VictimExecutionFailed, build_dcfg


class InputError(Exception):
    pass


def _address(text: str) -> int:
    raw = text[2:] if text.lower().startswith("0x") else text
    try:
        value = bytes.fromhex(raw)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a hex address: {text}") from None
    if len(value) != 20:
        raise argparse.ArgumentTypeError(f"address must be 20 bytes: {text}")
    return int.from_bytes(value, "big")


def _bundle_adversary(path: str) -> int | None:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError):
        return None
    if isinstance(doc, dict) and isinstance(doc.get("adversary"), str):
        return _address(doc["adversary"])
    return None


def _inputs(args) -> tuple[StateFixture, object, int]:
    fixture = load_fixture(args.state)
    tx = load_tx(args.tx or args.state)
    adversary = args.adversary or _bundle_adversary(args.tx or args.state) or _bundle_adversary(args.state)
    if adversary is None:
        raise InputError("--adversary is required unless the input is a scenario bundle")
    return fixture, tx, adversary


def _emit(doc, args) -> None:
    sys.stdout.write(dumps(doc) if args.pretty else json.dumps(doc, sort_keys=True) + "\n")


def _analysis(args):
    fixture, tx, adversary = _inputs(args)
    state = fixture.state
    dcfg, result = build_dcfg(state, tx)
    profit = analyze_profitability(dcfg, result, fixture)
    taint = taint_replay(state, naive_tx(tx, adversary, state.nonce(adversary)), dcfg)
    return fixture, tx, adversary, dcfg, profit, taint


# ---------------------------------------------------------------- subcommands

def cmd_run(args) -> dict:
    fixture, tx, adversary = _inputs(args)
    if args.naive_only:
        return naive_imitate(fixture.state, tx, adversary, fixture).to_json()
    return ape_attack(fixture.state, tx, adversary, fixture).to_json()


def cmd_mempool(args) -> dict:
    fixture = load_fixture(args.state)
    pending, limit, adversary = load_pool(args.pool)
    limit = args.gas_limit if args.gas_limit is not None else limit
    adversary = args.adversary or adversary
    if limit is None:
        raise InputError("--gas-limit is required unless the pool file records one")
    if adversary is None:
        raise InputError("--adversary is required unless the pool file records one")
    sim = MempoolSim(pending, fixture.state, limit, fixture)
    return simulate_mempool(sim, adversary, block_arrival=args.arrival).to_json()


def cmd_trace(args) -> dict:
    fixture, tx, _ = _inputs(args)
    dcfg, _ = build_dcfg(fixture.state, tx)
    return dcfg.to_json()


def cmd_taint(args) -> dict:
    return _analysis(args)[5].to_json()


def cmd_plan(args) -> dict:
    fixture, _, _, dcfg, profit, taint = _analysis(args)
    return {"profit": profit.to_json(), "plan": identify_patch_set(taint, profit, dcfg, fixture).to_json()}


def cmd_synth_dump(args) -> dict:
    fixture, _, adversary, dcfg, profit, taint = _analysis(args)
    plan = identify_patch_set(taint, profit, dcfg, fixture)
    if plan.abort:
        return {"plan": plan.to_json(), "contracts": []}
    out = []
    for sc in synthesize(plan, dcfg, taint, adversary, fixture.state.nonce(adversary), profit):
        old, new = format_listing(sc.victim_code).splitlines(), format_listing(sc.runtime_code).splitlines()
        diff = "\n".join(difflib.unified_diff(old, new, hex_address(sc.victim), hex_address(sc.address), lineterm=""))
        entry = sc.to_json()
        entry["disassemblyDiff"] = diff
        if args.out:
            directory = Path(args.out)
            directory.mkdir(parents=True, exist_ok=True)
            stem = hex_address(sc.victim)
            (directory / f"{stem}.hex").write_text("0x" + sc.runtime_code.hex() + "\n")
            (directory / f"{stem}.diff").write_text(diff + "\n")
        out.append(entry)
    return {"plan": plan.to_json(), "contracts": out}


def cmd_report(args) -> dict:
    directory = Path(args.input)
    if not directory.is_dir():
        raise InputError(f"not a directory: {directory}")
    outcomes, names = [], []
    for path in sorted(directory.glob("*.json")):
        bundle = load_scenario(path)
        outcome = (naive_imitate if args.naive_only else ape_attack)(
            bundle.fixture.state, bundle.victim_tx, bundle.adversary, bundle.fixture)
        outcomes.append(outcome)
        names.append((bundle.name, outcome.kind, outcome.abort_cause))
    summary = report(outcomes)
    doc = summary.to_json()
    doc["scenarios"] = [{"name": n, "kind": k, "abortCause": c} for n, k, c in names]
    if args.text:
        sys.stderr.write(summary.render())
    return doc


# ---------------------------------------------------------------- parser

def _with_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--state", required=True, help="state fixture or scenario bundle (JSON)")
    p.add_argument("--tx", help="victim transaction (JSON); defaults to the bundle given as --state")
    p.add_argument("--adversary", type=_address, help="adversary address; defaults to the bundle's")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ape", description="Imitate profitable transactions on a local fork.")
    parser.add_argument("--pretty", action="store_true", help="indented JSON")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="imitate one transaction")
    _with_inputs(p)
    p.add_argument("--naive-only", action="store_true", help="only try the sender-swap imitation")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("mempool", help="build a block from a pending pool, front-running what can be imitated")
    p.add_argument("--state", required=True)
    p.add_argument("--pool", required=True)
    p.add_argument("--gas-limit", type=int)
    p.add_argument("--adversary", type=_address)
    p.add_argument("--arrival", type=float, default=12.0, help="seconds until the next block (default 12)")
    p.set_defaults(func=cmd_mempool)

    for name, func, text in (("trace", cmd_trace, "dump the dynamic control-flow graph"),
                             ("taint", cmd_taint, "print the taint report"),
                             ("plan", cmd_plan, "print the profitability report and patch plan")):
        p = sub.add_parser(name, help=text)
        _with_inputs(p)
        p.set_defaults(func=func)

    p = sub.add_parser("synth-dump", help="synthesized runtime code and a disassembly diff against the victim")
    _with_inputs(p)
    p.add_argument("--out", help="also write <victim>.hex and <victim>.diff into this directory")
    p.set_defaults(func=cmd_synth_dump)

    p = sub.add_parser("report", help="run every scenario bundle in a directory and summarize")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--naive-only", action="store_true")
    p.add_argument("--text", action="store_true", help="also print the human-readable tables on stderr")
    p.set_defaults(func=cmd_report)
    for action in sub.choices.values():
        action.add_argument("--pretty", action="store_true", default=argparse.SUPPRESS, help="indented JSON")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        doc = args.func(args)
    except (SchemaError, InputError, OSError, VictimExecutionFailed, TraceMisalignment) as exc:
        sys.stderr.write(f"ape: {exc}\n")
        return 2
    _emit(doc, args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
