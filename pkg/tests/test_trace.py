import pytest
from hypothesis import given, settings, strategies as st

from imitation.evm import Account, StepRecorder, assemble, execute_transaction
from imitation.evm.opcodes import BY_NAME, JUMP, JUMPDEST, JUMPI, TERMINATORS, disassemble
from imitation.fixtures.scenarios import GUARD_AUTH, build_all, guard_scenario
from imitation.trace import (
    COMPUTED,
    Calldata,
    CodeConstant,
    StorageSlot,
    VictimExecutionFailed,
    build_dcfg,
    replay_pcs,
)

from helpers import CONTRACT, HELPER, OTHER, call, corpus_program, corpus_state, world


def _dcfg(source, data=b"", consts=None, extra=()):
    state = world((CONTRACT, Account(code=assemble(source, consts))), *extra)
    return build_dcfg(state, call(data=data))[0]


def test_straight_line_is_one_block():
    d = _dcfg("PUSH1 1 PUSH1 2 ADD STOP")
    assert len(d.nodes) == 1 and d.edges == [] and d.jumpi_records == []
    assert d.nodes[0].start == 0 and d.nodes[0].end == 5


def test_guard_operator_run_records_the_auth_jumpi():
    b = guard_scenario()
    d, _ = build_dcfg(b.fixture.state, b.victim_tx)
    recs = [(r.pc, r.condition, r.destination) for r in d.jumpi_records if r.contract == b.victim_tx.to]
    assert (0xB27, True, 0xB2C) in recs
    assert d.tx.sender == GUARD_AUTH


def test_push20_call_target_is_a_code_constant():
    target = OTHER + 7
    d = _dcfg("PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH20 T GAS CALL STOP", consts={"T": target})
    (edge,) = d.call_edges
    assert edge.callee == target
    prov = edge.target_provenance
    assert isinstance(prov, CodeConstant) and prov.contract == CONTRACT
    # independent check of the push site
    ins = {i.pc: i for i in disassemble(d.code_of(CONTRACT))}[prov.pc]
    assert ins.name == "PUSH20" and ins.imm == target


def test_provenance_survives_dup_swap_and_masking():
    target = OTHER + 7
    src = ("PUSH20 T DUP1 POP PUSH 1 SWAP1 PUSH 0xffffffffffffffffffffffffffffffffffffffff AND "
           "SWAP1 POP PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH 0 SWAP5 GAS CALL STOP")
    d = _dcfg(src, consts={"T": target})
    assert isinstance(d.call_edges[0].target_provenance, CodeConstant)


def test_arithmetic_on_the_target_is_computed():
    d = _dcfg("PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH20 T PUSH 1 ADD GAS CALL STOP", consts={"T": OTHER})
    assert d.call_edges[0].target_provenance == COMPUTED


def test_storage_and_calldata_provenance():
    target = OTHER + 9
    src = "PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH 3 SLOAD GAS CALL POP " \
          "PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH 4 CALLDATALOAD GAS CALL STOP"
    state = world((CONTRACT, Account(code=assemble(src), storage={3: target})))
    d, _ = build_dcfg(state, call(data=b"\0" * 4 + target.to_bytes(32, "big")))
    assert d.call_edges[0].target_provenance == StorageSlot(CONTRACT, 3)
    assert d.call_edges[1].target_provenance == Calldata(4)


def test_failed_victim_raises():
    with pytest.raises(VictimExecutionFailed):
        _dcfg("PUSH 0 DUP1 REVERT")


def test_call_edges_link_frames():
    d, _ = build_dcfg(*_mass_deposit())
    for e in d.call_edges:
        if e.callee_frame is not None:
            callee = d.frames[e.callee_frame]
            assert callee.parent == e.frame_index and callee.address == e.callee


def _mass_deposit():
    b = build_all()["mass-deposit"]
    return b.fixture.state, b.victim_tx


# ---------------------------------------------------------------- invariants over many runs

def _runs():
    for b in build_all().values():
        yield b.fixture.state, b.victim_tx
    loop = assemble("PUSH 5 top: PUSH 1 SWAP1 SUB DUP1 @top JUMPI POP PUSH 0 @end JUMP PUSH 1 end: STOP")
    yield world((CONTRACT, Account(code=loop))), call()


def _check_invariants(state, tx):
    d, _ = build_dcfg(state, tx)
    rec = StepRecorder()
    execute_transaction(state, tx, hooks=rec)
    assert len(d.nodes) <= d.instruction_count() == len(rec.events)
    by_frame = {}
    for fi, _, pc, _ in rec.events:
        by_frame.setdefault(fi, []).append(pc)
    for f in d.frames:
        # the block sequence alone reconstructs the exact pc trace
        assert replay_pcs(f.code, f.blocks) == f.pcs == by_frame.get(f.index, [])
        starts = {0} | {i.pc for i in disassemble(f.code) if i.op == JUMPDEST}
        after_term = {i.pc + i.size for i in disassemble(f.code) if i.op in TERMINATORS}
        for i, b in enumerate(f.blocks):
            if i == 0:
                assert b.start == 0
            else:
                assert b.start in starts | after_term or f.code[f.blocks[i - 1].end] in (JUMP, JUMPI)
            last = f.code[b.end] if b.end < len(f.code) else 0
            assert last in TERMINATORS or i == len(f.blocks) - 1 or f.blocks[i + 1].start in starts
    # one record per executed JUMPI, in execution order, matching the edges
    n_jumpi = sum(1 for _, _, _, op in rec.events if op == JUMPI)
    assert len(d.jumpi_records) == n_jumpi
    conds = {}
    for r in d.jumpi_records:
        conds.setdefault((r.frame_index, r.pc), set()).add(r.condition)
    for e in d.edges:
        if e.kind.startswith("jumpi"):
            owners = [k for k in conds if k[1] == e.src.end]
            assert any((e.kind == "jumpi-taken") in conds[k] for k in owners)
    executed = {(f.code_address, pc) for f in d.frames for pc in f.pcs}
    for n in d.nodes:
        assert (n.contract, n.start) in executed


@pytest.mark.parametrize("run", list(range(len(list(_runs())))))
def test_dcfg_invariants_on_fixtures(run):
    _check_invariants(*list(_runs())[run])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_dcfg_invariants_on_random_programs(seed):
    state = corpus_state(corpus_program(seed))
    _check_invariants(state, call(data=bytes(64)))


def test_corpus_helper_frames_are_traced():
    src = "PUSH 0 PUSH 0 PUSH 32 PUSH 0 PUSH 0 PUSH20 H GAS CALL STOP"
    state = corpus_state(assemble(src, {"H": HELPER}))
    d, _ = build_dcfg(state, call())
    assert [f.code_address for f in d.frames] == [CONTRACT, HELPER]
    assert BY_NAME["RETURN"] == d.frames[1].ops[-1]
