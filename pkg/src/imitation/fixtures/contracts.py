"""Reference contracts used by the shipped scenarios, written in the package assembler.

Storage conventions follow the usual Solidity layout so token balances can be read
straight out of storage:

* ERC20: slot 0 ``balances``, slot 1 ``allowances``, slot 2 ``totalSupply``
* pool: slot 0 token, slot 1 token reserve, slot 2 native reserve
* bounty: slot 0 claimed flag, slot 1 payout
* vault: slot 0 token, slot 1 owner, slot 2 ``deposits``
* depositer: slot 0 owner
"""

from __future__ import annotations

from ..evm.asm import assemble
from ..evm.hashing import keccak_int, selector

TOKEN_BALANCES_SLOT = 0
TOKEN_ALLOWANCES_SLOT = 1
TOKEN_SUPPLY_SLOT = 2

# mapping(address => uint) at `slot`: keccak(key . slot)
_MAP = "PUSH 0 MSTORE PUSH {slot} PUSH 32 MSTORE PUSH 64 PUSH 0 KECCAK256"
BALSLOT = _MAP.format(slot=TOKEN_BALANCES_SLOT)
# [owner, spender] -> allowance slot, keccak(spender . keccak(owner . 1))
ALLOWSLOT = (
    "SWAP1 PUSH 0 MSTORE PUSH 1 PUSH 32 MSTORE PUSH 64 PUSH 0 KECCAK256 "
    "PUSH 32 MSTORE PUSH 0 MSTORE PUSH 64 PUSH 0 KECCAK256"
)
RETURN_TRUE = "PUSH 1 PUSH 0 MSTORE PUSH 32 PUSH 0 RETURN"
REVERT = "PUSH 0 DUP1 REVERT"
SELECTOR = "PUSH 0 CALLDATALOAD PUSH 0xe0 SHR"


def encode_call(signature: str, *args) -> bytes:
    """ABI-encode a call whose arguments are words or lists of words."""
    head, tail = [], []
    offset = 32 * len(args)
    for a in args:
        if isinstance(a, (list, tuple)):
            head.append(offset)
            tail.append(len(a))
            tail.extend(a)
            offset += 32 * (len(a) + 1)
        else:
            head.append(a)
    return selector(signature).to_bytes(4, "big") + b"".join(w.to_bytes(32, "big") for w in head + tail)


def mapping_slot(key: int, slot: int) -> int:
    return keccak_int(key.to_bytes(32, "big") + slot.to_bytes(32, "big"))


def balance_slot(holder: int, base: int = TOKEN_BALANCES_SLOT) -> int:
    return mapping_slot(holder, base)


def allowance_slot(owner: int, spender: int) -> int:
    return mapping_slot(spender, mapping_slot(owner, TOKEN_ALLOWANCES_SLOT))


def _dispatch(*entries: tuple[str, str]) -> str:
    lines = [SELECTOR]
    for sig, label in entries:
        lines.append(f"DUP1 SEL:{sig} EQ @{label} JUMPI")
    lines.append(f"nomatch: {REVERT}")
    return "\n".join(lines)


def erc20_source(mintable: bool = False) -> str:
    entries = [
        ("balanceOf(address)", "balanceOf"),
        ("transfer(address,uint256)", "transfer"),
        ("transferFrom(address,address,uint256)", "transferFrom"),
        ("approve(address,uint256)", "approve"),
        ("allowance(address,address)", "allowance"),
        ("totalSupply()", "totalSupply"),
    ]
    if mintable:
        entries.append(("increaseAllowance(address,uint256)", "increaseAllowance"))
    src = _dispatch(*entries) + f"""
balanceOf:
    PUSH 4 CALLDATALOAD {BALSLOT} SLOAD PUSH 0 MSTORE PUSH 32 PUSH 0 RETURN
allowance:
    PUSH 4 CALLDATALOAD PUSH 36 CALLDATALOAD {ALLOWSLOT} SLOAD PUSH 0 MSTORE PUSH 32 PUSH 0 RETURN
totalSupply:
    PUSH {TOKEN_SUPPLY_SLOT} SLOAD PUSH 0 MSTORE PUSH 32 PUSH 0 RETURN
transfer:
    PUSH 4 CALLDATALOAD PUSH 36 CALLDATALOAD CALLER        ; [to, amt, from]
    @move JUMP
transferFrom:
    PUSH 4 CALLDATALOAD CALLER {ALLOWSLOT}                 ; [aslot]
    DUP1 SLOAD PUSH 68 CALLDATALOAD                        ; [aslot, a, amt]
    DUP1 DUP3 LT @fail JUMPI
    SWAP1 SUB SWAP1 SSTORE
    PUSH 36 CALLDATALOAD PUSH 68 CALLDATALOAD PUSH 4 CALLDATALOAD
    @move JUMP
approve:
    CALLER PUSH 4 CALLDATALOAD {ALLOWSLOT}
    PUSH 36 CALLDATALOAD SWAP1 SSTORE
    PUSH 36 CALLDATALOAD PUSH 0 MSTORE
    PUSH 4 CALLDATALOAD CALLER TOPIC:Approval(address,address,uint256) PUSH 32 PUSH 0 LOG3
    {RETURN_TRUE}
move:                                                      ; [to, amt, from]
    DUP1 {BALSLOT} SLOAD                                   ; [to, amt, from, bf]
    DUP1 DUP4 GT @fail JUMPI
    DUP3 SWAP1 SUB
    DUP2 {BALSLOT} SSTORE
    DUP3 {BALSLOT}
    DUP1 SLOAD DUP4 ADD
    SWAP1 SSTORE
    DUP2 PUSH 0 MSTORE
    DUP3 DUP2 TOPIC:Transfer(address,address,uint256) PUSH 32 PUSH 0 LOG3
    {RETURN_TRUE}
fail:
    {REVERT}
"""
    if mintable:
        # allowance bump that also mints the added amount to the spender
        src += f"""
increaseAllowance:
    CALLER PUSH 4 CALLDATALOAD {ALLOWSLOT}
    DUP1 SLOAD PUSH 36 CALLDATALOAD ADD
    DUP1 SWAP2 SSTORE
    PUSH 0 MSTORE
    PUSH 4 CALLDATALOAD CALLER TOPIC:Approval(address,address,uint256) PUSH 32 PUSH 0 LOG3
    PUSH 36 CALLDATALOAD PUSH {TOKEN_SUPPLY_SLOT} SLOAD ADD PUSH {TOKEN_SUPPLY_SLOT} SSTORE
    PUSH 4 CALLDATALOAD {BALSLOT} DUP1 SLOAD PUSH 36 CALLDATALOAD ADD SWAP1 SSTORE
    PUSH 36 CALLDATALOAD PUSH 0 MSTORE
    PUSH 4 CALLDATALOAD PUSH 0 TOPIC:Transfer(address,address,uint256) PUSH 32 PUSH 0 LOG3
    {RETURN_TRUE}
"""
    return src


def erc20_code(mintable: bool = False) -> bytes:
    return assemble(erc20_source(mintable))


def amm_pool_code() -> bytes:
    """Constant-product pool: send tokens in first, then call swap(to) to receive native coin."""
    return assemble(_dispatch(("swap(address)", "swap"), ("getReserves()", "reserves")) + f"""
swap:
    SEL:balanceOf(address) PUSH 0xe0 SHL PUSH 0 MSTORE
    ADDRESS PUSH 4 MSTORE
    PUSH 32 PUSH 0 PUSH 36 PUSH 0 PUSH 0 SLOAD GAS STATICCALL
    ISZERO @fail JUMPI
    PUSH 0 MLOAD                                ; [bal]
    DUP1 PUSH 1 SLOAD SWAP1 SUB                 ; [bal, in]
    DUP1 PUSH 997 MUL                           ; [bal, in, in997]
    DUP1 PUSH 2 SLOAD MUL                       ; [bal, in, in997, num]
    SWAP1 PUSH 1 SLOAD PUSH 1000 MUL ADD        ; [bal, in, num, den]
    SWAP1 DIV                                   ; [bal, in, out]
    SWAP2 PUSH 1 SSTORE POP                     ; [out]
    DUP1 PUSH 2 SLOAD SUB PUSH 2 SSTORE
    PUSH 0 PUSH 0 PUSH 0 PUSH 0 DUP5 PUSH 4 CALLDATALOAD GAS CALL
    ISZERO @fail JUMPI
    PUSH 0 MSTORE PUSH 32 PUSH 0 RETURN
reserves:
    PUSH 1 SLOAD PUSH 0 MSTORE PUSH 2 SLOAD PUSH 32 MSTORE PUSH 64 PUSH 0 RETURN
fail:
    {REVERT}
""")


def bounty_code() -> bytes:
    """Pays the stored amount to the first caller, then refuses everyone."""
    return assemble(f"""
    PUSH 0 SLOAD @claimed JUMPI
    PUSH 1 PUSH 0 SSTORE
    PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH 1 SLOAD CALLER GAS CALL
    ISZERO @claimed JUMPI
    STOP
claimed:
    {REVERT}
""")


GUARD_ENTRY = 0xB0C
GUARD_JUMPI = 0xB27
GUARD_TARGET = 0xB2C


def guard_contract_source() -> str:
    # entry block sits at 0xb0c so the guarded JUMPI lands on 0xb27
    return f"""
    CALLVALUE @receive JUMPI
    {SELECTOR} SEL:printMoney() EQ @guard JUMPI
    {REVERT}
receive:
    STOP
.org {GUARD_ENTRY}
guard:
    CALLER PUSH20 AUTH EQ PUSH2 @liquidate JUMPI
    PUSH1 0 DUP1 REVERT
liquidate:
    PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH20 POOL GAS CALL
    ISZERO @fail JUMPI
    PUSH 0 PUSH 0 PUSH 0 PUSH 0 SELFBALANCE CALLER GAS CALL
    ISZERO @fail JUMPI
    STOP
fail:
    {REVERT}
"""


def guard_contract_code(auth: int, pool: int) -> bytes:
    return assemble(guard_contract_source(), {"AUTH": auth, "POOL": pool})


def origin_guarded_code(owner: int, faucet: int) -> bytes:
    return assemble(f"""
    CALLVALUE @receive JUMPI
    ORIGIN PUSH20 OWNER EQ @ok JUMPI
    {REVERT}
receive:
    STOP
ok:
    PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH20 FAUCET GAS CALL
    ISZERO @fail JUMPI
    PUSH 0 PUSH 0 PUSH 0 PUSH 0 SELFBALANCE ORIGIN GAS CALL
    ISZERO @fail JUMPI
    STOP
fail:
    {REVERT}
""", {"OWNER": owner, "FAUCET": faucet})


def forwarding_caller_code(callee: int) -> bytes:
    return assemble(f"""
    PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH20 CALLEE GAS CALL
    ISZERO @fail JUMPI
    STOP
fail:
    {REVERT}
""", {"CALLEE": callee})


def tiny_claimer_code(faucet: int) -> bytes:
    return assemble("PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH 0 PUSH20 FAUCET GAS CALL POP STOP", {"FAUCET": faucet})


def airdrop_code() -> bytes:
    """claim(to): the first claim pays the whole balance to ``to``; slot 0 is the claimed flag."""
    return assemble(_dispatch(("claim(address)", "claim")) + f"""
claim:
    PUSH 0 SLOAD @done JUMPI
    PUSH 1 PUSH 0 SSTORE
    PUSH 0 PUSH 0 PUSH 0 PUSH 0 SELFBALANCE PUSH 4 CALLDATALOAD GAS CALL POP
done:
    STOP
""")


def ecdsa_vault_code() -> bytes:
    """withdraw(hash, v, r, s): pays the caller if the recovered signer is the caller."""
    return assemble(_dispatch(("withdraw(bytes32,uint8,bytes32,bytes32)", "withdraw")) + f"""
withdraw:
    PUSH 0 PUSH 0x80 MSTORE
    PUSH 4 CALLDATALOAD PUSH 0 MSTORE
    PUSH 36 CALLDATALOAD PUSH 32 MSTORE
    PUSH 68 CALLDATALOAD PUSH 64 MSTORE
    PUSH 100 CALLDATALOAD PUSH 96 MSTORE
    PUSH 32 PUSH 0x80 PUSH 128 PUSH 0 PUSH 1 GAS STATICCALL
    ISZERO @fail JUMPI
    PUSH 0x80 MLOAD CALLER EQ ISZERO @done JUMPI
    PUSH 0 PUSH 0 PUSH 0 PUSH 0 SELFBALANCE CALLER GAS CALL POP
done:
    STOP
fail:
    {REVERT}
""")


def depositer_code() -> bytes:
    """massDeposit(vault, token, lst[], amt[]): approve the vault, deposit each entry, hand over ownership."""
    return assemble(_dispatch(("massDeposit(address,address,address[],uint256[])", "massDeposit")) + f"""
massDeposit:
    SEL:approve(address,uint256) PUSH 0xe0 SHL PUSH 0 MSTORE
    PUSH 4 CALLDATALOAD PUSH 4 MSTORE
    PUSH 0 NOT PUSH 36 MSTORE
    PUSH 32 PUSH 0 PUSH 68 PUSH 0 PUSH 0 PUSH 36 CALLDATALOAD GAS CALL
    ISZERO @fail JUMPI
    PUSH 68 CALLDATALOAD PUSH 4 ADD             ; [lp]
    PUSH 100 CALLDATALOAD PUSH 4 ADD            ; [lp, ap]
    DUP1 CALLDATALOAD DUP3 CALLDATALOAD         ; [lp, ap, na, nl]
    DUP2 EQ ISZERO @fail JUMPI                  ; [lp, ap, n]
    PUSH 0                                      ; [lp, ap, n, i]
loop:
    DUP2 DUP2 LT ISZERO @done JUMPI
    SEL:depositOnBehalf(address,uint256) PUSH 0xe0 SHL PUSH 0 MSTORE
    DUP1 PUSH 32 MUL                            ; [lp, ap, n, i, o]
    DUP1 DUP6 ADD PUSH 32 ADD CALLDATALOAD PUSH 4 MSTORE
    DUP4 ADD PUSH 32 ADD CALLDATALOAD PUSH 36 MSTORE
    PUSH 0 PUSH 0 PUSH 68 PUSH 0 PUSH 0 PUSH 4 CALLDATALOAD GAS CALL
    ISZERO @fail JUMPI
    PUSH 1 ADD
    @loop JUMP
done:
    SEL:setOwner(address) PUSH 0xe0 SHL PUSH 0 MSTORE
    PUSH 0 SLOAD PUSH 4 MSTORE
    PUSH 0 PUSH 0 PUSH 36 PUSH 0 PUSH 0 PUSH 4 CALLDATALOAD GAS CALL
    ISZERO @fail JUMPI
    STOP
fail:
    {REVERT}
""")


def vault_code() -> bytes:
    """depositOnBehalf(user, amt) pulls tokens from the caller; setOwner(o) records an owner."""
    return assemble(_dispatch(("depositOnBehalf(address,uint256)", "deposit"), ("setOwner(address)", "setOwner")) + f"""
deposit:
    SEL:transferFrom(address,address,uint256) PUSH 0xe0 SHL PUSH 0 MSTORE
    CALLER PUSH 4 MSTORE
    ADDRESS PUSH 36 MSTORE
    PUSH 36 CALLDATALOAD PUSH 68 MSTORE
    PUSH 32 PUSH 0 PUSH 100 PUSH 0 PUSH 0 PUSH 0 SLOAD GAS CALL
    ISZERO @fail JUMPI
    PUSH 4 CALLDATALOAD {_MAP.format(slot=2)}
    DUP1 SLOAD PUSH 36 CALLDATALOAD ADD SWAP1 SSTORE
    STOP
setOwner:
    PUSH 4 CALLDATALOAD PUSH 1 SSTORE
    STOP
fail:
    {REVERT}
""")
