"""Minimal EVM: state model, assembler, interpreter and hook bus."""

from .asm import AsmError, assemble, assemble_with_labels
from .gas import GasSchedule, default_schedule, load_gas_table
from .hashing import event_topic, keccak256, keccak_int, selector
from .hooks import FrameView, Hooks, HookSet, Step, StepRecorder
from .interpreter import (
    AddressCollision,
    Create2Unsupported,
    FrameOutcome,
    InsufficientBalance,
    IntrinsicGasTooLow,
    InvalidNonce,
    OutOfGas,
    TransactionError,
    deploy_contract,
    direct_deploy_gas,
    execute_transaction,
)
from .opcodes import Instruction, disassemble, format_listing, static_block_starts
from .state import (
    Account,
    Address,
    BlockContext,
    ExecutionResult,
    Log,
    Status,
    Transaction,
    WorldState,
    create_address,
    hex_address,
    to_address,
)

__all__ = [
    "Account", "Address", "AddressCollision", "AsmError", "BlockContext", "Create2Unsupported",
    "ExecutionResult", "FrameOutcome", "FrameView", "GasSchedule", "HookSet", "Hooks", "Instruction",
    "InsufficientBalance", "IntrinsicGasTooLow", "InvalidNonce", "Log", "OutOfGas", "Status", "Step",
    "StepRecorder", "Transaction", "TransactionError", "WorldState", "assemble", "assemble_with_labels",
    "create_address", "default_schedule", "deploy_contract", "direct_deploy_gas", "disassemble",
    "event_topic", "execute_transaction", "format_listing", "hex_address", "keccak256", "keccak_int",
    "load_gas_table", "selector", "static_block_starts", "to_address",
]
