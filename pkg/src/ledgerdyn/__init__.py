"""Ledger dynamics: an exact ledger state machine and its linear state-space view.

Submodules:

- :mod:`ledgerdyn.ledger`      account states, transactions, blocks, chains
- :mod:`ledgerdyn.lte`         augmented linear dynamics ``x' = A x + B u + mu v``
- :mod:`ledgerdyn.rewards`     issuance schedules and exact reward allocation
- :mod:`ledgerdyn.consensus`   gossip network with work-based fork choice
- :mod:`ledgerdyn.valueprops`  value functions and invariant / monotone / contraction checks
- :mod:`ledgerdyn.cli`         scenario runner
"""
from .kernels import BACKEND
from .ledger import (
    Block,
    Chain,
    InvalidBlock,
    LedgerState,
    Transaction,
    TransactionBlock,
    apply_block,
    replay_chain,
)
from .rewards import BITCOIN, COIN, DistributionVector, HalvingSchedule, RewardEvent, allocate, mu, total_supply_limit
from .lte import ExpansionStep, InputVector, materialize_dense, step
from .consensus import NetworkTopology, psi, resolve, step_round
from .valueprops import ContractSpec, MethodSpec, State, ValueFunctionSpec, check

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "BITCOIN", "COIN", "Block", "Chain", "ContractSpec", "DistributionVector", "ExpansionStep",
    "HalvingSchedule", "InputVector", "InvalidBlock", "LedgerState", "MethodSpec", "NetworkTopology",
    "RewardEvent", "State", "Transaction", "TransactionBlock", "ValueFunctionSpec", "allocate", "apply_block",
    "check", "materialize_dense", "mu", "psi", "replay_chain", "resolve", "step", "step_round",
    "total_supply_limit",
]
