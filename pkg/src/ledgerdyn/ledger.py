"""Ledger state machine: accounts, transactions, blocks, chains and replay.

Balances are exact integers in base units. Transactions inside a block are
validated by sequential replay against a working state, so a later send may
spend funds received earlier in the same block but never funds received later.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from types import MappingProxyType
from typing import Any, Iterable, Mapping

import numpy as np

from . import codec
from .rewards import DistributionVector, RewardEvent, RewardSchedule
from .valueprops import ContractSpec, IllegalAction, SandboxViolation, State

AccountId = str


class LedgerError(Exception):
    pass


class TransactionViolation(LedgerError):
    pass


class InsufficientBalance(TransactionViolation):
    pass


class UnknownAccount(TransactionViolation):
    pass


class IllegalMethod(TransactionViolation):
    pass


class InvalidBlock(LedgerError):
    def __init__(self, height: int, reason: str, tx_index: int | None = None):
        where = f"block {height}" + (f", tx {tx_index}" if tx_index is not None else "")
        super().__init__(f"{where}: {reason}")
        self.height = height
        self.tx_index = tx_index
        self.reason = reason


class BrokenLink(LedgerError):
    def __init__(self, height: int):
        super().__init__(f"block {height}: parent link does not match the digest of block {height - 1}")
        self.height = height


@dataclass(frozen=True)
class AccountState:
    balance: int = 0
    contract_vars: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "contract_vars", MappingProxyType(dict(self.contract_vars)))

    def __eq__(self, other):
        if not isinstance(other, AccountState):
            return NotImplemented
        return self.balance == other.balance and dict(self.contract_vars) == dict(other.contract_vars)

    __hash__ = None


@dataclass(frozen=True)
class StateDelta:
    account: AccountId
    delta: int
    var_deltas: Mapping[str, Any] | None = None  # contract id -> new value of z_a


@dataclass(frozen=True)
class Transfer:
    sender: AccountId
    receiver: AccountId
    amount: int

    def __post_init__(self):
        if self.sender == self.receiver:
            raise ValueError("self-transfers are not actions")
        if self.amount < 0:
            raise ValueError("amounts are non-negative; send the reverse edge instead")


@dataclass(frozen=True)
class MethodCall:
    contract: str
    method: str
    action: Any


@dataclass(frozen=True)
class Transaction:
    initiator: AccountId
    deltas: tuple[StateDelta, ...]
    action_ref: Transfer | MethodCall

    def __post_init__(self):
        object.__setattr__(self, "deltas", tuple(self.deltas))

    @classmethod
    def transfer(cls, sender: AccountId, receiver: AccountId, amount: int) -> "Transaction":
        t = Transfer(sender, receiver, int(amount))
        return cls(sender, (StateDelta(sender, -t.amount), StateDelta(receiver, t.amount)), t)

    @classmethod
    def call(cls, initiator: AccountId, contract: ContractSpec, method: str, action,
             state: "LedgerState") -> "Transaction":
        """Build the transaction a contract method call produces at ``state``."""
        call = MethodCall(contract.id, method, action)
        return cls(initiator, _call_deltas(call, state, {contract.id: contract}), call)


@dataclass(frozen=True)
class TransactionBlock:
    height: int
    txs: tuple[Transaction, ...] = ()
    reward: RewardEvent = field(default_factory=RewardEvent)

    def __post_init__(self):
        object.__setattr__(self, "txs", tuple(self.txs))

    def for_account(self, account: AccountId) -> list[Transaction]:
        """Transactions touching ``account``, in block order."""
        return [tx for tx in self.txs if any(d.account == account for d in tx.deltas)]


@dataclass(frozen=True)
class LedgerState:
    height: int = 0
    accounts: Mapping[AccountId, AccountState] = field(default_factory=dict)

    def __post_init__(self):
        if self.height < 0:
            raise ValueError("height must be >= 0")
        object.__setattr__(self, "accounts", MappingProxyType(dict(self.accounts)))

    def __eq__(self, other):
        if not isinstance(other, LedgerState):
            return NotImplemented
        return self.height == other.height and list(self.accounts.items()) == list(other.accounts.items())

    __hash__ = None

    @classmethod
    def from_balances(cls, balances: Mapping[AccountId, int], height: int = 0) -> "LedgerState":
        return cls(height, {a: AccountState(int(b)) for a, b in balances.items()})

    def balance(self, account: AccountId) -> int:
        acct = self.accounts.get(account)
        return 0 if acct is None else acct.balance

    @property
    def ids(self) -> tuple[AccountId, ...]:
        return tuple(self.accounts)

    @property
    def n_accounts(self) -> int:
        return len(self.accounts)

    def total(self) -> int:
        """The supply output y = sum of balances."""
        return sum(a.balance for a in self.accounts.values())

    def balances(self) -> dict[AccountId, int]:
        return {a: s.balance for a, s in self.accounts.items()}

    def balance_vector(self) -> np.ndarray:
        return np.fromiter((a.balance for a in self.accounts.values()), dtype=np.int64, count=len(self.accounts))

    def to_state(self, contracts: Mapping[str, ContractSpec] | None = None) -> State:
        """View for contract methods and value functions: balances and z by account index."""
        ids = self.ids
        zvars = {}
        for cid, c in (contracts or {}).items():
            present = [self.accounts[a].contract_vars.get(cid) for a in ids]
            if c.var_init is None and all(v is None for v in present):
                continue
            zvars[cid] = tuple(c.var_init(i) if v is None else v for i, v in enumerate(present))
        return State(tuple(self.accounts[a].balance for a in ids), zvars, self.height)


# ---------------------------------------------------------------- validation


def _call_deltas(call: MethodCall, state: LedgerState, contracts: Mapping[str, ContractSpec]) -> tuple[StateDelta, ...]:
    contract = contracts.get(call.contract)
    if contract is None:
        raise IllegalMethod(f"contract {call.contract!r} is not registered")
    view = state.to_state(contracts)
    try:
        after = contract.apply(call.method, call.action, view)
    except (IllegalAction, KeyError) as exc:
        raise IllegalMethod(str(exc)) from exc
    except SandboxViolation as exc:
        raise IllegalMethod(f"sandbox: {exc}") from exc
    if after.n != view.n:
        raise IllegalMethod(f"{call.contract}.{call.method} changed the number of accounts")
    deltas = []
    before_z = view.var(contract.id)
    after_z = after.var(contract.id)
    for i, a in enumerate(state.ids):
        d = after.balances[i] - view.balances[i]
        zchange = None
        if after_z and (not before_z or before_z[i] != after_z[i]):
            zchange = {contract.id: after_z[i]}
        if d or zchange:
            deltas.append(StateDelta(a, d, zchange))
    return tuple(deltas)


def _expected_deltas(tx: Transaction, state: LedgerState, contracts) -> tuple[StateDelta, ...]:
    ref = tx.action_ref
    if isinstance(ref, Transfer):
        if tx.initiator != ref.sender:
            raise IllegalMethod("transfer initiator must be the sender")
        return (StateDelta(ref.sender, -ref.amount), StateDelta(ref.receiver, ref.amount))
    if isinstance(ref, MethodCall):
        return _call_deltas(ref, state, contracts)
    raise IllegalMethod(f"unsupported action {ref!r}")


def _apply_tx(tx: Transaction, working: dict, height: int, contracts) -> None:
    """Validate ``tx`` against ``working`` (account -> AccountState) and apply it in place."""
    if tx.initiator not in working:
        raise UnknownAccount(f"initiator {tx.initiator!r} does not exist")
    ref = tx.action_ref
    if isinstance(ref, Transfer) and ref.amount > working[ref.sender].balance:
        raise InsufficientBalance(
            f"{ref.sender!r} sends {ref.amount} but holds {working[ref.sender].balance}"
        )
    state = LedgerState(height, working) if isinstance(ref, MethodCall) else None
    expected = _expected_deltas(tx, state, contracts or {})
    if tx.deltas != expected:
        raise IllegalMethod("transaction deltas do not match the action that produced them")
    for d in tx.deltas:
        acct = working.get(d.account, AccountState())
        new_balance = acct.balance + d.delta
        if new_balance < 0:
            raise InsufficientBalance(f"{d.account!r} would hold {new_balance}")
        zvars = dict(acct.contract_vars)
        if d.var_deltas:
            unknown = set(d.var_deltas) - set(contracts or {})
            if unknown:
                raise IllegalMethod(f"variables of unregistered contracts {sorted(unknown)}")
            zvars.update(d.var_deltas)
        working[d.account] = AccountState(new_balance, zvars)


def validate_transaction(tx: Transaction, working_state: LedgerState,
                         contracts: Mapping[str, ContractSpec] | None = None) -> None:
    """Raise a :class:`TransactionViolation` if ``tx`` is illegal at ``working_state``."""
    _apply_tx(tx, dict(working_state.accounts), working_state.height, contracts)


def apply_transaction(tx: Transaction, state: LedgerState,
                      contracts: Mapping[str, ContractSpec] | None = None) -> LedgerState:
    working = dict(state.accounts)
    _apply_tx(tx, working, state.height, contracts)
    return LedgerState(state.height, working)


def apply_block(state: LedgerState, block: TransactionBlock, *,
                contracts: Mapping[str, ContractSpec] | None = None,
                schedule: RewardSchedule | None = None) -> LedgerState:
    """x(k) = x(k-1) + dx(k): transactions in order, then the block reward."""
    if block.height != state.height + 1:
        raise InvalidBlock(block.height, f"expected height {state.height + 1}")
    if schedule is not None and block.reward.mu != schedule.mu(block.height):
        raise InvalidBlock(block.height, f"reward {block.reward.mu} != scheduled {schedule.mu(block.height)}")
    working = dict(state.accounts)
    for i, tx in enumerate(block.txs):
        try:
            _apply_tx(tx, working, block.height, contracts)
        except TransactionViolation as exc:
            raise InvalidBlock(block.height, f"{type(exc).__name__}: {exc}", i) from exc
    for account, amount in block.reward.allocations():
        acct = working.get(account, AccountState())
        working[account] = AccountState(acct.balance + amount, acct.contract_vars)
    return LedgerState(block.height, working)


def block_deltas(block: TransactionBlock) -> dict[AccountId, int]:
    """Per-account balance change of a block, summed transaction by transaction (plus reward)."""
    out: dict[AccountId, int] = {}
    for tx in block.txs:
        for d in tx.deltas:
            out[d.account] = out.get(d.account, 0) + d.delta
    for account, amount in block.reward.allocations():
        out[account] = out.get(account, 0) + amount
    return out


# ---------------------------------------------------------------- blocks and chains


@dataclass(frozen=True)
class Block:
    state: LedgerState
    txs: TransactionBlock
    parent_link: bytes = codec.NULL_DIGEST
    work: float = 0.0

    @property
    def height(self) -> int:
        return self.txs.height

    @cached_property
    def digest(self) -> bytes:
        return codec.block_digest(self)


def block_digest(block: Block) -> bytes:
    return block.digest


def genesis_block(balances: Mapping[AccountId, int] | None = None) -> Block:
    """Height-0 block carrying the initial condition x(0) (empty by default)."""
    state = LedgerState.from_balances(balances or {})
    if any(b < 0 for b in state.balances().values()):
        raise ValueError("genesis balances must be non-negative")
    return Block(state, TransactionBlock(0), codec.NULL_DIGEST, 0.0)


def build_block(parent: Block, txs: Iterable[Transaction], reward: RewardEvent | None = None, *,
                work: float = 1.0, contracts=None, schedule: RewardSchedule | None = None) -> Block:
    """Apply ``txs`` on top of ``parent`` and seal the result (raises on any violation)."""
    tblock = TransactionBlock(parent.height + 1, tuple(txs), reward or RewardEvent())
    state = apply_block(parent.state, tblock, contracts=contracts, schedule=schedule)
    return Block(state, tblock, parent.digest, float(work))


@dataclass(frozen=True)
class Chain:
    blocks: tuple[Block, ...]
    schedule: RewardSchedule | None = None
    contracts: Mapping[str, ContractSpec] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(self.blocks))
        if not self.blocks:
            raise ValueError("a chain needs at least its genesis block")

    @classmethod
    def from_genesis(cls, balances: Mapping[AccountId, int] | None = None, **kw) -> "Chain":
        return cls((genesis_block(balances),), **kw)

    @property
    def genesis(self) -> Block:
        return self.blocks[0]

    @property
    def head(self) -> Block:
        return self.blocks[-1]

    @property
    def height(self) -> int:
        return len(self.blocks) - 1

    def extend(self, block: Block) -> "Chain":
        return Chain(self.blocks + (block,), self.schedule, self.contracts)

    def mine(self, txs: Iterable[Transaction] = (), reward: RewardEvent | None = None,
             work: float = 1.0) -> "Chain":
        """Append a new valid block; raises if any transaction or the reward is illegal."""
        block = build_block(self.head, txs, reward, work=work, contracts=self.contracts, schedule=self.schedule)
        return self.extend(block)

    def mine_to(self, miner: AccountId, txs: Iterable[Transaction] = (), work: float = 1.0) -> "Chain":
        """Like :meth:`mine` with the scheduled reward paid entirely to ``miner``."""
        mu = self.schedule.mu(self.height + 1) if self.schedule is not None else 0
        return self.mine(txs, reward_to(miner, mu), work)

    def __eq__(self, other):
        if not isinstance(other, Chain):
            return NotImplemented
        return len(self.blocks) == len(other.blocks) and self.head.digest == other.head.digest

    def __hash__(self):
        return hash(self.head.digest)


def reward_to(account: AccountId, mu: int = 0) -> RewardEvent:
    return RewardEvent(mu, DistributionVector.sole(account))


def check_block(parent: Block, block: Block, *, contracts=None, schedule=None) -> None:
    """Raise if ``block`` is not a valid child of ``parent``."""
    k = block.height
    if block.parent_link != parent.digest:
        raise BrokenLink(k)
    if not (block.work >= 0 and block.work < float("inf")):
        raise InvalidBlock(k, f"work must be finite and >= 0, got {block.work}")
    expected = apply_block(parent.state, block.txs, contracts=contracts, schedule=schedule)
    if expected != block.state:
        raise InvalidBlock(k, "stored state differs from parent state with transactions applied")


def check_genesis(block: Block) -> None:
    if block.height != 0 or block.parent_link != codec.NULL_DIGEST:
        raise InvalidBlock(block.height, "genesis must have height 0 and a null parent link")
    if block.txs.txs or block.txs.reward.mu:
        raise InvalidBlock(0, "genesis carries no transactions or reward")
    if block.state.height != 0 or any(b < 0 for b in block.state.balances().values()):
        raise InvalidBlock(0, "genesis state must be at height 0 with non-negative balances")


def replay_chain(chain: Chain) -> LedgerState:
    """x(K) = x(0) + sum of dx(k): re-derive every state from genesis and check every link."""
    check_genesis(chain.genesis)
    state = chain.genesis.state
    prev = chain.genesis
    for k, block in enumerate(chain.blocks[1:], start=1):
        if block.height != k:
            raise InvalidBlock(block.height, f"expected height {k}")
        if block.parent_link != prev.digest:
            raise BrokenLink(k)
        if not (block.work >= 0 and block.work < float("inf")):
            raise InvalidBlock(k, f"work must be finite and >= 0, got {block.work}")
        state = apply_block(state, block.txs, contracts=chain.contracts, schedule=chain.schedule)
        if state != block.state:
            raise InvalidBlock(k, "stored state differs from parent state with transactions applied")
        prev = block
    return state
