"""Seeded random workloads: valid send batches for the LTE and ledger views."""
from __future__ import annotations

import zlib
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import kernels
from .ledger import LedgerState, Transaction, TransactionBlock
from .lte import InputVector
from .rewards import DistributionVector, RewardEvent

POLICIES = ("uniform", "hub", "dormant")


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent generator per named purpose, so adding one consumer never shifts another's draws."""
    return np.random.default_rng([int(seed), zlib.crc32(name.encode())])


@dataclass(frozen=True)
class WorkloadPolicy:
    kind: str = "uniform"
    sends_per_block: int = 5
    new_account_rate: float = 0.0
    dormant_fraction: float = 0.0
    hub: int = 0

    def __post_init__(self):
        if self.kind not in POLICIES:
            raise ValueError(f"unknown policy {self.kind!r}; expected one of {POLICIES}")
        if self.sends_per_block < 0:
            raise ValueError("sends_per_block must be >= 0")
        if not 0 <= self.new_account_rate <= 1 or not 0 <= self.dormant_fraction <= 1:
            raise ValueError("rates must lie in [0, 1]")


def draw_flows(rng: np.random.Generator, x, policy: WorkloadPolicy, n_sends: int | None = None) -> InputVector:
    """Random sends that are valid under strict ordering against balances ``x``.

    Receivers may be fresh accounts (indices ``n, n+1, ...`` in order of first
    appearance) when ``policy.new_account_rate > 0``.
    """
    x = np.asarray(x, dtype=np.int64)
    n = len(x)
    m = policy.sends_per_block if n_sends is None else n_sends
    senders = np.arange(n)
    if policy.kind == "dormant" and n:
        active = n - int(policy.dormant_fraction * n)
        senders = senders[: max(active, 1)]
    if m == 0 or n == 0 or (n < 2 and policy.new_account_rate == 0):
        return InputVector()
    src = rng.choice(senders, size=m)
    if n >= 2:
        dst = (src + rng.integers(1, n, size=m)) % n
    else:
        dst = np.zeros(m, dtype=np.int64)
    if policy.kind == "hub":
        hub = policy.hub % n
        dst = np.where(src != hub, hub, dst)
    fresh = rng.random(m) < policy.new_account_rate
    if n < 2:
        fresh[:] = True
    dst = np.where(fresh, n + np.cumsum(fresh) - 1, dst)
    frac = rng.random(m)
    n_total = n + int(fresh.sum())
    amount = kernels.draw_amounts(x, src, dst, frac, n_total)
    return InputVector(src, dst, amount)


def account_names(prefix: str, start: int, count: int) -> list[str]:
    return [f"{prefix}{i}" for i in range(start, start + count)]


def ledger_block(state: LedgerState, u: InputVector, reward: RewardEvent | None = None,
                 *, prefix: str = "a") -> TransactionBlock:
    """Ledger transactions equivalent to an index-based input; fresh indices get new names."""
    ids = list(state.ids)
    n = len(ids)
    extra = 0 if len(u) == 0 else max(0, int(u.dst.max()) + 1 - n)
    ids += _fresh_names(state, prefix, extra)
    txs = tuple(Transaction.transfer(ids[i], ids[j], a) for i, j, a in zip(u.src.tolist(), u.dst.tolist(), u.amount.tolist()))
    r = reward or RewardEvent()
    if r.distribution:
        r = RewardEvent(r.mu, DistributionVector({ids[i]: w for i, w in r.distribution.weights.items()}))
    return TransactionBlock(state.height + 1, txs, r)


def _fresh_names(state: LedgerState, prefix: str, count: int) -> list[str]:
    names = []
    i = state.n_accounts
    while len(names) < count:
        name = f"{prefix}{i}"
        if name not in state.accounts and name not in names:
            names.append(name)
        i += 1
    return names


def index_input(state: LedgerState, block: TransactionBlock) -> tuple[InputVector, RewardEvent, list[str]]:
    """Inverse of :func:`ledger_block` for transfer-only blocks: (u, reward over indices, ids after)."""
    from .ledger import Transfer

    ids = list(state.ids)
    index = {a: i for i, a in enumerate(ids)}

    def idx(a):
        if a not in index:
            index[a] = len(ids)
            ids.append(a)
        return index[a]

    rows = []
    for tx in block.txs:
        t = tx.action_ref
        if not isinstance(t, Transfer):
            raise TypeError("only transfer transactions have an incidence representation")
        rows.append((idx(t.sender), idx(t.receiver), t.amount))
    weights = {idx(a): w for a, w in block.reward.distribution.weights.items()}
    reward = RewardEvent(block.reward.mu, DistributionVector(weights))
    return InputVector.from_actions(rows), reward, ids


def pick_recipient(rng: np.random.Generator, accounts: Sequence) -> DistributionVector:
    return DistributionVector.sole(accounts[int(rng.integers(len(accounts)))])
