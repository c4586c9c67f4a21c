"""Block reward schedules, reward distribution vectors and exact integer allocation.

All amounts are integer base units (1 coin = 10**8 base units).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

COIN = 10**8


class EmptyDistribution(ValueError):
    """A positive reward was paired with a distribution that has no support."""


class RewardSchedule:
    """Base class: a non-increasing or arbitrary per-block reward ``mu(k)``, ``k >= 1``.

    Subclasses describe the schedule as piecewise-constant runs of blocks via
    :meth:`segments`; :meth:`cumulative` and :meth:`total_supply` are derived
    from those runs in exact integer arithmetic.
    """

    kind = "abstract"

    def segments(self) -> Iterator[tuple[int, int | None, int]]:
        """Yield ``(first_k, last_k, reward)`` runs in increasing ``k``; ``last_k=None`` is unbounded."""
        raise NotImplementedError

    def mu(self, k: int) -> int:
        if k < 0:
            raise ValueError(f"block height must be >= 0, got {k}")
        if k == 0:
            return 0  # genesis mints nothing
        for first, last, reward in self.segments():
            if k < first:
                break
            if last is None or k <= last:
                return reward
        return 0

    def cumulative(self, K: int) -> int:
        """Exact ``sum(mu(k) for k in 1..K)``."""
        total = 0
        for first, last, reward in self.segments():
            if first > K:
                break
            end = K if last is None else min(last, K)
            total += (end - first + 1) * reward
        return total

    def total_supply(self) -> int:
        """Limit of :meth:`cumulative` as ``K`` grows; raises if the schedule never stops minting."""
        total = 0
        for first, last, reward in self.segments():
            if last is None:
                if reward == 0:
                    break
                raise ValueError(f"{self.kind} schedule mints forever; total supply is unbounded")
            total += (last - first + 1) * reward
        return total


@dataclass(frozen=True)
class HalvingSchedule(RewardSchedule):
    """Reward ``floor(initial_reward / 2**i)`` for every block in interval ``i``.

    Interval ``i`` covers heights ``i*interval_length + 1 .. (i+1)*interval_length``
    for ``i = 0 .. halvings-1``; nothing is minted afterwards. The defaults are
    Bitcoin's: 50 coins, 210,000 blocks, 33 intervals.
    """

    initial_reward: int = 50 * COIN
    interval_length: int = 210_000
    halvings: int = 33
    kind = "halving"

    def __post_init__(self):
        if self.initial_reward < 0 or self.interval_length < 1 or self.halvings < 0:
            raise ValueError("halving schedule needs initial_reward >= 0, interval_length >= 1, halvings >= 0")

    def interval(self, k: int) -> int:
        """Zero-based halving interval containing height ``k >= 1``."""
        return (k - 1) // self.interval_length

    def mu(self, k: int) -> int:
        if k < 0:
            raise ValueError(f"block height must be >= 0, got {k}")
        if k == 0:
            return 0
        i = self.interval(k)
        return self.initial_reward >> i if i < self.halvings else 0

    def segments(self):
        L = self.interval_length
        for i in range(self.halvings):
            yield i * L + 1, (i + 1) * L, self.initial_reward >> i
        yield self.halvings * L + 1, None, 0


@dataclass(frozen=True)
class ConstantSchedule(RewardSchedule):
    reward: int
    stop_after: int | None = None
    kind = "constant"

    def __post_init__(self):
        if self.reward < 0:
            raise ValueError("reward must be >= 0")

    def segments(self):
        if self.stop_after is None:
            yield 1, None, self.reward
        else:
            if self.stop_after >= 1:
                yield 1, self.stop_after, self.reward
            yield max(self.stop_after, 0) + 1, None, 0


@dataclass(frozen=True)
class GeometricSchedule(RewardSchedule):
    """Reward ``floor(initial_reward * ratio**i)`` in interval ``i``; ``ratio`` is an exact rational."""

    initial_reward: int
    ratio: Fraction = Fraction(1, 2)
    interval_length: int = 1
    kind = "geometric"

    def __post_init__(self):
        object.__setattr__(self, "ratio", Fraction(self.ratio))
        if self.initial_reward < 0 or self.interval_length < 1 or self.ratio < 0:
            raise ValueError("geometric schedule needs initial_reward >= 0, interval_length >= 1, ratio >= 0")

    def segments(self):
        L = self.interval_length
        i = 0
        reward = Fraction(self.initial_reward)
        while True:
            r = math.floor(reward)
            if r == 0:
                yield i * L + 1, None, 0
                return
            if self.ratio >= 1:
                # never decays: one unbounded run at the current level
                yield i * L + 1, None, r
                return
            yield i * L + 1, (i + 1) * L, r
            reward *= self.ratio
            i += 1


@dataclass(frozen=True)
class TabulatedSchedule(RewardSchedule):
    """Explicit rewards for heights ``1..len(rewards)``; zero afterwards."""

    rewards: tuple[int, ...]
    kind = "table"

    def __post_init__(self):
        object.__setattr__(self, "rewards", tuple(int(r) for r in self.rewards))
        if any(r < 0 for r in self.rewards):
            raise ValueError("tabulated rewards must be >= 0")

    def segments(self):
        for k, r in enumerate(self.rewards, start=1):
            yield k, k, r
        yield len(self.rewards) + 1, None, 0


BITCOIN = HalvingSchedule()


def mu(k: int, schedule: RewardSchedule = BITCOIN) -> int:
    return schedule.mu(k)


def total_supply_limit(schedule: RewardSchedule = BITCOIN) -> int:
    """Final supply in base units; 2,099,999,997,690,000 for the Bitcoin schedule."""
    return schedule.total_supply()


@dataclass(frozen=True)
class DistributionVector:
    """Exact simplex weights over accounts. Order of ``weights`` is the tie-break order."""

    weights: Mapping[Hashable, Fraction] = field(default_factory=dict)

    def __post_init__(self):
        w = {}
        for account, value in dict(self.weights).items():
            q = Fraction(value)
            if q < 0:
                raise ValueError(f"negative weight {q} for account {account!r}")
            if q > 0:
                w[account] = q
        if w and sum(w.values()) != 1:
            raise ValueError(f"weights must sum to exactly 1, got {sum(w.values())}")
        object.__setattr__(self, "weights", w)

    @classmethod
    def sole(cls, account: Hashable) -> "DistributionVector":
        return cls({account: Fraction(1)})

    @classmethod
    def uniform(cls, accounts: Sequence[Hashable]) -> "DistributionVector":
        accounts = list(dict.fromkeys(accounts))
        if not accounts:
            return cls()
        return cls({a: Fraction(1, len(accounts)) for a in accounts})

    @property
    def support(self) -> tuple:
        return tuple(self.weights)

    def __bool__(self):
        return bool(self.weights)


def allocate(reward: int, dist: DistributionVector) -> list[tuple[Hashable, int]]:
    """Split ``reward`` base units over ``dist`` by largest remainder.

    Each account gets ``floor(reward * w)`` plus at most one extra unit; the
    leftover units go to the largest fractional parts, earliest account first
    on ties. The result sums to ``reward`` exactly.
    """
    if reward < 0:
        raise ValueError("reward must be >= 0")
    if reward == 0:
        return []
    if not dist.weights:
        raise EmptyDistribution(f"cannot distribute {reward} base units over an empty support")
    accounts = list(dist.weights)
    quotas = [reward * dist.weights[a] for a in accounts]
    base = [q.numerator // q.denominator for q in quotas]
    leftover = reward - sum(base)
    order = sorted(range(len(accounts)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:leftover]:
        base[i] += 1
    return list(zip(accounts, base))


@dataclass(frozen=True)
class RewardEvent:
    """Minted reward ``mu`` for one block and how it is spread over accounts."""

    mu: int = 0
    distribution: DistributionVector = field(default_factory=DistributionVector)

    def __post_init__(self):
        if self.mu < 0:
            raise ValueError("reward must be >= 0")
        if self.mu > 0 and not self.distribution:
            raise EmptyDistribution(f"reward {self.mu} has an empty distribution")

    def allocations(self) -> list[tuple[Hashable, int]]:
        return allocate(self.mu, self.distribution)


def cumulative_rewards(schedule: RewardSchedule, heights: Iterable[int]) -> list[int]:
    """Running ``sum(mu(1..k))`` for each requested height (sorted or not)."""
    return [schedule.cumulative(k) for k in heights]
