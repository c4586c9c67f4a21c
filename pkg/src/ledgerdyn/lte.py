"""Linear time-expanding view of the ledger: x(k+1) = A_k x(k) + B_k u(k) + mu_k v(k).

``A_k`` is an augmented identity (old balances carried over, new accounts
start at zero) and ``B_k`` the all-to-all incidence matrix of possible sends,
sender -1 and receiver +1. Neither is ever built at scale: inputs are kept as
arrays of active edges and applied with the kernels in :mod:`ledgerdyn.kernels`.
Dense matrices exist only as a small-n test oracle.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .rewards import RewardEvent

DENSE_CAP = 64


class LTEError(ValueError):
    pass


class DimensionMismatch(LTEError):
    pass


class SelfLoop(LTEError):
    pass


class IndexOutOfRange(LTEError):
    pass


class TooLargeForDense(LTEError):
    pass


class StrictOrderViolation(LTEError):
    def __init__(self, index: int):
        super().__init__(f"send {index} exceeds its sender's running balance")
        self.index = index


@dataclass(frozen=True)
class ExpansionStep:
    n_k: int
    n_k1: int

    def __post_init__(self):
        if not 0 <= self.n_k <= self.n_k1:
            raise DimensionMismatch(f"need 0 <= n_k <= n_k1, got ({self.n_k}, {self.n_k1})")

    @property
    def edge_count(self) -> int:
        """|A_k x A_{k+1}| without self-loops."""
        return self.n_k * self.n_k1 - self.n_k

    @property
    def stated_edge_count(self) -> int:
        """The alternative count n_{k+1}(n_k - 1); equals :attr:`edge_count` when n_k1 == n_k."""
        return self.n_k1 * (self.n_k - 1)


@dataclass(frozen=True)
class FlowAction:
    src: int
    dst: int
    amount: int


@dataclass(frozen=True, eq=False)
class InputVector:
    """Sparse u(k): parallel int64 arrays of senders, receivers and amounts, in block order."""

    src: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    dst: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))
    amount: np.ndarray = field(default_factory=lambda: np.zeros(0, np.int64))

    def __post_init__(self):
        for name in ("src", "dst", "amount"):
            object.__setattr__(self, name, np.ascontiguousarray(getattr(self, name), dtype=np.int64))
        if not (self.src.shape == self.dst.shape == self.amount.shape) or self.src.ndim != 1:
            raise DimensionMismatch("src, dst and amount must be 1-d arrays of equal length")

    @classmethod
    def from_actions(cls, actions: Iterable[FlowAction | tuple]) -> "InputVector":
        rows = [tuple(a) if isinstance(a, tuple) else (a.src, a.dst, a.amount) for a in actions]
        if not rows:
            return cls()
        arr = np.asarray(rows, dtype=np.int64)
        return cls(arr[:, 0], arr[:, 1], arr[:, 2])

    def __len__(self):
        return int(self.src.shape[0])

    def actions(self) -> list[FlowAction]:
        return [FlowAction(int(i), int(j), int(a)) for i, j, a in zip(self.src, self.dst, self.amount)]

    def check_bounds(self, step: ExpansionStep) -> None:
        if len(self) == 0:
            return
        if np.any(self.src == self.dst):
            raise SelfLoop(f"self-loop at send {int(np.argmax(self.src == self.dst))}")
        if self.src.min() < 0 or self.src.max() >= step.n_k:
            raise IndexOutOfRange(f"sender index outside 0..{step.n_k - 1}")
        if self.dst.min() < 0 or self.dst.max() >= step.n_k1:
            raise IndexOutOfRange(f"receiver index outside 0..{step.n_k1 - 1}")
        if self.amount.min() < 0:
            raise LTEError("amounts must be non-negative")


def apply_A(step: ExpansionStep, x) -> np.ndarray:
    """Augmented identity: ``x`` padded with ``n_k1 - n_k`` zeros."""
    x = np.asarray(x, dtype=np.int64)
    if x.shape != (step.n_k,):
        raise DimensionMismatch(f"state has length {x.shape}, expected {step.n_k}")
    out = np.zeros(step.n_k1, dtype=np.int64)
    out[: step.n_k] = x
    return out


def apply_B(step: ExpansionStep, u: InputVector) -> np.ndarray:
    """Incidence product B_k u: receivers gain, senders lose; the entries always sum to zero."""
    u.check_bounds(step)
    return kernels.scatter_flows(u.src, u.dst, u.amount, step.n_k1)


def reward_vector(reward: RewardEvent, n: int) -> np.ndarray:
    """mu_k v(k) as an integer vector over account indices ``0..n-1``."""
    out = np.zeros(n, dtype=np.int64)
    for account, amount in reward.allocations():
        if not 0 <= account < n:
            raise IndexOutOfRange(f"reward goes to account {account}, outside 0..{n - 1}")
        out[account] += amount
    return out


def required_size(x, u: InputVector, reward: RewardEvent | None = None) -> int:
    """Smallest n_{k+1} that holds every receiver and reward recipient."""
    n = len(x)
    if len(u):
        n = max(n, int(u.dst.max()) + 1)
    if reward is not None and reward.distribution:
        n = max(n, max(reward.distribution.support) + 1)
    return n


def first_overdraft(x, u: InputVector, n_k1: int | None = None) -> int:
    """Index of the first send violating u_(i,j) <= x_i under sequential replay, or -1."""
    x = np.asarray(x, dtype=np.int64)
    n = n_k1 if n_k1 is not None else required_size(x, u)
    return kernels.first_overdraft(x, u.src, u.dst, u.amount, n)


def is_strictly_valid(x, u: InputVector, n_k1: int | None = None) -> bool:
    return first_overdraft(x, u, n_k1) < 0


def satisfies_net_flow(x, u: InputVector, n_k1: int | None = None) -> bool:
    """Relaxed budget: x_i + sum_j u_(j,i) - sum_j u_(i,j) >= 0 for every account."""
    x = np.asarray(x, dtype=np.int64)
    n = n_k1 if n_k1 is not None else required_size(x, u)
    step = ExpansionStep(len(x), n)
    return bool(np.all(apply_A(step, x) + apply_B(step, u) >= 0))


def step(x, u: InputVector, reward: RewardEvent | None = None, n_k1: int | None = None,
         *, strict: bool = True) -> np.ndarray:
    """One block: A_k x + B_k u + mu_k v(k)."""
    x = np.asarray(x, dtype=np.int64)
    reward = reward or RewardEvent()
    n = n_k1 if n_k1 is not None else required_size(x, u, reward)
    st = ExpansionStep(len(x), n)
    u.check_bounds(st)
    if strict:
        bad = kernels.first_overdraft(x, u.src, u.dst, u.amount, n)
        if bad >= 0:
            raise StrictOrderViolation(bad)
    return apply_A(st, x) + apply_B(st, u) + reward_vector(reward, n)


def output_y(x) -> int:
    """y = 1'x, exact."""
    return int(sum(int(v) for v in np.asarray(x, dtype=np.int64)))


@dataclass(frozen=True, eq=False)
class DenseOperators:
    A: np.ndarray
    B: np.ndarray
    edges: tuple[tuple[int, int], ...]
    stated_edge_count: int

    def input_vector(self, u: InputVector) -> np.ndarray:
        """Dense u(k) in R^{m_k}: amounts summed per edge."""
        index = {e: c for c, e in enumerate(self.edges)}
        dense = np.zeros(len(self.edges), dtype=np.int64)
        for i, j, a in zip(u.src.tolist(), u.dst.tolist(), u.amount.tolist()):
            dense[index[(i, j)]] += a
        return dense


def materialize_dense(step: ExpansionStep, cap: int = DENSE_CAP) -> DenseOperators:
    """Explicit A_k (n_k1 x n_k) and B_k (n_k1 x m_k) for testing; edges ordered lexicographically."""
    if step.n_k1 > cap:
        raise TooLargeForDense(f"n_k1={step.n_k1} exceeds the dense cap {cap}")
    A = np.zeros((step.n_k1, step.n_k), dtype=np.int64)
    for i in range(step.n_k):
        A[i, i] = 1
    edges = tuple((i, j) for i in range(step.n_k) for j in range(step.n_k1) if i != j)
    B = np.zeros((step.n_k1, len(edges)), dtype=np.int64)
    for e, (i, j) in enumerate(edges):
        B[i, e] = -1
        B[j, e] = 1
    return DenseOperators(A, B, edges, step.stated_edge_count)


def format_dense(matrix: np.ndarray) -> str:
    """Plain-text numeric grid, one row per line."""
    return "\n".join(" ".join(f"{int(v):2d}" for v in row) for row in np.atleast_2d(matrix))


def trajectory(x0, inputs: Sequence[tuple[InputVector, RewardEvent]]) -> list[np.ndarray]:
    """States x(0), x(1), ... under a sequence of (u(k), reward) pairs."""
    xs = [np.asarray(x0, dtype=np.int64)]
    for u, r in inputs:
        xs.append(step(xs[-1], u, r))
    return xs
