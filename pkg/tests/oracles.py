"""Independent reference computations used to freeze expected values.

Written without importing the package's arithmetic so that a shared bug
cannot make both sides agree.
"""
from fractions import Fraction


def bitcoin_reward(k: int) -> int:
    # interval 0 covers heights 1..210000
    i = (k - 1) // 210_000
    return 0 if i > 32 else 5_000_000_000 >> i


def bitcoin_supply() -> int:
    return sum(210_000 * (5_000_000_000 // 2**i) for i in range(33))


def bitcoin_cumulative(K: int) -> int:
    total, k = 0, 1
    while k <= K:
        i = (k - 1) // 210_000
        end = min(K, (i + 1) * 210_000)
        total += (end - k + 1) * (0 if i > 32 else 5_000_000_000 // 2**i)
        k = end + 1
    return total


def largest_remainder(mu: int, weights: list[Fraction]) -> list[int]:
    quotas = [mu * w for w in weights]
    base = [q.numerator // q.denominator for q in quotas]
    left = mu - sum(base)
    order = sorted(range(len(weights)), key=lambda i: (-(quotas[i] - base[i]), i))
    for i in order[:left]:
        base[i] += 1
    return base


def sequential_valid(x: list[int], sends: list[tuple[int, int, int]]) -> bool:
    w = dict(enumerate(x))
    for i, j, a in sends:
        if a < 0 or a > w.get(i, 0):
            return False
        w[i] = w.get(i, 0) - a
        w[j] = w.get(j, 0) + a
    return True


def dense_incidence(n_k: int, n_k1: int):
    """Edges (i, j), i < n_k, j < n_k1, i != j, lexicographic; B as nested lists."""
    edges = [(i, j) for i in range(n_k) for j in range(n_k1) if i != j]
    B = [[0] * len(edges) for _ in range(n_k1)]
    for c, (i, j) in enumerate(edges):
        B[i][c] = -1
        B[j][c] = 1
    return edges, B
