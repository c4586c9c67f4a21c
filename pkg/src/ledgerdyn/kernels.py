"""Hot inner loops over flow arrays.

Each kernel has a loop form (compiled with numba when enabled) and a numpy
form. Both are exact int64 arithmetic and must agree bit for bit; the
benchmark in ``benchmarks/bench_kernels.py`` times them against each other.
"""
from types import SimpleNamespace

import numpy as np

from ._accel import USE_NUMBA, jit_compile, numba_installed


def _scatter_flows_loop(src, dst, amt, n):
    delta = np.zeros(n, dtype=np.int64)
    for e in range(src.shape[0]):
        delta[src[e]] -= amt[e]
        delta[dst[e]] += amt[e]
    return delta


def _scatter_flows_numpy(src, dst, amt, n):
    delta = np.zeros(n, dtype=np.int64)
    np.add.at(delta, src, -amt)
    np.add.at(delta, dst, amt)
    return delta


def _first_overdraft_loop(x, src, dst, amt, n):
    # sequential replay; returns index of first send exceeding the working balance, else -1
    w = np.zeros(n, dtype=np.int64)
    w[: x.shape[0]] = x
    for e in range(src.shape[0]):
        a = amt[e]
        if a < 0 or a > w[src[e]]:
            return e
        w[src[e]] -= a
        w[dst[e]] += a
    return -1


def _first_overdraft_py(x, src, dst, amt, n):
    # sequential dependency: no vectorized form, iterate over python ints
    w = [0] * n
    w[: len(x)] = x.tolist()
    for e, (i, j, a) in enumerate(zip(src.tolist(), dst.tolist(), amt.tolist())):
        if a < 0 or a > w[i]:
            return e
        w[i] -= a
        w[j] += a
    return -1


def _draw_amounts_loop(x, src, dst, frac, n):
    # amount_e = floor(frac_e * (w_src + 1)) against the working balance, so every send is strictly valid
    w = np.zeros(n, dtype=np.int64)
    w[: x.shape[0]] = x
    out = np.zeros(src.shape[0], dtype=np.int64)
    for e in range(src.shape[0]):
        b = w[src[e]]
        a = np.int64(frac[e] * (b + 1))
        if a > b:
            a = b
        out[e] = a
        w[src[e]] -= a
        w[dst[e]] += a
    return out


def _draw_amounts_py(x, src, dst, frac, n):
    w = [0] * n
    w[: len(x)] = x.tolist()
    out = []
    for i, j, f in zip(src.tolist(), dst.tolist(), frac.tolist()):
        b = w[i]
        a = min(int(f * (b + 1)), b)
        out.append(a)
        w[i] -= a
        w[j] += a
    return np.asarray(out, dtype=np.int64)


numpy_kernels = SimpleNamespace(
    scatter_flows=_scatter_flows_numpy,
    first_overdraft=_first_overdraft_py,
    draw_amounts=_draw_amounts_py,
)

_compiled = None


def compiled_kernels():
    """The numba-compiled kernels, built on first use; ``None`` without numba."""
    global _compiled
    if _compiled is None and numba_installed:
        _compiled = SimpleNamespace(
            scatter_flows=jit_compile(_scatter_flows_loop),
            first_overdraft=jit_compile(_first_overdraft_loop),
            draw_amounts=jit_compile(_draw_amounts_loop),
        )
    return _compiled


if USE_NUMBA:
    active = compiled_kernels()
    BACKEND = "numba"
else:
    active = numpy_kernels
    BACKEND = "numpy"


def _i64(a):
    return np.ascontiguousarray(a, dtype=np.int64)


def scatter_flows(src, dst, amt, n):
    """Net per-account change from a list of sends: receivers +amount, senders -amount."""
    return active.scatter_flows(_i64(src), _i64(dst), _i64(amt), int(n))


def first_overdraft(x, src, dst, amt, n):
    """Index of the first send that exceeds its sender's running balance, or -1."""
    return int(active.first_overdraft(_i64(x), _i64(src), _i64(dst), _i64(amt), int(n)))


def draw_amounts(x, src, dst, frac, n):
    return active.draw_amounts(
        _i64(x), _i64(src), _i64(dst), np.ascontiguousarray(frac, dtype=np.float64), int(n)
    )
