import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ledgerdyn import kernels

compiled = kernels.compiled_kernels()
needs_numba = pytest.mark.skipif(compiled is None, reason="numba not installed")


def _case(seed, n=30, m=200):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 1000, n).astype(np.int64)
    src = rng.integers(0, n, m).astype(np.int64)
    dst = ((src + rng.integers(1, n + 5, m)) % (n + 5)).astype(np.int64)
    dst = np.where(dst == src, (dst + 1) % (n + 5), dst)
    return x, src, dst, rng.random(m), n + 5


@needs_numba
@given(st.integers(0, 2**32 - 1))
def test_backends_agree(seed):
    x, src, dst, frac, n = _case(seed)
    a_np = kernels.numpy_kernels.draw_amounts(x, src, dst, frac, n)
    a_nb = compiled.draw_amounts(x, src, dst, frac, n)
    assert np.array_equal(a_np, a_nb)
    assert np.array_equal(kernels.numpy_kernels.scatter_flows(src, dst, a_np, n), compiled.scatter_flows(src, dst, a_np, n))
    assert kernels.numpy_kernels.first_overdraft(x, src, dst, a_np, n) == compiled.first_overdraft(x, src, dst, a_np, n) == -1
    bumped = a_np.copy()
    bumped[len(bumped) // 2] += 10**6
    assert kernels.numpy_kernels.first_overdraft(x, src, dst, bumped, n) == compiled.first_overdraft(x, src, dst, bumped, n)


def test_drawn_amounts_are_strictly_valid():
    x, src, dst, frac, n = _case(3)
    amt = kernels.draw_amounts(x, src, dst, frac, n)
    assert amt.min() >= 0
    assert kernels.first_overdraft(x, src, dst, amt, n) == -1


def test_scatter_conserves():
    x, src, dst, frac, n = _case(5)
    delta = kernels.scatter_flows(src, dst, frac.astype(np.int64) + 7, n)
    assert int(delta.sum()) == 0


def test_negative_amount_is_overdraft():
    x = np.array([5, 5], dtype=np.int64)
    assert kernels.first_overdraft(x, [0], [1], [-1], 2) == 0


def test_backend_flag():
    assert kernels.BACKEND in ("numba", "numpy")
