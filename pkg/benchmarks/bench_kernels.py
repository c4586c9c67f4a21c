"""Time the numba-compiled kernels against the numpy fallbacks.

    python benchmarks/bench_kernels.py [--accounts N] [--sends M] [--repeat R]

Both paths are timed in the same process regardless of LEDGERDYN_DISABLE_NUMBA;
results are checked for equality before timing.
"""
import argparse
import timeit

import numpy as np

from ledgerdyn import kernels


def workload(n, m, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.integers(0, 10**9, n).astype(np.int64)
    src = rng.integers(0, n, m).astype(np.int64)
    dst = ((src + rng.integers(1, n, m)) % n).astype(np.int64)
    return x, src, dst, rng.random(m)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--accounts", type=int, default=1000)
    p.add_argument("--sends", type=int, default=100_000)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    compiled = kernels.compiled_kernels()
    if compiled is None:
        print("numba is not installed; nothing to compare")
        return
    x, src, dst, frac = workload(args.accounts, args.sends)
    n = args.accounts
    amt = kernels.numpy_kernels.draw_amounts(x, src, dst, frac, n)
    cases = {
        "draw_amounts": lambda k: k.draw_amounts(x, src, dst, frac, n),
        "first_overdraft": lambda k: k.first_overdraft(x, src, dst, amt, n),
        "scatter_flows": lambda k: k.scatter_flows(src, dst, amt, n),
    }
    print(f"{args.accounts} accounts, {args.sends} sends, best of {args.repeat}")
    print(f"{'kernel':<16} {'numpy (ms)':>11} {'numba (ms)':>11} {'speedup':>8}")
    for name, call in cases.items():
        ref, fast = call(kernels.numpy_kernels), call(compiled)  # also warms up the jit
        assert np.array_equal(np.asarray(ref), np.asarray(fast)), name
        t_np = min(timeit.repeat(lambda: call(kernels.numpy_kernels), number=1, repeat=args.repeat))
        t_nb = min(timeit.repeat(lambda: call(compiled), number=1, repeat=args.repeat))
        print(f"{name:<16} {t_np * 1e3:>11.2f} {t_nb * 1e3:>11.2f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
