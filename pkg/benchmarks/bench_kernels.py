"""Compare the numba kernels with their pure-numpy counterparts.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. Each kernel is
warmed up once (so compilation time is excluded) and then timed on the same
inputs under both backends; the results of the two are checked for agreement.
"""
import argparse
import time

import numpy as np

from convex_order import _kernels


def _time(fn, make_args, repeat):
    fn(*make_args())
    best = np.inf
    for _ in range(repeat):
        args = make_args()
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    T = rng.normal(size=(120, 300))
    B = rng.normal(size=(12, 12))
    S = B + B.T
    ndir, nm, nn = 4096, 6, 12
    pm, pn = rng.normal(size=(ndir, nm)), 2 * rng.normal(size=(ndir, nn))
    mm, mn = rng.uniform(size=nm), rng.uniform(size=nn)
    n, d, nw, nj = 100_000, 3, 3, 4
    z, A = rng.normal(size=(n, nw)), rng.normal(size=(d, nw))
    counts = rng.poisson(1.0, size=(n, nj)).astype(float)
    comp, J = np.ones(nj), rng.normal(size=(d, nj))
    return {
        "pivot (120x300)": ("pivot", lambda: (T.copy(), 7, 11)),
        "jacobi_eigh (12x12)": ("jacobi_eigh", lambda: (S, 1e-14, 100)),
        "thresholds (4096 dirs)": ("thresholds", lambda: (pm, mm, pn, mn, pm[:, 0].copy(), 1e-12)),
        "accumulate (1e5 paths)": ("accumulate", lambda: (np.zeros((n, d)), z, A, counts, comp, J)),
    }


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if not _kernels.HAVE_NUMBA:
        print("numba is not importable; only the numpy path can run")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<26}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for label, (name, make_args) in cases(rng).items():
        jit_fn, np_fn = getattr(_kernels, f"{name}_jit"), getattr(_kernels, f"{name}_numpy")
        a, b = make_args(), make_args()
        ra, rb = jit_fn(*a), np_fn(*b)
        if ra is None:
            ra, rb = a[0], b[0]
        if isinstance(ra, tuple):
            ra, rb = np.sort(ra[0]), np.sort(rb[0])
        assert np.allclose(ra, rb, atol=1e-8), f"{name}: backends disagree"
        t_jit = _time(jit_fn, make_args, args.repeat)
        t_np = _time(np_fn, make_args, args.repeat)
        print(f"{label:<26}{1e3 * t_jit:>12.3f}{1e3 * t_np:>12.3f}{t_np / t_jit:>9.1f}x")


if __name__ == "__main__":
    main()
