"""Time the numba and numpy kernel backends on attention-sized inputs.

    python benchmarks/bench_kernels.py [--reps 5] [--size 256]
"""

import argparse
import time

import numpy as np

from hybridattn.kernels import kernel_set


def best_of(fn, reps):
    fn()  # warm-up (triggers numba compilation)
    times = []
    for _ in range(reps):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def cases(size, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.integers(-7, 8, (size, size))
    b = rng.integers(-7, 8, (size, size))
    yield "int_gemm", lambda k: k["int_gemm"](a, b)
    yield "slice_partials", lambda k: k["slice_partials"](a, b, 64)
    analog = kernel_set("numpy")["slice_partials"](a, b, 64).astype(np.float64)
    yield "classify_convert", lambda k: k["classify_convert"](analog, 1.0, 7)
    yield "saturating_convert", lambda k: k["saturating_convert"](analog, 1.0, 127)
    codes, over = kernel_set("numpy")["classify_convert"](analog, 1.0, 7)
    s, r, c = np.nonzero(over)
    yield "mau_batch", lambda k: k["mau_batch"](a, b, s, r, c, 64)
    exact = kernel_set("numpy")["mau_batch"](a, b, s, r, c, 64).astype(np.float64)
    yield "accumulate", lambda k: k["accumulate"](codes, over, 1.0, s, r, c, exact)
    thr = np.array([1.0, 7.0, 127.0])
    yield "within_counts", lambda k: k["within_counts"](analog, thr)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--size", type=int, default=256)
    args = ap.parse_args()
    nb, npk = kernel_set("numba"), kernel_set("numpy")
    print(f"{'kernel':<20}{'numba ms':>12}{'numpy ms':>12}{'speedup':>10}")
    for name, call in cases(args.size):
        t_nb = best_of(lambda: call(nb), args.reps)
        t_np = best_of(lambda: call(npk), args.reps)
        print(f"{name:<20}{t_nb * 1e3:>12.3f}{t_np * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
