"""Time the numba and pure-numpy kernel backends on desk-scale inputs.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--n 20000] [--d 64]

The numba variants are called once before timing so compilation is excluded.
"""

import argparse
import time

import numpy as np

from manidrift import _kernels


def make_inputs(n, d, seed=0):
    rng = np.random.Generator(np.random.Philox(seed))
    A = rng.normal(size=(n, d))
    A /= np.linalg.norm(A, axis=1, keepdims=True)
    B = rng.normal(size=(n, d))
    B /= np.linalg.norm(B, axis=1, keepdims=True)
    V, _ = np.linalg.qr(rng.normal(size=(d, min(8, d))))
    L = rng.normal(size=(n, 8))
    labels = rng.integers(0, 8, n)
    F = (A + B) / np.linalg.norm(A + B, axis=1, keepdims=True)
    norms = np.linalg.norm(A + B, axis=1)
    return {
        "normalize_rows": (A + B,),
        "fuse_rows": (A, B),
        "pair_gaps": (A, B, F),
        "residual_energy": (A, A.mean(axis=0), V),
        "normalize_backward": (B, F, norms),
        "softmax_xent": (L, labels),
    }


def best_of(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--n", type=int, default=20000)
    ap.add_argument("--d", type=int, default=64)
    args = ap.parse_args(argv)

    if not _kernels.HAVE_NUMBA:
        print("numba is not importable; only the numpy backend is available")
        return 1
    inputs = make_inputs(args.n, args.d)
    print(f"n={args.n} d={args.d} repeat={args.repeat} (best time, ms)")
    print(f"{'kernel':<20}{'numpy':>10}{'numba':>10}{'speedup':>10}")
    for name, kargs in inputs.items():
        np_fn = _kernels.NUMPY_KERNELS[name]
        nb_fn = _kernels.NUMBA_KERNELS[name]
        nb_fn(*kargs)  # compile
        t_np = best_of(np_fn, kargs, args.repeat)
        t_nb = best_of(nb_fn, kargs, args.repeat)
        print(f"{name:<20}{t_np * 1e3:>10.3f}{t_nb * 1e3:>10.3f}{t_np / t_nb:>9.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
