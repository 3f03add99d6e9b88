"""Compare the compiled kernel backend against the pure-numpy fallback.

Times the four hot kernels (im2col, col2im, maxpool forward/backward) on
network-shaped inputs, then a full forward+backward pass of the patch
classifier under each backend.

Run:  python3 benchmarks/bench_kernels.py [--batch 32] [--repeats 5]
"""

import argparse
import time

import numpy as np

from scanid.kernels import get_backend
from scanid.net import build_network


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(batch, repeats):
    rng = np.random.default_rng(0)
    cases = [
        ("im2col 3x3 32ch 64x64", "im2col",
         (rng.standard_normal((batch, 32, 64, 64)).astype(np.float32),
          3, 3, 1, 1)),
        ("im2col 5x5 16ch 32x32", "im2col",
         (rng.standard_normal((batch, 16, 32, 32)).astype(np.float32),
          5, 5, 2, 2)),
    ]
    rows = []
    for name, kind, args in cases:
        for backend_name in ("cython", "numpy"):
            try:
                backend = get_backend(backend_name)
            except ImportError:
                rows.append((name, backend_name, None))
                continue
            fn = getattr(backend, kind)
            rows.append((name, backend_name,
                         timeit(lambda: fn(*args), repeats)))
    # col2im: adjoint shapes of the first case
    x = rng.standard_normal((batch, 32, 64, 64)).astype(np.float32)
    n, c, h, w = x.shape
    for backend_name in ("cython", "numpy"):
        try:
            backend = get_backend(backend_name)
        except ImportError:
            rows.append(("col2im 3x3 32ch 64x64", backend_name, None))
            continue
        cols = backend.im2col(x, 3, 3, 1, 1)
        rows.append(("col2im 3x3 32ch 64x64", backend_name,
                     timeit(lambda: backend.col2im(
                         cols, n, c, h, w, 3, 3, 1, 1), repeats)))
    # maxpool
    x = rng.standard_normal((batch, 64, 64, 64)).astype(np.float32)
    n, c, h, w = x.shape
    for backend_name in ("cython", "numpy"):
        try:
            backend = get_backend(backend_name)
        except ImportError:
            rows.append(("maxpool 2x2 fwd+bwd", backend_name, None))
            continue
        def run():
            y, arg = backend.maxpool_forward(x, 2, 2, 0)
            backend.maxpool_backward(y, arg, n, c, h, w, 2, 2, 0)
        rows.append(("maxpool 2x2 fwd+bwd", backend_name,
                     timeit(run, repeats)))
    return rows


def bench_network(batch, repeats):
    import os
    rows = []
    rng = np.random.default_rng(1)
    x = rng.random((batch, 3, 64, 64)).astype(np.float32)
    for backend_name, env in (("cython", "0"), ("numpy", "1")):
        # backend choice is frozen at import; re-exec style switching is
        # overkill here, so patch the module-level functions directly
        try:
            backend = get_backend(backend_name)
        except ImportError:
            rows.append((f"net fwd+bwd batch {batch}", backend_name, None))
            continue
        import scanid.kernels as K
        saved = (K.im2col, K.col2im, K.maxpool_forward, K.maxpool_backward)
        K.im2col = backend.im2col
        K.col2im = backend.col2im
        K.maxpool_forward = backend.maxpool_forward
        K.maxpool_backward = backend.maxpool_backward
        try:
            net = build_network(8, seed=0)
            def run():
                probs = net.forward(x, train=True)
                net.backward(probs / batch)
            rows.append((f"net fwd+bwd batch {batch}", backend_name,
                         timeit(run, repeats)))
        finally:
            (K.im2col, K.col2im, K.maxpool_forward, K.maxpool_backward) = saved
    return rows


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    rows = bench_kernels(args.batch, args.repeats)
    rows += bench_network(args.batch, args.repeats)

    width = max(len(r[0]) for r in rows)
    print(f"{'case':<{width}}  backend  best time")
    grouped = {}
    for name, backend, t in rows:
        grouped.setdefault(name, {})[backend] = t
        stamp = "unavailable" if t is None else f"{t * 1e3:9.2f} ms"
        print(f"{name:<{width}}  {backend:<7}  {stamp}")
    print()
    for name, by in grouped.items():
        if by.get("cython") and by.get("numpy"):
            print(f"{name:<{width}}  speedup x{by['numpy'] / by['cython']:.2f}")


if __name__ == "__main__":
    main()
