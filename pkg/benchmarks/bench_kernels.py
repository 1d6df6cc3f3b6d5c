"""Compare the numba and pure-numpy convolution/pooling backends.

Run with ``python benchmarks/bench_kernels.py``.  Shapes mirror the first
two stages of the audio CNNs at desk-scale patch widths.
"""

import time

import numpy as np

from genrekit import kernels


def timeit(fn, *args, repeat=5):
    fn(*args)  # warmup (and numba compile)
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


CASES = [
    # (label, B, C, H, W, F, KH, KW)
    ("stage1 3x3 low", 16, 1, 96, 96, 64, 3, 3),
    ("stage1 4x96 low", 16, 1, 96, 96, 64, 96, 4),
    ("stage2 3x3 low", 16, 64, 47, 23, 128, 3, 3),
    ("stage1 3x3 high", 8, 1, 96, 96, 256, 3, 3),
]


def main():
    if not kernels.HAS_NUMBA:
        print("numba unavailable or disabled; timing the numpy backend only")
    rng = np.random.default_rng(0)
    header = f"{'case':18s} {'fwd numpy':>10s} {'fwd numba':>10s} " \
             f"{'bwd numpy':>10s} {'bwd numba':>10s}"
    print(header)
    print("-" * len(header))
    for label, b, c, h, w, f, kh, kw in CASES:
        x = rng.normal(size=(b, c, h, w))
        wgt = rng.normal(size=(f, c, kh, kw))
        bias = rng.normal(size=f)
        dout = rng.normal(size=(b, f, h - kh + 1, w - kw + 1))

        fwd_np = timeit(kernels._conv2d_forward_np, x, wgt, bias)
        bwd_np = timeit(kernels._conv2d_backward_np, x, wgt, dout)
        if kernels.HAS_NUMBA:
            fwd_nb = timeit(kernels._conv2d_forward_nb, x, wgt, bias)
            bwd_nb = timeit(kernels._conv2d_backward_nb, x, wgt, dout)
            # keep the backends honest while we are here
            np.testing.assert_allclose(
                kernels._conv2d_forward_nb(x, wgt, bias),
                kernels._conv2d_forward_np(x, wgt, bias), atol=1e-10)
        else:
            fwd_nb = bwd_nb = float("nan")
        print(f"{label:18s} {fwd_np * 1e3:9.1f}ms {fwd_nb * 1e3:9.1f}ms "
              f"{bwd_np * 1e3:9.1f}ms {bwd_nb * 1e3:9.1f}ms")

    # pooling
    x = rng.normal(size=(16, 64, 94, 94))
    pool_np = timeit(lambda: kernels._maxpool_forward_np(x, 2, 4))
    line = f"{'maxpool 2x4':18s} {pool_np * 1e3:9.1f}ms"
    if kernels.HAS_NUMBA:
        pool_nb = timeit(lambda: kernels._maxpool_forward_nb(x, 2, 4))
        line += f" {pool_nb * 1e3:9.1f}ms"
    print(line)


if __name__ == "__main__":
    main()
