"""Compare the compiled and numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Both backends are imported directly, so the comparison runs regardless of
``CONSTYLE_PURE_PYTHON``. Outputs are checked for bit-equality first.
"""

import argparse
import timeit

import numpy as np

from constyle import _pykernels

try:
    from constyle import _ckernels
except ImportError:
    _ckernels = None


def best_ms(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat)) * 1000


def cases(gen):
    for size in (64, 256):
        img = gen.random((size, size, 3))
        for k in (3, 9, 21):
            kern = gen.random((k, k))
            kern /= kern.sum()
            yield f"convolve2d {size}x{size}x3 k={k}", "convolve2d_reflect", (img, kern)
    for dtype in (np.float32, np.float64):
        x = gen.random((32, 16, 16, 16)).astype(dtype)
        cols = _pykernels.im2col(x, 3, 1, 1)
        name = np.dtype(dtype).name
        yield f"im2col 32x16x16x16 {name}", "im2col", (x, 3, 1, 1)
        yield f"col2im 32x16x16x16 {name}", "col2im", (cols, x.shape, 3, 1, 1)


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    if _ckernels is None:
        raise SystemExit("compiled extension not built; run `pip install -e . --no-build-isolation`")
    gen = np.random.default_rng(0)
    print(f"{'case':<34} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}  identical")
    for label, name, fargs in cases(gen):
        py_fn, c_fn = getattr(_pykernels, name), getattr(_ckernels, name)
        same = np.array_equal(py_fn(*fargs), c_fn(*fargs))
        t_py = best_ms(lambda: py_fn(*fargs), args.repeat)
        t_c = best_ms(lambda: c_fn(*fargs), args.repeat)
        print(f"{label:<34} {t_py:>10.2f} {t_c:>10.2f} {t_py / t_c:>7.1f}x  {same}")


if __name__ == "__main__":
    main()
