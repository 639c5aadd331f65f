"""Compare the compiled kernels against the pure-numpy fallbacks.

Run: python3 benchmarks/bench_kernels.py [--sizes 64,128,256] [--repeat 5]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from tarot import _kernels_np as np_impl

try:
    from tarot import _native as native_impl
except ImportError:
    native_impl = None


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _bench_label4(size: int, repeat: int, rng) -> dict:
    mask = (rng.random((size, size)) < 0.45).astype(np.uint8)
    out = {"numpy": _time(lambda: np_impl.label4(mask), repeat)}
    if native_impl is not None:
        out["native"] = _time(lambda: native_impl.label4(mask), repeat)
        labels_np, count_np = np_impl.label4(mask)
        labels_nat, count_nat = native_impl.label4(mask)
        assert count_np == count_nat
        assert np.array_equal(labels_np, labels_nat)
    return out


def _bench_lift(size: int, repeat: int, rng) -> dict:
    grid = rng.random((size // 8, size // 8))
    out = {"numpy": _time(lambda: np_impl.bilinear_lift(grid, size, size), repeat)}
    if native_impl is not None:
        out["native"] = _time(lambda: native_impl.bilinear_lift(grid, size, size),
                              repeat)
        assert np.allclose(np_impl.bilinear_lift(grid, size, size),
                           native_impl.bilinear_lift(grid, size, size))
    return out


def _bench_decay(size: int, repeat: int, rng) -> dict:
    field = rng.random((size, size))
    gx = rng.standard_normal((size, size))
    gy = rng.standard_normal((size, size))
    allowed = (rng.random((size, size)) < 0.3).astype(np.uint8)
    args = (field, gx, gy, allowed, size // 2, size // 2)
    out = {"numpy": _time(lambda: np_impl.decay_argmax(*args), repeat)}
    if native_impl is not None:
        out["native"] = _time(lambda: native_impl.decay_argmax(*args), repeat)
        assert np_impl.decay_argmax(*args) == native_impl.decay_argmax(*args)
    return out


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", default="64,128,256")
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    rng = np.random.default_rng(7)

    if native_impl is None:
        print("compiled kernels unavailable; timing the fallback only")
    benches = (("label4", _bench_label4), ("bilinear_lift", _bench_lift),
               ("decay_argmax", _bench_decay))
    for size in sizes:
        for name, bench in benches:
            res = bench(size, args.repeat, rng)
            line = f"{name:>14} {size:>4}px  numpy {res['numpy'] * 1e3:8.3f} ms"
            if "native" in res:
                speedup = res["numpy"] / res["native"] if res["native"] else 0.0
                line += f"  native {res['native'] * 1e3:8.3f} ms  ({speedup:4.1f}x)"
            print(line)


if __name__ == "__main__":
    main()
