"""Benchmark the compiled conv3d kernels against the numpy fallback.

Usage: python3 benchmarks/kernel_benchmark.py [--repeats N]

Times conv3d_forward / grad_input / grad_weight on shapes representative
of the training loop (batch 2, small channel counts, 16^3 and 32^3 grids)
and prints the per-call medians plus the speedup of the extension.
"""

import argparse
import statistics
import time

import numpy as np

from volseg.net import kernels_np

try:
    from volseg.net import _kernels
except ImportError:
    _kernels = None

CASES = [
    # (label, batch, cin, cout, n, stride, dilation, padding)
    ("enc 16^3", 2, 4, 4, 16, 1, 1, 1),
    ("enc 32^3", 2, 4, 4, 32, 1, 1, 1),
    ("down 32^3", 2, 4, 8, 32, 2, 1, 1),
    ("dilated r4 8^3", 2, 16, 2, 8, 1, 4, 4),
]


def median_time(fn, repeats):
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def bench_case(mod, label, batch, cin, cout, n, stride, dilation, padding,
               repeats):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(batch, cin, n, n, n)).astype(np.float32)
    w = rng.normal(size=(cout, cin, 3, 3, 3)).astype(np.float32)
    y = mod.conv3d_forward(x, w, stride, dilation, padding)
    gy = rng.normal(size=y.shape).astype(np.float32)
    return {
        "forward": median_time(
            lambda: mod.conv3d_forward(x, w, stride, dilation, padding),
            repeats),
        "grad_input": median_time(
            lambda: mod.conv3d_grad_input(gy, w, stride, dilation, padding,
                                          x.shape[2:]), repeats),
        "grad_weight": median_time(
            lambda: mod.conv3d_grad_weight(x, gy, stride, dilation, padding,
                                           3), repeats),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=7)
    args = parser.parse_args()
    if _kernels is None:
        print("compiled extension not available; benchmarking numpy only")
    header = f"{'case':<16} {'kernel':<12} {'numpy ms':>9}"
    if _kernels is not None:
        header += f" {'ext ms':>9} {'speedup':>8}"
    print(header)
    for case in CASES:
        label = case[0]
        np_times = bench_case(kernels_np, *case, repeats=args.repeats)
        ext_times = (bench_case(_kernels, *case, repeats=args.repeats)
                     if _kernels is not None else None)
        for kernel in ("forward", "grad_input", "grad_weight"):
            line = f"{label:<16} {kernel:<12} {np_times[kernel] * 1e3:9.3f}"
            if ext_times is not None:
                ratio = np_times[kernel] / max(ext_times[kernel], 1e-12)
                line += f" {ext_times[kernel] * 1e3:9.3f} {ratio:7.2f}x"
            print(line)


if __name__ == "__main__":
    main()
