"""Timing comparison of the compiled and pure-python conv/pool kernels.

Runs each hot kernel on the two convolutional layer shapes used by the
28x28 digit architecture at batch size 20, prints a table of best-of-N
wall times per backend, and cross-checks that both backends agree to
1e-12 before trusting any number.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from eqprop import ops


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def layer_cases(rng):
    cases = []
    for tag, (cout, cin, d) in (("28x28x1->32", (32, 1, 28)), ("12x12x32->64", (64, 32, 12))):
        spec = ops.ConvSpec(5, padding=0, pool_size=2)
        x = rng.standard_normal((20, cin, d, d))
        w = rng.standard_normal((cout, cin, 5, 5))
        z = ops.conv2d_b(w, x, spec)
        pooled, ind = ops.maxpool_b(z, 2)
        cases.append((tag, spec, x, w, z, pooled, ind))
    return cases


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timing repeats, best kept")
    args = parser.parse_args()

    backends = ops.available_backends()
    if len(backends) < 2:
        print(f"only {backends} built; nothing to compare")

    rng = np.random.default_rng(0)
    rows = []
    for tag, spec, x, w, z, pooled, ind in layer_cases(rng):
        ops_under_test = {
            "conv2d": lambda: ops.conv2d_b(w, x, spec),
            "transpose_conv": lambda: ops.transpose_conv_b(w, z, spec),
            "kernel_grad": lambda: ops.kernel_grad_b(z, x, spec),
            "maxpool": lambda: ops.maxpool_b(z, 2)[0],
            "inverse_pool": lambda: ops.inverse_pool_b(pooled, ind, 2),
            "pool_sample": lambda: ops.pool_sample_b(z, ind, 2),
        }
        for name, fn in ops_under_test.items():
            timing, reference = {}, {}
            for backend in backends:
                ops.set_backend(backend)
                reference[backend] = fn()
                timing[backend] = best_of(fn, args.repeat)
            values = list(reference.values())
            scale = max(1.0, float(np.abs(values[0]).max()))
            for other in values[1:]:
                if not np.allclose(values[0], other, atol=1e-12 * scale, rtol=0):
                    raise SystemExit(f"backend mismatch on {name} {tag}")
            rows.append((tag, name, timing))

    print(f"{'layer':>14}  {'kernel':>15}", end="")
    for backend in backends:
        print(f"  {backend:>10}", end="")
    if len(backends) == 2:
        print(f"  {'speedup':>8}", end="")
    print()
    for tag, name, timing in rows:
        print(f"{tag:>14}  {name:>15}", end="")
        for backend in backends:
            print(f"  {timing[backend] * 1e3:9.2f}ms", end="")
        if len(backends) == 2:
            slow, fast = max(timing.values()), min(timing.values())
            print(f"  {slow / fast:7.1f}x", end="")
        print()


if __name__ == "__main__":
    main()
