"""Compare the compiled and numpy kernel backends on encoder-sized workloads.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints one line per (workload, backend) with the best wall time, and checks
that both backends produce bit-identical outputs and gradients.
"""

import argparse
import time

import numpy as np

from fan.adcore import Tensor, backward, conv2d, kernels, maxpool2d, tsum

WORKLOADS = {
    # name: (input N x C x H x W, conv out channels, kernel, stride, pad)
    "toy conv 32x16x16x64": ((32, 16, 16, 64), 32, (3, 3), (1, 1), (1, 1)),
    "toy conv 32x1x16x64": ((32, 1, 16, 64), 16, (3, 3), (1, 1), (1, 1)),
    "paper conv1 1x32x32x256": ((1, 32, 32, 256), 64, (3, 3), (1, 1), (1, 1)),
}
POOLS = {
    "pool 2x2/2 32x16x16x64": ((32, 16, 16, 64), (2, 2), (2, 2), (0, 0)),
    "pool 2x2/(1,2) 4x512x8x64": ((4, 512, 8, 64), (2, 2), (2, 1), (0, 1)),
}


def run_conv(x, w, b, stride, pad):
    x.grad = w.grad = None
    y = conv2d(x, w, b, stride, pad)
    backward(tsum(y * y))
    return y.data, x.grad, w.grad


def run_pool(x, k, s, p):
    x.grad = None
    y = maxpool2d(x, k, s, p)
    backward(tsum(y * y))
    return y.data, x.grad


def best_time(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    backends = kernels.available()
    print(f"backends: {', '.join(backends)} (default {kernels.BACKEND})")
    jobs = []
    for name, (shape, co, k, s, p) in WORKLOADS.items():
        x = Tensor(rng.normal(size=shape), requires_grad=True)
        w = Tensor(rng.normal(size=(co, shape[1]) + k) * 0.1, requires_grad=True)
        b = Tensor(np.zeros(co), requires_grad=True)
        jobs.append((name, lambda x=x, w=w, b=b, s=s, p=p: run_conv(x, w, b, s, p)))
    for name, (shape, k, s, p) in POOLS.items():
        x = Tensor(rng.normal(size=shape), requires_grad=True)
        jobs.append((name, lambda x=x, k=k, s=s, p=p: run_pool(x, k, s, p)))

    default = kernels.BACKEND
    try:
        for name, fn in jobs:
            results = {}
            for be in backends:
                kernels.use(be)
                t, out = best_time(fn, args.repeat)
                results[be] = (t, [o.copy() for o in out])
                print(f"{name:<28} {be:<7} {t * 1e3:9.2f} ms  (fwd+bwd)")
            if len(results) == 2:
                same = all(np.array_equal(a, b) for a, b in zip(results["cython"][1], results["numpy"][1]))
                speedup = results["numpy"][0] / results["cython"][0]
                print(f"{'':<28} speedup {speedup:5.2f}x  identical={same}")
    finally:
        kernels.use(default)


if __name__ == "__main__":
    main()
