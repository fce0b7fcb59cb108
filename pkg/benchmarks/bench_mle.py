"""Compare the compiled and numpy MLE kernels.

    python benchmarks/bench_mle.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from homqst._kernels import BACKENDS
from homqst.quantum import build_probe_frame


def _random_rho(dim, rng):
    g = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    m = g @ g.conj().T
    return m / np.trace(m).real


def depth_case(d, n, rng):
    frame = build_probe_frame(d, n, "qubit6" if d == 2 else "mub-full")
    rho = _random_rho(frame.dim, rng)
    p = np.einsum("ki,ij,kj->k", frame.kets.conj(), rho, frame.kets).real
    counts = rng.poisson(1e4 * p).astype(float)
    args = (frame.kets, counts, np.ones(len(counts), bool), np.eye(frame.dim) / frame.dim)
    return f"depth d={d} n={n}", "depth_mle", args


def counts_case(rng):
    frame = build_probe_frame(2, 1, "qubit6")
    rho = _random_rho(2, rng)
    p = np.einsum("ki,ij,kj->k", frame.kets.conj(), rho, frame.kets).real
    eta = np.ones(6)
    c0 = rng.poisson((4000 - 1500 * p) * 30).astype(float)
    far = rng.poisson(4000 * 30, size=(6, 2)).sum(axis=1).astype(float)
    args = (frame.kets, c0, far, np.full(6, 2.0), np.full(6, 30.0), eta, np.eye(2) / 2)
    return "counts d=2 n=1", "counts_mle", args


def best_time(fn, args, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t)
    return min(times), out[2]


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    cases = [depth_case(2, 1, rng), depth_case(3, 1, rng), depth_case(2, 2, rng), counts_case(rng)]
    names = sorted(BACKENDS)
    print(f"{'case':<16}" + "".join(f"{n + ' (ms)':>16}" for n in names) + f"{'iters':>8}{'speedup':>10}")
    for label, func, fargs in cases:
        timings = {}
        iters = 0
        for name in names:
            timings[name], iters = best_time(getattr(BACKENDS[name], func), fargs, args.repeat)
        row = f"{label:<16}" + "".join(f"{1e3 * timings[n]:16.2f}" for n in names) + f"{iters:8d}"
        if "compiled" in timings:
            row += f"{timings['python'] / timings['compiled']:9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
