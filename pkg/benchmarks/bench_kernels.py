"""Compiled kernel vs the NumPy fallback on the shipped potential kinds.

    python3 benchmarks/bench_kernels.py [--chains 1024] [--steps 2000] [--repeat 3]

Times one ``ula_block`` call per case on pre-drawn noise, so the figures
are kernel cost only (random number generation excluded).
"""

import argparse
import time

import numpy as np

from mixlangevin.potentials import make_potential
from mixlangevin.sampler import _backend

CASES = [
    ("quadratic", 1, {}),
    ("quadratic", 8, {}),
    ("mixture_norm", 1, {"terms": [(1.0, 2.5)]}),
    ("mixture_norm", 2, {"terms": [(1.0, 2.5), (0.5, 3.0)]}),
    ("linear_tail", 2, {"alphas": [1.0]}),
]


def _buffers(m, n, d, stride):
    return dict(
        tail_sum=np.zeros((m, d)),
        tail_cross=np.zeros((m, d, d)),
        tail_n=np.zeros(m, dtype=np.int64),
        rec_x=np.empty((m, n // stride, d)),
        rec_g=np.empty((m, n // stride)),
        diverged=np.full(m, -1, dtype=np.int64),
    )


def time_case(name, d, params, m, n, repeat, stride=10):
    pot = make_potential(name, d, **params)
    kind, pa, pb = pot.kernel_spec()
    pa = np.ascontiguousarray(pa, dtype=float)
    pb = np.ascontiguousarray(pb, dtype=float)
    rng = np.random.default_rng(0)
    noise = rng.standard_normal((m, n, d))
    x0 = rng.standard_normal((m, d))
    etas = np.full(n, 0.05)
    out = {}

    best = np.inf
    kern = _backend.compiled_kernel() if _backend.compiled_available() else None
    if kern is not None:
        for _ in range(repeat):
            x, b = x0.copy(), _buffers(m, n, d, stride)
            t = time.perf_counter()
            kern(x, noise, np.zeros((0, 0, 0)), 0.0, etas, kind, pa, pb, 0, 0, stride,
                 b["tail_sum"], b["tail_cross"], b["tail_n"], b["rec_x"], b["rec_g"], b["diverged"], 1e6,
                 np.zeros((0, 1, 1), dtype=np.int64), np.zeros(1), np.zeros(1), 0)
            best = min(best, time.perf_counter() - t)
        out["compiled"] = best / (m * n) * 1e9

    grad = _backend.kind_grad(kind, pa, pb)
    best = np.inf
    for _ in range(repeat):
        x, b = x0.copy(), _buffers(m, n, d, stride)
        t = time.perf_counter()
        _backend.fallback_kernel(x, noise, None, 0.0, etas, grad, 0, 0, stride,
                                 b["tail_sum"], b["tail_cross"], b["tail_n"], b["rec_x"], b["rec_g"],
                                 b["diverged"], 1e6, None, None, None, None, 0)
        best = min(best, time.perf_counter() - t)
    out["python"] = best / (m * n) * 1e9
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--chains", type=int, default=1024)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    if not _backend.compiled_available():
        print("compiled kernel not built; timing the fallback only")
    print(f"{'potential':<14}{'d':>3}{'compiled ns/step':>18}{'python ns/step':>16}{'speedup':>9}")
    for name, d, params in CASES:
        r = time_case(name, d, params, args.chains, args.steps, args.repeat)
        c = r.get("compiled")
        speed = f"{r['python'] / c:8.1f}x" if c else "       -"
        print(f"{name:<14}{d:>3}{(f'{c:.2f}' if c else '-'):>18}{r['python']:>16.2f}{speed}")


if __name__ == "__main__":
    main()
