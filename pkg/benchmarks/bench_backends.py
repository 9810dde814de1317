"""Benchmark the numba kernels against the pure-numpy fallback.

The backend is chosen at import time from DEHOMOG_PURE_NUMPY, so each
backend runs in its own subprocess. Covers the three hot kernels:
skeletonization, the exact Euclidean distance transform, and the
matrix-free fine-mesh stiffness apply.

Usage: python benchmarks/bench_backends.py [--size 1200] [--repeats 3]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys

_WORKER = r"""
import json, sys, time
import numpy as np

size = int(sys.argv[1])
repeats = int(sys.argv[2])

from dehomog import morphology, fem
from dehomog.backend import backend_name

rng = np.random.default_rng(0)
x = np.arange(size)
stripes = (np.sin(2 * np.pi * x / 40.0)[None, :] + 0.3 * rng.standard_normal((size, size))) > 0.0

def bench(fn, *args):
    fn(*args)  # warmup (includes JIT compile for the numba backend)
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best

res = {"backend": backend_name()}
res["skeletonize"] = bench(morphology.skeletonize, stripes)
skel = morphology.skeletonize(stripes)
res["distance_transform"] = bench(morphology.distance_transform, skel)

nx = ny = size // 2
Ke = fem.element_stiffness(np.eye(3), 1.0)
op = fem.MatrixFreeOperator(nx, ny, Ke, np.ones(nx * ny), np.array([0, 1]))
u = rng.standard_normal(op.ndof)
res["matrix_free_apply"] = bench(op.matvec, u)
print(json.dumps(res))
"""


def run(pure_numpy: bool, size: int, repeats: int) -> dict:
    env = dict(os.environ, DEHOMOG_PURE_NUMPY="1" if pure_numpy else "0")
    out = subprocess.run([sys.executable, "-c", _WORKER, str(size), str(repeats)],
                         env=env, capture_output=True, text=True, check=True)
    return json.loads(out.stdout.strip().splitlines()[-1])


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=1200)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    results = [run(False, args.size, args.repeats), run(True, args.size, args.repeats)]
    keys = [k for k in results[0] if k != "backend"]
    print(f"{'kernel':<22}{results[0]['backend']:>12}{results[1]['backend']:>12}{'speedup':>10}")
    for k in keys:
        a, b = results[0][k], results[1][k]
        print(f"{k:<22}{a:>12.4f}{b:>12.4f}{b / a:>10.1f}x")


if __name__ == "__main__":
    main()
