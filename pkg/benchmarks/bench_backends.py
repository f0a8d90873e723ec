"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_backends.py [--tokens 131328] [--dim 256] [--repeat 3]

Each kernel runs once untimed (JIT compile), then ``--repeat`` times; the
best wall time is reported.  The end-to-end row runs ``compress_scale`` in a
subprocess per backend so the env flag takes effect at import.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from uhrbat.kernels import _numba as nbk
from uhrbat.kernels import _numpy as npk

END_TO_END = """
import time, numpy as np
from uhrbat import kernels
from uhrbat.core import RegionPartition
from uhrbat.preserve_merge import compress_scale
rng = np.random.default_rng(0)
n, d, r, b = {n}, {d}, 600, 4000
f = rng.standard_normal((n, d)); s = rng.random(n)
lab = np.concatenate([np.arange(r), rng.integers(0, r, n - r)])
part = RegionPartition(lab, r)
compress_scale(f[:64], s[:64], RegionPartition.from_labels(lab[:64] % 4), 8)
best = min((lambda t0: (compress_scale(f, s, part, b), time.perf_counter() - t0)[1])(time.perf_counter())
           for _ in range({repeat}))
print(kernels.BACKEND, best)
"""


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(n, d, rng):
    x = rng.standard_normal((n, d))
    attn = rng.random((32, n))
    scores = rng.random(n)
    labels = rng.integers(0, 600, n)
    grid = rng.standard_normal((48, 48, 1))
    xs = rng.uniform(0, 47, n)
    ys = rng.uniform(0, 47, n)
    emb = rng.standard_normal((min(n, 20000), 16))
    centers = emb[:600].copy()
    rows = np.flatnonzero(scores < 0.5)
    side = int(np.sqrt(n))
    codes = rng.integers(0, 50, (side - side % 14, side - side % 14))
    return {
        "column_mean": lambda k: k.column_mean(attn),
        "bilinear_gather": lambda k: k.bilinear_gather(grid, xs, ys),
        "region_score_stats": lambda k: k.region_score_stats(scores, labels, 600),
        "group_row_sums": lambda k: k.group_row_sums(x, rows, labels[rows], 600),
        "assign_nearest": lambda k: k.assign_nearest(emb, centers),
        "patch_majority": lambda k: k.patch_majority(codes, 14),
    }


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--tokens", type=int, default=131328)
    p.add_argument("--dim", type=int, default=256)
    p.add_argument("--repeat", type=int, default=3)
    p.add_argument("--skip-end-to-end", action="store_true")
    args = p.parse_args(argv)

    rng = np.random.default_rng(0)
    print(f"{'kernel':<20} {'numba ms':>10} {'numpy ms':>10} {'speedup':>8}")
    for name, run in cases(args.tokens, args.dim, rng).items():
        a = best_of(lambda: run(nbk), args.repeat)
        b = best_of(lambda: run(npk), args.repeat)
        print(f"{name:<20} {a * 1e3:>10.2f} {b * 1e3:>10.2f} {b / a:>7.1f}x")

    if not args.skip_end_to_end:
        code = END_TO_END.format(n=args.tokens, d=args.dim, repeat=args.repeat)
        for flag in ("", "1"):
            env = dict(os.environ, UHRBAT_NO_NUMBA=flag)
            out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True,
                                 text=True, check=True).stdout.split()
            print(f"compress_scale[{out[0]}] {float(out[1]) * 1e3:.1f} ms")
    return 0


if __name__ == "__main__":
    sys.exit(main())
