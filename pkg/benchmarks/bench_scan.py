"""Time the typicality scan kernel: compiled build against the numpy fallback.

    python3 benchmarks/bench_scan.py [--repeat 5]

Each case scans a random codebook for rows typical with a fixed context,
asking for every hit so the whole book is examined.  Both builds must
return identical hits; the script exits non-zero otherwise.
"""
from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from succref import _scan_py
from succref.typicality import count_bounds, scan_typical

try:
    from succref import _scan as _scan_c
except ImportError:
    _scan_c = None

CASES = [  # (rows, n, card, n_ctx)
    (4096, 64, 2, 2),
    (4096, 500, 2, 4),
    (65536, 32, 2, 2),
    (16384, 200, 4, 6),
]


def best_of(fn, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _scan_c is None:
        print("compiled kernel not built; run `pip install -e . --no-build-isolation` first", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'rows':>7} {'n':>4} {'card':>4} {'ctx':>3} {'hits':>6} {'numpy ms':>10} {'cython ms':>10} {'speedup':>8}")
    for m, n, card, nctx in CASES:
        ctx = rng.integers(0, nctx, n)
        book = rng.integers(0, card, (m, n)).astype(np.uint8)
        target = np.full(nctx * card, 1.0 / (nctx * card))
        lo, hi = count_bounds(target, n, 0.1)
        t_py, h_py = best_of(lambda: scan_typical(ctx, book, card, lo, hi, m, impl=_scan_py), args.repeat)
        t_c, h_c = best_of(lambda: scan_typical(ctx, book, card, lo, hi, m, impl=_scan_c), args.repeat)
        if not np.array_equal(h_py, h_c):
            print(f"mismatch on case {(m, n, card, nctx)}", file=sys.stderr)
            return 1
        print(f"{m:7d} {n:4d} {card:4d} {nctx:3d} {len(h_c):6d} {1e3 * t_py:10.2f} {1e3 * t_c:10.2f} "
              f"{t_py / t_c:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
