#!/usr/bin/env python3
"""Wall-clock comparison of the numba kernels against their numpy twins.

Both paths are imported side by side from ``dipseq._accel`` regardless of
``DIPSEQ_DISABLE_NUMBA``; outputs are checked before timing. Integer kernels
must agree exactly, the float scatter-add to rounding.

Usage:
    python3 benchmarks/bench_kernels.py [--n 200000] [--repeats 5] [--seed 0]
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time

import numpy as np

from dipseq import _accel
from dipseq.alphabet import PAIR_CODEPOINT


def _time(fn, args, repeats):
    fn(*args)  # warm-up, includes JIT compilation on the first call
    runs = []
    for _ in range(repeats):
        t = time.perf_counter()
        fn(*args)
        runs.append(time.perf_counter() - t)
    return statistics.median(runs)


def _cases(n, rng):
    ids = rng.integers(0, 8, size=n).astype(np.int64)
    ids[rng.random(n) < 0.01] = -1
    cols = 11
    m = max(1, n // 50)
    weights = rng.random((m, cols))
    weights /= weights.sum(axis=1, keepdims=True)
    cum = np.cumsum(weights, axis=1)
    column_of = np.full(n, -1, dtype=np.int64)
    hit = rng.choice(n, size=m, replace=False)
    column_of[hit] = np.arange(m)
    ref = rng.choice([0, 2, 5, 9], size=n).astype(np.int64)
    u = rng.random((n, 2))
    table = np.asarray(PAIR_CODEPOINT, dtype=np.int32)
    # embedding-gradient shape: B*n token rows of width dim into a vocab table
    grad = np.zeros((1024, 32), dtype=np.float32)
    rows_idx = rng.integers(0, 1024, size=n // 10)
    rows = rng.normal(size=(rows_idx.size, 32)).astype(np.float32)
    return {
        "merge_pair": (ids, 3, 4, 99),
        "count_pairs": (ids, 128),
        "sample_pairs": (cum, column_of, ref, u, table),
        "scatter_add_rows": (grad, rows_idx, rows),
    }


def _kernel(name, backend):
    fn = getattr(_accel, f"{name}_{backend}")
    if name != "scatter_add_rows":
        return fn

    def fresh(out, idx, rows):
        # the kernel accumulates in place; each call starts from a copy
        out = out.copy()
        fn(out, idx, rows)
        return out

    return fresh


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200_000, help="input length (default: 200000)")
    ap.add_argument("--repeats", type=int, default=5, help="timed runs per kernel (default: 5)")
    ap.add_argument("--seed", type=int, default=0, help="input seed (default: 0)")
    args = ap.parse_args(argv)

    if _accel.numba is None:
        print("numba is not importable; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    cases = _cases(args.n, rng)
    print(f"n={args.n} repeats={args.repeats} active backend={_accel.backend()}")
    print(f"{'kernel':<18}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, call_args in cases.items():
        py, jit = _kernel(name, "numpy"), _kernel(name, "numba")
        a, b = py(*call_args), jit(*call_args)
        a, b = (a if isinstance(a, tuple) else (a,)), (b if isinstance(b, tuple) else (b,))
        same = np.allclose if a[0].dtype.kind == "f" else np.array_equal
        if not all(same(x, y) for x, y in zip(a, b)):
            print(f"{name}: numba and numpy outputs differ", file=sys.stderr)
            return 2
        t_py = _time(py, call_args, args.repeats)
        t_jit = _time(jit, call_args, args.repeats)
        print(f"{name:<18}{t_py * 1e3:>12.3f}{t_jit * 1e3:>12.3f}{t_py / t_jit:>9.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
