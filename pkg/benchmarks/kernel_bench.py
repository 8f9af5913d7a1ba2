"""Timing comparison of the compiled and pure-numpy hot-kernel backends.

Each workload is shaped like the real call site: split scans over a
value-sorted training column, leaf routing for a full test batch, and KDE
evaluation at the point caps the density model uses. Backends must agree
before a timing is reported: exactly for scan_sorted and apply_tree, to
float tolerance for kde_sum (numpy's vectorized exp and libm's scalar exp
round some terms differently by one ulp).

Run:  python benchmarks/kernel_bench.py [--repeat N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from landmark_rca._kernels import pyk

try:
    from landmark_rca._kernels import _ck
except ImportError:
    _ck = None


def _time(fn, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _synthetic_tree(depth: int, n_features: int, rng: np.random.Generator):
    # Heap-layout complete tree: internal nodes first, then one leaf per slot.
    n_int = 2**depth - 1
    n_nodes = n_int + 2**depth
    feature = np.full(n_nodes, -1, dtype=np.int32)
    feature[:n_int] = rng.integers(0, n_features, size=n_int)
    threshold = np.zeros(n_nodes, dtype=np.float64)
    threshold[:n_int] = rng.standard_normal(n_int)
    left = np.zeros(n_nodes, dtype=np.int32)
    right = np.zeros(n_nodes, dtype=np.int32)
    idx = np.arange(n_int, dtype=np.int32)
    left[:n_int] = 2 * idx + 1
    right[:n_int] = 2 * idx + 2
    return feature, threshold, left, right


def workloads(rng: np.random.Generator):
    n, n_classes, min_leaf = 38_000, 60, 64
    values = np.sort(rng.standard_normal(n))
    labels = np.ascontiguousarray(rng.integers(0, n_classes, size=n), dtype=np.int32)
    yield (
        f"scan_sorted  root node   n={n}",
        lambda b: b.scan_sorted(values, labels, n_classes, min_leaf),
    )
    vals_small = values[:2_000].copy()
    labs_small = labels[:2_000].copy()
    yield (
        "scan_sorted  deep node    n=2000",
        lambda b: b.scan_sorted(vals_small, labs_small, n_classes, min_leaf),
    )

    n_features = 300
    tree = _synthetic_tree(12, n_features, rng)
    X = np.ascontiguousarray(rng.standard_normal((10_000, n_features)))
    yield (
        "apply_tree   depth 12     rows=10000",
        lambda b: b.apply_tree(*tree, X),
    )

    for cap in (256, 512):
        points = np.sort(rng.standard_normal(cap))
        queries = np.ascontiguousarray(rng.standard_normal(2_880))
        yield (
            f"kde_sum      points={cap:<4} queries=2880",
            lambda b, p=points, q=queries: b.kde_sum(p, 4.0, q),
        )


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5, help="best-of-N timing")
    args = ap.parse_args()

    if _ck is None:
        print("compiled backend not built; nothing to compare (pip install -e .)")
        return 1

    rng = np.random.Generator(np.random.PCG64(0))
    rows = []
    for name, call in workloads(rng):
        got_c = call(_ck)
        got_py = call(pyk)
        if isinstance(got_c, tuple):
            agree = got_c == got_py
        elif name.startswith("kde_sum"):
            agree = np.allclose(got_c, got_py, rtol=1e-12, atol=0.0)
        else:
            agree = np.array_equal(got_c, got_py)
        if not agree:
            print(f"{name}: BACKEND MISMATCH")
            print(f"  compiled: {got_c!r}")
            print(f"  python:   {got_py!r}")
            return 1
        t_c = _time(lambda: call(_ck), args.repeat)
        t_py = _time(lambda: call(pyk), args.repeat)
        rows.append((name, t_c, t_py))

    print(f"{'workload':<40} {'compiled':>10} {'python':>10} {'speedup':>8}")
    for name, t_c, t_py in rows:
        print(f"{name:<40} {t_c * 1e3:>8.2f}ms {t_py * 1e3:>8.2f}ms {t_py / t_c:>7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
