"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Sizes mirror the desk-scale replicate study: a 120k-entry sampling
distribution, 100 replicates of 3000 draws.
"""
import argparse
import timeit

import numpy as np

from ranksample import _pykernels as py

try:
    from ranksample import _ckernels as c
except ImportError:  # extension not built
    c = None


def cases(rng: np.random.Generator) -> dict:
    m = 120_000
    probs = rng.dirichlet(np.ones(m))
    f = rng.random(m) * probs
    terms = f / probs
    cdf = np.cumsum(probs)
    idx = np.ascontiguousarray(rng.integers(0, m, size=(100, 3000)), dtype=np.int64)
    targets = rng.random(300_000) * cdf[-1]
    return {
        "exact_sum (120k)": lambda k: k.exact_sum(f),
        "exact_sum_sq_ratio (120k)": lambda k: k.exact_sum_sq_ratio(f, probs),
        "row_stats (100 x 3000)": lambda k: k.row_stats(terms, idx),
        "inverse_cdf (300k into 120k)": lambda k: k.inverse_cdf(cdf, targets),
    }


def _same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if c is None:
        print("compiled kernels unavailable; build with `pip install -e . --no-build-isolation`")
    print(f"{'kernel':32s} {'python ms':>10s} {'cython ms':>10s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=1, repeat=args.repeat)) * 1e3
        if c is None:
            print(f"{name:32s} {t_py:10.2f} {'-':>10s} {'-':>8s}")
            continue
        t_c = min(timeit.repeat(lambda: fn(c), number=1, repeat=args.repeat)) * 1e3
        flag = "" if _same(fn(py), fn(c)) else "  (outputs differ!)"
        print(f"{name:32s} {t_py:10.2f} {t_c:10.2f} {t_py / t_c:7.1f}x{flag}")


if __name__ == "__main__":
    main()
