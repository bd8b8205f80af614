"""Pure-Python kernels; the reference semantics for ``_ckernels``."""
from __future__ import annotations

import math

import numpy as np


def exact_sum(a: np.ndarray) -> float:
    return math.fsum(np.asarray(a, dtype=np.float64).tolist())


def exact_sum_sq_ratio(f: np.ndarray, q: np.ndarray) -> float:
    f = np.asarray(f, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if f.shape != q.shape:
        raise ValueError("length mismatch")
    return math.fsum(((f * f) / q).tolist())


def row_stats(t: np.ndarray, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    t = np.asarray(t, dtype=np.float64)
    idx = np.asarray(idx, dtype=np.int64)
    rows, m = idx.shape
    if m == 0:
        raise ValueError("empty rows")
    means = np.empty(rows)
    stds = np.zeros(rows)
    gathered = t[idx]
    for r in range(rows):
        row = gathered[r]
        mean = math.fsum(row.tolist()) / m
        means[r] = mean
        if m > 1:
            d = row - mean
            stds[r] = math.sqrt(math.fsum((d * d).tolist()) / (m - 1))
    return means, stds


def inverse_cdf(cdf: np.ndarray, targets: np.ndarray) -> np.ndarray:
    cdf = np.asarray(cdf, dtype=np.float64)
    if cdf.size == 0:
        raise ValueError("empty cdf")
    out = np.searchsorted(cdf, np.asarray(targets, dtype=np.float64), side="right")
    return np.minimum(out, cdf.size - 1).astype(np.int64)
