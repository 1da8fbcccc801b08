"""Two-sample diagnostics and seed derivation."""
from __future__ import annotations

import math

import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    """One SplitMix64 output for state ``x``."""
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def stream_seed(master_seed: int, index: int) -> int:
    """Per-replication seed ``SplitMix64(master_seed XOR index)``."""
    return splitmix64((int(master_seed) ^ int(index)) & MASK64)


def ks_two_sample(a, b) -> float:
    """``sup_x |F_a(x) - F_b(x)|`` by a merge scan over the sorted samples."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if not len(a) or not len(b):
        raise ValueError("both samples must be nonempty")
    grid = np.concatenate([a, b])
    # ECDFs right after each sample value; ties counted fully
    fa = np.searchsorted(a, grid, side="right") / len(a)
    fb = np.searchsorted(b, grid, side="right") / len(b)
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample_bruteforce(a, b) -> float:
    """Quadratic reference: compare ECDFs at every sample point."""
    best = 0.0
    for x in list(a) + list(b):
        fa = sum(1 for v in a if v <= x) / len(a)
        fb = sum(1 for v in b if v <= x) / len(b)
        best = max(best, abs(fa - fb))
    return best


def ks_one_sample(x, cdf) -> float:
    """Kolmogorov distance between the ECDF of ``x`` and a continuous CDF."""
    x = np.sort(np.asarray(x, dtype=float))
    m = len(x)
    if not m:
        raise ValueError("sample must be nonempty")
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, m + 1)
    return float(max(np.max(i / m - f), np.max(f - (i - 1) / m)))


def default_tv_bins(na: int, nb: int) -> int:
    return max(2, math.ceil((na + nb) ** (1 / 3)))


def tv_binned(a, b, bins: int = None) -> float:
    """Half the L1 distance of histograms on a common equal-width grid."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    bins = default_tv_bins(len(a), len(b)) if bins is None else bins
    if bins < 2:
        raise ValueError("need at least two bins")
    lo = min(a.min(), b.min())
    hi = max(a.max(), b.max())
    if hi == lo:
        return 0.0
    edges = np.linspace(lo, hi, bins + 1)
    pa = np.histogram(a, edges)[0] / len(a)
    pb = np.histogram(b, edges)[0] / len(b)
    return float(0.5 * np.abs(pa - pb).sum())


def binomial_se(p: float, reps: int) -> float:
    return math.sqrt(max(p * (1 - p), 0.0) / reps)


def loglog_slope(ns, values) -> float:
    ns = np.asarray(ns, dtype=float)
    if len(ns) < 2:
        raise ValueError("slope needs at least two grid points")
    return float(np.polyfit(np.log(ns), np.log(np.asarray(values, dtype=float)), 1)[0])
