"""Frequentist estimators: histogram, monotone and K-jump MLEs, functionals."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import BandError, PointSet, StepFn


class EmptyBinError(ValueError):
    """A bin or block that must contain an observation is empty."""


@dataclass(frozen=True, eq=False)
class MleResult:
    """A fitted step function plus the observations on its boundary.

    ``boundary_point_indices`` index ``PointSet.xs``.  Histogram and monotone
    fits carry points lying on the graph; K-jump fits additionally carry the
    observations sitting on their vertical jump segments.
    """

    fit: StepFn
    boundary_point_indices: tuple
    model_dim: int

    @property
    def m(self) -> int:
        return len(self.boundary_point_indices)

    def to_json(self) -> dict:
        return {
            "fit": self.fit.to_json(),
            "boundary_indices": list(self.boundary_point_indices),
            "model_dim": self.model_dim,
        }

    @classmethod
    def from_json(cls, obj) -> "MleResult":
        return cls(StepFn.from_json(obj["fit"]), tuple(obj["boundary_indices"]), int(obj["model_dim"]))


def _bin_minima(ps: PointSet, grid: np.ndarray):
    """Index of the lowest point in each bin ``[g_{j-1}, g_j)``."""
    K = len(grid) - 1
    starts = np.searchsorted(ps.xs, grid, side="left")
    starts[-1] = np.searchsorted(ps.xs, grid[-1], side="right")
    counts = np.diff(starts)
    if np.any(counts == 0):
        j = int(np.flatnonzero(counts == 0)[0])
        raise EmptyBinError(f"bin {j + 1} [{grid[j]:g}, {grid[j + 1]:g}) holds no observation")
    sel = ps.ys[starts[0] : starts[-1]]
    bins = np.repeat(np.arange(K), counts)
    order = np.lexsort((sel, bins))
    first = np.concatenate([[0], np.cumsum(counts)[:-1]])
    return order[first] + starts[0]


def histogram_mle(ps: PointSet, grid: Sequence[float], check_band: bool = True) -> MleResult:
    """Blockwise minima ``a_j = min{Y_i : X_i in [t_{j-1}, t_j)}``."""
    grid = np.asarray(grid, dtype=float)
    if grid[0] != 0 or np.any(np.diff(grid) <= 0) or grid[-1] > ps.T:
        raise ValueError("grid must increase strictly from 0 to at most T")
    idx = _bin_minima(ps, grid)
    vals = ps.ys[idx]
    fit = StepFn(grid, vals)
    if check_band:
        ps.check_band(fit)
    return MleResult(fit, tuple(int(i) for i in idx), len(grid) - 1)


def monotone_mle(ps: PointSet, T: float = None, check_band: bool = True) -> MleResult:
    """Pointwise-maximal nondecreasing function below the data, constant on ``[1, T]``.

    For ``t < 1`` the value is ``min(c, min{Y_i : t <= X_i < 1})`` with
    ``c = min{Y_i : X_i in [1, T]}``, i.e. a right-to-left running minimum.
    """
    T = ps.T if T is None else T
    if T <= 1:
        raise ValueError("monotone MLE needs T > 1")
    split = int(np.searchsorted(ps.xs, 1.0, side="left"))
    if split == len(ps):
        raise ValueError("no observation with x >= 1: the likelihood is unbounded")
    tail = split + int(np.argmin(ps.ys[split:]))
    c = ps.ys[tail]
    head = ps.ys[:split]
    # minimum over strictly later points, seeded by the tail value
    later = np.append(np.minimum.accumulate(head[::-1])[::-1], c)
    later = np.minimum(later[1:], c)
    stair = np.flatnonzero(head < later)
    xs = ps.xs[stair]
    breaks = np.concatenate([[0.0], xs, [T]])
    values = np.append(ps.ys[stair], c)
    fit = StepFn(breaks, values)
    if check_band:
        ps.check_band(fit)
    idx = tuple(int(i) for i in stair) + (tail,)
    return MleResult(fit, idx, len(stair))


def kjump_mle(stair: MleResult, K: int) -> MleResult:
    """Best monotone fit with at most ``K`` jumps below the staircase.

    Dynamic programme over subsets of the staircase jump locations, O(M^2 K).
    Each segment takes the staircase value of its first piece.  Among equal
    integrals the lexicographically smallest jump set wins.
    """
    if K < 0:
        raise ValueError("K must be nonnegative")
    fit = stair.fit
    M = fit.n_pieces - 1
    if K >= M:
        return MleResult(fit, stair.boundary_point_indices, M)
    v, b = fit.values, fit.breaks
    m = M + 1
    # best[c][i]: max integral of pieces i..m-1 with exactly c cuts, segment starting at i
    best = np.full((K + 1, m), -np.inf)
    best[0] = v * (b[-1] - b[:-1])
    for c in range(1, K + 1):
        for i in range(m - c):
            # cut after piece j, j in [i, m-1-c]
            js = np.arange(i, m - c)
            cand = v[i] * (b[js + 1] - b[i]) + best[c - 1][js + 1]
            best[c][i] = cand.max()
    cuts = []
    i = 0
    for c in range(K, 0, -1):
        js = np.arange(i, m - c)
        cand = v[i] * (b[js + 1] - b[i]) + best[c - 1][js + 1]
        j = int(js[np.argmax(cand)])  # first maximiser gives the smallest location
        cuts.append(j)
        i = j + 1
    starts = [0] + [j + 1 for j in cuts]
    new_breaks = [0.0] + [float(b[j + 1]) for j in cuts] + [float(b[-1])]
    new_vals = [float(v[s]) for s in starts]
    out = StepFn(new_breaks, new_vals)
    pts = stair.boundary_point_indices  # pts[i] realises v[i]
    bnd = sorted({pts[s] for s in starts} | {pts[j] for j in cuts})
    return MleResult(out, tuple(bnd), K)


def kjump_bruteforce(stair: MleResult, K: int) -> StepFn:
    """Exhaustive search over jump subsets (test oracle, small M only)."""
    fit = stair.fit
    v, b = fit.values, fit.breaks
    M = fit.n_pieces - 1
    if K >= M:
        return fit
    best, best_cuts = -np.inf, None
    for cuts in itertools.combinations(range(M), K):
        starts = (0,) + tuple(j + 1 for j in cuts)
        ends = tuple(cuts) + (M,)
        val = sum(v[s] * (b[e + 1] - b[s]) for s, e in zip(starts, ends))
        if val > best:
            best, best_cuts = val, cuts
    starts = [0] + [j + 1 for j in best_cuts]
    return StepFn([0.0] + [b[j + 1] for j in best_cuts] + [b[-1]], [v[s] for s in starts])


def theta_naive(r: MleResult) -> float:
    return r.fit.integral()


def theta_bc(r: MleResult, n: float) -> float:
    """Bias-corrected functional: integral minus boundary count over n."""
    return r.fit.integral() - r.m / n


def theta_block(ps: PointSet, K: int, n: float = None) -> float:
    """Blockwise estimator of ``int_0^1 f`` on blocks of width ``1/K``."""
    n = ps.n if n is None else n
    grid = np.arange(K + 1) / K
    idx = _bin_minima(ps, grid)
    ystar = ps.ys[idx]
    level = ystar + 1.0 / K
    inf = ps.truth.inf_on_many(grid[:-1], grid[1:])
    if np.any(level > inf + ps.h):
        k = int(np.argmax(level - inf - ps.h))
        raise BandError(f"band height {ps.h:g} cannot resolve block {k + 1}: need {level[k] - inf[k]:g}")
    starts = np.searchsorted(ps.xs, grid, side="left")
    blk = np.repeat(np.arange(K), np.diff(starts))
    under = ps.ys[starts[0] : starts[-1]] <= level[blk]
    counts = np.bincount(blk[under], minlength=K)
    thetas = level - (K / n) * counts
    return float(np.mean(thetas))


def freq_ci(theta_block_value: float, K: int, n: float, alpha: float) -> tuple:
    """Chebyshev interval ``theta -/+ alpha^{-1/2} (2/(K n) + K/n^2)^{1/2}``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    half = math.sqrt((2 / (K * n) + K / n**2) / alpha)
    return theta_block_value - half, theta_block_value + half


def block_variance_formula(K: int, n: float) -> float:
    return 2 / (K * n) + K / n**2
