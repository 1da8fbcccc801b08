"""Limit laws and closed-form oracles.

Covers the majorant process built from the truth, the exact limit of the
CPP posterior, the shifted-exponential limit of the histogram posterior,
their Gaussian functional limits, the exact finite-K coverage of the
plug-in interval, and the misspecification variable ``V_jn`` for a
linear truth.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special, stats

from .model import PointSet, StepFn


class DegenerateLimitError(ValueError):
    """The limit law is undefined for this configuration."""


@dataclass(frozen=True)
class Normal:
    mean: float
    var: float

    @property
    def sd(self) -> float:
        return math.sqrt(self.var)

    def cdf(self, x):
        return stats.norm.cdf(x, self.mean, self.sd)

    def to_json(self):
        return {"mean": self.mean, "var": self.var}


# ---------------------------------------------------------------------------
# Majorant process
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class MajorantData:
    """Truth-anchored lowest points and the majorant step function.

    ``x_star[k], y_star[k]`` (k = 0..K) is the lowest observation in
    ``[t_k, t_{k+1})``; ``x_prime[k], y_prime[k]`` (k = 1..K, index 0 holds
    the anchor ``X_0' = 0``) is the rightmost observation in ``[t_{k-1}, t_k)``
    lying below the level just after the k-th jump, or the left grid point
    when there is none.  ``prime_observed[k]`` tells which case occurred.
    """

    truth: StepFn
    jump_times: np.ndarray
    x_star: np.ndarray
    y_star: np.ndarray
    star_idx: np.ndarray
    x_prime: np.ndarray
    y_prime: np.ndarray
    prime_idx: np.ndarray
    prime_observed: np.ndarray
    majorant: StepFn

    @property
    def K(self) -> int:
        return len(self.jump_times)

    @property
    def T(self) -> float:
        return self.truth.T

    @property
    def x_edges(self) -> np.ndarray:
        """``X_0' = 0, X_1', ..., X_K', X_{K+1}' = T``."""
        return np.append(self.x_prime, self.T)

    @property
    def event_h(self) -> bool:
        """Lowest points strictly increase, as on the good event of the proofs."""
        return bool(np.all(np.diff(self.y_star) > 0))

    def boundary_indices(self) -> tuple:
        """Observations on the graph of the majorant: ``K + 1`` lowest points plus observed ``X'``."""
        extra = [int(i) for i, ok in zip(self.prime_idx[1:], self.prime_observed[1:]) if ok]
        return tuple(sorted(set(int(i) for i in self.star_idx) | set(extra)))

    def dominates_truth(self) -> bool:
        f, g = self.majorant, self.truth
        grid = np.union1d(f.breaks, g.breaks)
        mids = 0.5 * (grid[1:] + grid[:-1])
        return bool(np.all(f.eval(mids) >= g.eval(mids)))


def majorant(ps: PointSet, truth: StepFn, T: float = None) -> MajorantData:
    """Build ``(X*, Y*)``, ``(X', Y')`` and the majorant ``f~`` from the truth."""
    T = truth.T if T is None else T
    if T != truth.T:
        raise ValueError("window mismatch")
    t = truth.jump_times
    if len(t) and t[-1] > 1:
        raise ValueError("truth must be constant on [1, T]")
    K = len(t)
    edges = np.concatenate([[0.0], t, [T]])
    levels = truth.values
    starts = np.searchsorted(ps.xs, edges, side="left")
    starts[-1] = np.searchsorted(ps.xs, T, side="right")
    star_idx = np.empty(K + 1, dtype=int)
    for k in range(K + 1):
        lo, hi = int(starts[k]), int(starts[k + 1])
        if hi <= lo:
            raise ValueError(f"interval {k} [{edges[k]:g}, {edges[k + 1]:g}) holds no observation")
        star_idx[k] = lo + int(np.argmin(ps.ys[lo:hi]))
    x_prime = np.zeros(K + 1)
    y_prime = np.empty(K + 1)
    y_prime[0] = levels[0]
    prime_idx = np.full(K + 1, -1)
    observed = np.zeros(K + 1, dtype=bool)
    for k in range(1, K + 1):
        lo, hi = int(starts[k - 1]), int(starts[k])
        below = np.flatnonzero(ps.ys[lo:hi] <= levels[k])
        if len(below):
            i = lo + int(below[-1])
            x_prime[k], y_prime[k], prime_idx[k], observed[k] = ps.xs[i], ps.ys[i], i, True
        else:
            x_prime[k], y_prime[k] = edges[k - 1], levels[k - 1]
    y_star = ps.ys[star_idx]
    xe = np.append(x_prime, T)
    keep = np.diff(xe) > 0
    f = StepFn(np.append(xe[:-1][keep], T), y_star[keep])
    return MajorantData(
        truth, t.copy(), ps.xs[star_idx], y_star, star_idx, x_prime, y_prime, prime_idx, observed, f
    )


# ---------------------------------------------------------------------------
# Exact limit of the CPP posterior
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LimitDraw:
    path: StepFn
    e_star: np.ndarray
    e_prime: np.ndarray  # length K + 2 with zero ends

    def theta_decomposition(self, m: MajorantData) -> float:
        """``int f~ - sum E* dX' - sum E' dY* - sum E*_k (E'_{k+1} - E'_k)``."""
        dx = np.diff(m.x_edges)
        dy = np.diff(m.y_star)
        ep = self.e_prime
        return (
            m.majorant.integral()
            - math.fsum(self.e_star * dx)
            - math.fsum(ep[1:-1] * dy)
            - math.fsum(self.e_star * np.diff(ep))
        )


def _check_limit_inputs(m: MajorantData):
    dx = np.diff(m.x_edges)
    if np.any(dx <= 0):
        raise DegenerateLimitError("adjacent X' coincide: the limit law degenerates")
    if not m.event_h:
        raise DegenerateLimitError("lowest points Y* are not increasing")
    return dx, np.diff(m.y_star)


def sample_limit_cpp(m: MajorantData, n: float, rng: np.random.Generator) -> LimitDraw:
    """One path from the exact limit of the CPP posterior."""
    dx, dy = _check_limit_inputs(m)
    e_star = rng.exponential(1.0, m.K + 1) / (n * dx)
    e_prime = np.zeros(m.K + 2)
    if m.K:
        raw = -np.log1p(-rng.random(m.K)) / (n * dy)
        e_prime[1:-1] = np.minimum(raw, dx[1:])
    starts = m.x_prime[1:] + e_prime[1:-1]
    levels = m.y_star - e_star
    return LimitDraw(StepFn.from_jumps(starts, levels, m.T), e_star, e_prime)


def sample_limit_theta(m: MajorantData, n: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vectorised ``int_0^T f`` under the CPP limit law."""
    dx, dy = _check_limit_inputs(m)
    e_star = rng.exponential(1.0, (size, m.K + 1)) / (n * dx)
    ep = np.zeros((size, m.K + 2))
    if m.K:
        ep[:, 1:-1] = np.minimum(rng.exponential(1.0, (size, m.K)) / (n * dy), dx[1:])
    return (
        m.majorant.integral()
        - e_star @ dx
        - ep[:, 1:-1] @ dy
        - np.einsum("ij,ij->i", e_star, np.diff(ep, axis=1))
    )


# ---------------------------------------------------------------------------
# Histogram limit and Gaussian functionals
# ---------------------------------------------------------------------------


def sample_qn(a_hat, rates, rng: np.random.Generator, size=None) -> np.ndarray:
    """``a_hat_j - eta_j`` with independent ``eta_j ~ Exp(r_j)``."""
    a_hat = np.asarray(a_hat, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if np.any(rates <= 0):
        raise ValueError("rates must be positive")
    shape = a_hat.shape if size is None else (size,) + a_hat.shape
    return a_hat - rng.exponential(1.0, shape) / rates


def gauss_hist_limit(theta_mle: float, K: int, n: float) -> Normal:
    if K < 1 or n <= 0:
        raise ValueError("need K >= 1 and n > 0")
    return Normal(theta_mle - K / n, K / n**2)


def gauss_cpp_limit(integral_majorant: float, K: int, n: float) -> Normal:
    if K < 0 or n <= 0:
        raise ValueError("need K >= 0 and n > 0")
    d = 2 * K + 1
    return Normal(integral_majorant - d / n, d / n**2)


def coverage_oracle_gamma(d: int, alpha: float) -> float:
    """``P(d - sqrt(d) z <= Gamma_d <= d + sqrt(d) z)`` with ``z = z_{1-alpha/2}``."""
    if d < 1:
        raise ValueError("d must be at least 1")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    z = stats.norm.ppf(1 - alpha / 2)
    hi = d + math.sqrt(d) * z
    lo = max(d - math.sqrt(d) * z, 0.0)
    return float(special.gammainc(d, hi) - special.gammainc(d, lo))


def coverage_oracle_hist(K: int, alpha: float) -> float:
    """Exact coverage of the plug-in interval: ``int f_hat = int f_0 + Gamma_K / n``."""
    return coverage_oracle_gamma(K, alpha)


def coverage_oracle_cpp(K: int, alpha: float) -> float:
    """Analogue for the CPP Gaussian interval: ``2K + 1`` exponential overshoots."""
    return coverage_oracle_gamma(2 * K + 1, alpha)


# ---------------------------------------------------------------------------
# Misspecified linear truth
# ---------------------------------------------------------------------------


def _vjn_rate(n: float, K: float) -> float:
    if n <= 0 or K <= 0:
        raise ValueError("need n > 0 and K > 0")
    return n / (2.0 * K * K)


def vjn_survival(y, n: float, K: float):
    """``P(V >= y) = exp(-r (y ^ 1)^2 - 2 r (y - 1)_+)``, ``r = n / (2 K^2)``."""
    r = _vjn_rate(n, K)
    y = np.maximum(np.asarray(y, dtype=float), 0.0)
    return np.exp(-r * np.minimum(y, 1.0) ** 2 - 2 * r * np.maximum(y - 1.0, 0.0))


def vjn_sample(n: float, K: float, rng: np.random.Generator, size=None):
    """Inverse-CDF draws of ``V_jn``."""
    r = _vjn_rate(n, K)
    e = rng.exponential(1.0, size)
    return np.where(e <= r, np.sqrt(e / r), 1.0 + (e - r) / (2 * r))


def vjn_mean(n: float, K: float) -> float:
    """``int_0^1 exp(-r y^2) dy + exp(-r) / (2 r)`` by adaptive quadrature."""
    r = _vjn_rate(n, K)
    head, _ = integrate.quad(lambda y: math.exp(-r * y * y), 0.0, 1.0, epsabs=1e-14, epsrel=1e-12)
    return head + math.exp(-r) / (2 * r)


def vjn_second_moment(n: float, K: float) -> float:
    """``E V^2 = int_0^inf 2 y P(V >= y) dy`` by quadrature of the exact survival."""
    r = _vjn_rate(n, K)
    head, _ = integrate.quad(lambda y: 2 * y * math.exp(-r * y * y), 0.0, 1.0, epsabs=1e-14, epsrel=1e-12)
    tail, _ = integrate.quad(
        lambda y: 2 * y * math.exp(-r - 2 * r * (y - 1)), 1.0, np.inf, epsabs=1e-14, epsrel=1e-12
    )
    return head + tail


def vjn_second_moment_bound(n: float, K: float) -> float:
    return 2 * K**2 / n + 8 * K**4 / n**2


def misspec_thresholds(n: float, K: float) -> dict:
    return {
        "bias_bound": n / (2**7 * K**3),
        "rho": 2.0**-8 * min(n * K**-1.5, n**2 * K**-3.5),
    }


def linear_hist_mle_from_vjn(K: int, n: float, rng: np.random.Generator, size=None, offsets=None):
    """Histogram MLE levels for ``f_0(x) = x + a_j`` on the grid ``j/K``, via ``V_jn``.

    Level ``j`` equals ``a_j + (j - 1 + V_jn) / K``.
    """
    shape = (K,) if size is None else (size, K)
    v = vjn_sample(n, K, rng, shape)
    a = np.zeros(K) if offsets is None else np.asarray(offsets, dtype=float)
    return a + (np.arange(K) + v) / K


def block_variance_linear(K: int, n: float) -> float:
    """Exact ``Var theta_block`` for a truth of slope one, ``(E V_jn + 1/2) / (n K)``.

    Within a block the count below ``Y* + 1/K`` minus ``n`` times the area
    of that region is a stopped compensated count, which leaves the
    overshoot ``V_jn`` and a Poisson term of variance ``1/2`` (in units
    ``1/n``) per block.  The general-purpose bound ``2/(K n) + K/n^2``
    dominates it.
    """
    return (vjn_mean(n, K) + 0.5) / (n * K)


def linear_ialpha_coverage(K: int, n: float, alpha: float, rng: np.random.Generator, size: int = 200_000) -> float:
    """Coverage of the plug-in interval for ``f_0(x) = x`` from the exact ``V_jn`` law.

    ``theta_mle - theta_0 = sum_j V_jn / K^2 - 1/(2K)``, so coverage is a
    one-dimensional probability over a sum of ``K`` i.i.d. ``V_jn``.
    """
    z = stats.norm.ppf(1 - alpha / 2)
    total = np.zeros(size)
    for _ in range(K):
        total += vjn_sample(n, K, rng, size)
    err = total / K**2 - 1 / (2 * K) - K / n
    return float(np.mean(np.abs(err) <= math.sqrt(K) / n * z))
