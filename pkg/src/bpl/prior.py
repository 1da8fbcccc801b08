"""Priors on boundary functions: random histograms, CPPs and Gamma subordinators."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .model import StepFn


# ---------------------------------------------------------------------------
# One-dimensional densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Density:
    """Univariate density, one of a handful of closed-form families.

    ``kind``/``params``:
      uniform (lo, hi); gaussian (mu, sigma); exponential (rate);
      gamma (shape, rate); table (xs, ps, beta, const);
      gamma_levy (c, beta, delta) -- the Levy density ``c x^-1 e^{-beta x}``
      restricted to ``[delta, inf)`` and normalised.
    """

    kind: str
    params: tuple

    # constructors -------------------------------------------------------
    @classmethod
    def uniform(cls, lo, hi):
        if not hi > lo:
            raise ValueError("need hi > lo")
        return cls("uniform", (float(lo), float(hi)))

    @classmethod
    def gaussian(cls, mu, sigma):
        if sigma <= 0:
            raise ValueError("sigma must be positive")
        return cls("gaussian", (float(mu), float(sigma)))

    @classmethod
    def exponential(cls, rate=1.0):
        return cls("exponential", (float(rate),))

    @classmethod
    def gamma(cls, shape, rate=1.0):
        return cls("gamma", (float(shape), float(rate)))

    @classmethod
    def gamma_levy(cls, c, beta, delta):
        if delta <= 0:
            raise ValueError("truncation delta must be positive")
        return cls("gamma_levy", (float(c), float(beta), float(delta)))

    @classmethod
    def table(cls, xs, ps, beta, const):
        """Piecewise-linear density through ``(xs, ps)``, zero outside.

        The table must integrate to one within 1e-8 and satisfy the declared
        Hoelder bound ``|g(x) - g(y)| <= const |x - y|^beta`` on the nodes.
        """
        xs = np.asarray(xs, dtype=float)
        ps = np.asarray(ps, dtype=float)
        if xs.ndim != 1 or xs.shape != ps.shape or len(xs) < 2 or np.any(np.diff(xs) <= 0):
            raise ValueError("table needs strictly increasing xs with matching ps")
        if np.any(ps < 0):
            raise ValueError("table density must be nonnegative")
        mass = float(np.trapezoid(ps, xs))
        if abs(mass - 1) > 1e-8:
            raise ValueError(f"table density integrates to {mass!r}, not 1")
        if not 0 < beta <= 1:
            raise ValueError("Hoelder exponent must lie in (0, 1]")
        ext_x = np.concatenate([[xs[0] - 1.0], xs, [xs[-1] + 1.0]])
        ext_p = np.concatenate([[0.0], ps, [0.0]])
        dx = np.abs(ext_x[:, None] - ext_x[None, :])
        dp = np.abs(ext_p[:, None] - ext_p[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(dx > 0, dp / dx**beta, 0.0)
        if ratio.max() > const * (1 + 1e-12):
            raise ValueError(f"table violates the declared Hoelder bound: {ratio.max():g} > {const:g}")
        return cls("table", (tuple(xs.tolist()), tuple(ps.tolist()), float(beta), float(const)))

    # evaluation ---------------------------------------------------------
    @property
    def lower(self) -> float:
        if self.kind == "uniform":
            return self.params[0]
        if self.kind in ("exponential", "gamma"):
            return 0.0
        if self.kind == "gamma_levy":
            return self.params[2]
        if self.kind == "table":
            return self.params[0][0]
        return -math.inf

    @property
    def upper(self) -> float:
        if self.kind == "uniform":
            return self.params[1]
        if self.kind == "table":
            return self.params[0][-1]
        return math.inf

    @property
    def levy_mass(self) -> float:
        c, beta, delta = self.params
        return c * float(special.exp1(beta * delta))

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        k, p = self.kind, self.params
        with np.errstate(divide="ignore", invalid="ignore"):
            if k == "uniform":
                out = np.where((x >= p[0]) & (x <= p[1]), -math.log(p[1] - p[0]), -np.inf)
            elif k == "gaussian":
                z = (x - p[0]) / p[1]
                out = -0.5 * z * z - math.log(p[1]) - 0.5 * math.log(2 * math.pi)
            elif k == "exponential":
                out = np.where(x >= 0, math.log(p[0]) - p[0] * x, -np.inf)
            elif k == "gamma":
                shape, rate = p
                out = np.where(
                    x > 0 if shape != 1 else x >= 0,
                    shape * math.log(rate) - special.gammaln(shape) + (shape - 1) * np.log(x) - rate * x,
                    -np.inf,
                )
            elif k == "gamma_levy":
                c, beta, delta = p
                out = np.where(x >= delta, math.log(c / self.levy_mass) - np.log(x) - beta * x, -np.inf)
            elif k == "table":
                xs, ps = np.array(p[0]), np.array(p[1])
                out = np.log(np.interp(x, xs, ps, left=0.0, right=0.0))
            else:
                raise ValueError(f"unknown density {k!r}")
        return float(out) if out.ndim == 0 else out

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def logpdf1(self, x: float) -> float:
        """Scalar log-density without numpy overhead (sampler hot path)."""
        k, p = self.kind, self.params
        if k == "gamma":
            shape, rate = p
            if x <= 0:
                return -math.inf if not (shape == 1 and x == 0) else math.log(rate)
            return shape * math.log(rate) - math.lgamma(shape) + (shape - 1) * math.log(x) - rate * x
        if k == "exponential":
            return math.log(p[0]) - p[0] * x if x >= 0 else -math.inf
        if k == "gaussian":
            z = (x - p[0]) / p[1]
            return -0.5 * z * z - math.log(p[1]) - 0.5 * math.log(2 * math.pi)
        if k == "uniform":
            return -math.log(p[1] - p[0]) if p[0] <= x <= p[1] else -math.inf
        if k == "gamma_levy":
            c, beta, delta = p
            if x < delta:
                return -math.inf
            return math.log(c / self.levy_mass) - math.log(x) - beta * x
        return float(self.logpdf(x))

    @property
    def sup(self) -> float:
        """Supremum of the density (rejection envelope)."""
        k, p = self.kind, self.params
        if k == "uniform":
            return 1.0 / (p[1] - p[0])
        if k == "gaussian":
            return 1.0 / (p[1] * math.sqrt(2 * math.pi))
        if k == "exponential":
            return p[0]
        if k == "gamma":
            shape, rate = p
            if shape < 1:
                return math.inf
            mode = (shape - 1) / rate
            return float(self.pdf(mode)) if shape > 1 else rate
        if k == "table":
            return max(p[1])
        if k == "gamma_levy":
            return float(self.pdf(p[2]))
        raise ValueError(k)

    @property
    def mean(self) -> float:
        k, p = self.kind, self.params
        if k == "uniform":
            return 0.5 * (p[0] + p[1])
        if k == "gaussian":
            return p[0]
        if k == "exponential":
            return 1.0 / p[0]
        if k == "gamma":
            return p[0] / p[1]
        if k == "gamma_levy":
            c, beta, delta = p
            return c * math.exp(-beta * delta) / beta / self.levy_mass
        xs, ps = np.array(p[0]), np.array(p[1])
        return float(np.trapezoid(xs * ps, xs))

    def sample(self, rng: np.random.Generator, size=None):
        k, p = self.kind, self.params
        if k == "uniform":
            return rng.uniform(p[0], p[1], size)
        if k == "gaussian":
            return rng.normal(p[0], p[1], size)
        if k == "exponential":
            return rng.exponential(1.0 / p[0], size)
        if k == "gamma":
            return rng.gamma(p[0], 1.0 / p[1], size)
        if k == "gamma_levy":
            return _sample_gamma_levy(rng, *p, size=size)
        if k == "table":
            xs, ps = np.array(p[0]), np.array(p[1])
            cdf = np.concatenate([[0.0], np.cumsum(0.5 * (ps[1:] + ps[:-1]) * np.diff(xs))])
            u = rng.uniform(size=size) * cdf[-1]
            j = np.clip(np.searchsorted(cdf, u, side="right") - 1, 0, len(xs) - 2)
            # invert the quadratic cell CDF p0 s + slope s^2 / 2 = need
            w = xs[j + 1] - xs[j]
            p0 = ps[j]
            slope = (ps[j + 1] - p0) / w
            need = u - cdf[j]
            disc = np.sqrt(np.maximum(p0 * p0 + 2 * slope * need, 0.0))
            with np.errstate(divide="ignore", invalid="ignore"):
                s = np.where(np.abs(slope) > 1e-14, 2 * need / (p0 + disc), need / p0)
            return xs[j] + np.clip(s, 0, w)
        raise ValueError(k)

    def to_json(self) -> dict:
        return {"kind": self.kind, "params": _listify(self.params)}

    @classmethod
    def from_json(cls, obj) -> "Density":
        kind, params = obj["kind"], obj["params"]
        if kind == "table":
            return cls.table(*params)
        return cls(kind, tuple(float(v) for v in params))


def _listify(x):
    if isinstance(x, tuple):
        return [_listify(v) for v in x]
    return x


def _sample_gamma_levy(rng, c, beta, delta, size=None):
    """Exact draws from ``x^-1 e^{-beta x}`` on ``[delta, inf)``.

    In ``y = beta x`` the target ``y^-1 e^{-y}`` is dominated by
    ``e^{-lo} / y`` on ``[lo, 1]`` (log-uniform proposal, accept
    ``e^{-(y - lo)}``) and by ``e^{-y} / s`` on ``[s, inf)``, ``s = max(lo, 1)``
    (``s + Exp(1)`` proposal, accept ``s / y``).  Components are picked in
    proportion to the envelope masses, not the target masses.
    """
    n = 1 if size is None else int(np.prod(size))
    lo = beta * delta
    out = np.empty(n)
    w_low = math.exp(-lo) * math.log(1.0 / lo) if lo < 1 else 0.0
    w_high = math.exp(-max(lo, 1.0)) / max(lo, 1.0)
    filled = 0
    while filled < n:
        m = 2 * (n - filled) + 16
        low = rng.uniform(size=m) < w_low / (w_low + w_high)
        y = np.empty(m)
        nl = int(low.sum())
        y[low] = lo * np.exp(rng.uniform(size=nl) * math.log(1.0 / lo)) if nl else y[low]
        start = max(lo, 1.0)
        y[~low] = start + rng.exponential(size=m - nl)
        acc = np.where(low, np.exp(-(y - lo)), start / y)
        keep = y[rng.uniform(size=m) < acc]
        take = min(len(keep), n - filled)
        out[filled : filled + take] = keep[:take] / beta
        filled += take
    return out[0] if size is None else out.reshape(size)


# ---------------------------------------------------------------------------
# Prior specifications
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HistPrior:
    """Fixed-grid histogram prior with i.i.d. level density ``g``."""

    grid: tuple
    g: Density

    def __post_init__(self):
        grid = tuple(float(v) for v in self.grid)
        if len(grid) < 2 or grid[0] != 0 or np.any(np.diff(grid) <= 0):
            raise ValueError("grid must start at 0 and increase strictly")
        object.__setattr__(self, "grid", grid)

    @property
    def K(self) -> int:
        return len(self.grid) - 1

    def to_json(self):
        return {"kind": "hist", "grid": list(self.grid), "g": self.g.to_json()}


@dataclass(frozen=True)
class CppPrior:
    """Compound Poisson process prior on ``[0, 1]``, held constant on ``[1, T]``.

    ``gamma21exp=True`` selects start ``Exp(1)`` and jumps ``Gamma(2, 1)`` and
    ignores ``h``/``g``.  ``tail_gamma``/``tail_L`` record the tail hypothesis
    of the contraction theorem; they are validated, never used.
    """

    lam: float
    h: Density = field(default_factory=lambda: Density.exponential(1.0))
    g: Density = field(default_factory=lambda: Density.gamma(2.0, 1.0))
    gamma21exp: bool = False
    tail_gamma: Optional[float] = None
    tail_L: Optional[float] = None

    def __post_init__(self):
        if not (0 < self.lam < math.inf):
            raise ValueError("intensity must be positive and finite")
        if self.gamma21exp:
            object.__setattr__(self, "h", Density.exponential(1.0))
            object.__setattr__(self, "g", Density.gamma(2.0, 1.0))
        for v in (self.tail_gamma, self.tail_L):
            if v is not None and v <= 0:
                raise ValueError("tail constants must be positive")

    @classmethod
    def gamma21(cls, lam: float = 1.0) -> "CppPrior":
        return cls(lam, gamma21exp=True)

    @property
    def monotone(self) -> bool:
        return self.g.lower >= 0

    def to_json(self):
        out = {"kind": "cpp", "lam": self.lam, "gamma21exp": self.gamma21exp}
        if not self.gamma21exp:
            out["h"] = self.h.to_json()
            out["g"] = self.g.to_json()
        return out


@dataclass(frozen=True)
class SubordinatorPrior:
    """Randomly initialised Gamma subordinator ``nu(x) = c x^-1 e^{-beta x}``."""

    c: float = 1.0
    beta: float = 1.0
    delta: float = 1e-3
    h: Density = field(default_factory=lambda: Density.exponential(1.0))

    def __post_init__(self):
        if self.delta <= 0 or self.c <= 0 or self.beta <= 0:
            raise ValueError("c, beta and delta must be positive")

    @property
    def jump_law(self) -> Density:
        return Density.gamma_levy(self.c, self.beta, self.delta)

    @property
    def lam(self) -> float:
        """Intensity of jumps of size at least delta."""
        return self.jump_law.levy_mass

    def as_cpp(self) -> CppPrior:
        return CppPrior(self.lam, h=self.h, g=self.jump_law)

    def small_jump_drift(self) -> float:
        """Expected mass per unit time of the discarded jumps below delta."""
        return self.c * (-math.expm1(-self.beta * self.delta)) / self.beta

    def to_json(self):
        return {"kind": "subordinator", "c": self.c, "beta": self.beta, "delta": self.delta, "h": self.h.to_json()}


def prior_from_json(obj):
    if isinstance(obj, str):
        obj = json.loads(obj)
    obj = obj.get("prior", obj)
    kind = obj["kind"]
    if kind == "hist":
        return HistPrior(tuple(obj["grid"]), Density.from_json(obj["g"]))
    if kind == "cpp":
        if obj.get("gamma21exp"):
            return CppPrior.gamma21(obj["lam"])
        return CppPrior(obj["lam"], Density.from_json(obj["h"]), Density.from_json(obj["g"]))
    if kind == "subordinator":
        return SubordinatorPrior(obj["c"], obj["beta"], obj["delta"], Density.from_json(obj["h"]))
    raise ValueError(f"unknown prior kind {kind!r}")


# ---------------------------------------------------------------------------
# Draws, samplers, densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CppDraw:
    """``K`` jumps at sorted times ``t`` with start value and jump sizes ``a``."""

    K: int
    t: tuple
    a: tuple

    def __post_init__(self):
        if len(self.t) != self.K or len(self.a) != self.K + 1:
            raise ValueError("need K times and K+1 heights")

    @property
    def levels(self) -> np.ndarray:
        return np.cumsum(self.a)

    def path(self, T: float) -> StepFn:
        return StepFn.from_jumps(self.t, self.levels, T)

    def integral(self, T: float, upper: Optional[float] = None) -> float:
        upper = T if upper is None else upper
        brk = np.clip(np.concatenate([[0.0], self.t, [T]]), 0, upper)
        return float(np.sum(self.levels * np.diff(brk)))


def sample_cpp(p: CppPrior, T: float, rng: np.random.Generator):
    """Draw ``(CppDraw, path)``; the path is constant on ``[1, T]``."""
    if T < 1:
        raise ValueError("T must be at least 1")
    K = int(rng.poisson(p.lam))
    t = np.sort(rng.uniform(0.0, 1.0, size=K))
    a0 = float(p.h.sample(rng))
    a = np.atleast_1d(p.g.sample(rng, K)) if K else np.empty(0)
    d = CppDraw(K, tuple(t.tolist()), (a0,) + tuple(np.asarray(a, dtype=float).tolist()))
    if T == 1 and K and t[-1] >= 1:
        raise ValueError("jump at the right end of the window")
    return d, d.path(T)


def cpp_log_density(p: CppPrior, d: CppDraw) -> float:
    """``log( e^-lam lam^K h(a_0) prod g(a_k) 1(0 <= t_1 <= ... <= t_K <= 1) )``."""
    t = d.t
    if d.K and (t[0] < 0 or t[-1] > 1 or any(t[i] > t[i + 1] for i in range(d.K - 1))):
        return -math.inf
    out = -p.lam + d.K * math.log(p.lam) + p.h.logpdf1(d.a[0])
    for a in d.a[1:]:
        out += p.g.logpdf1(a)
    return out


def sample_subordinator(p: SubordinatorPrior, T: float, rng: np.random.Generator) -> StepFn:
    """Start value plus the jumps of size at least delta, exactly.

    The jumps below delta are dropped; their expected mass per unit time is
    ``p.small_jump_drift()``.
    """
    _, path = sample_cpp(p.as_cpp(), T, rng)
    return path


def hist_prior_log_density(p: HistPrior, a: Sequence[float]) -> float:
    a = np.asarray(a, dtype=float)
    if len(a) != p.K:
        raise ValueError("wrong number of levels")
    return float(np.sum(p.g.logpdf(a)))
