"""Posterior samplers and summaries.

The histogram posterior factorises over bins and is sampled exactly.  CPP
posteriors are explored with a reversible-jump Metropolis-Hastings chain
over ``(K, jump times, levels)``.  The chain works with levels
``b_k = a_0 + ... + a_k`` rather than jump sizes: the level map has unit
Jacobian and a level move touches a single data constraint.
"""
from __future__ import annotations

import bisect
import csv
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .mle import histogram_mle, kjump_mle, monotone_mle
from .model import PointSet, StepFn
from .prior import CppDraw, CppPrior, HistPrior


class PosteriorError(ValueError):
    """The posterior is improper or a sampler was misconfigured."""


# ---------------------------------------------------------------------------
# Histogram prior: exact sampling
# ---------------------------------------------------------------------------


def _trunc_exp(rng, rate, width, size):
    """``Exp(rate)`` truncated to ``[0, width]`` by inverse CDF."""
    u = rng.uniform(size=size)
    # expm1(-inf) = -1 recovers the untruncated case
    return -np.log1p(u * np.expm1(-rate * np.asarray(width, dtype=float))) / rate


class HistPosteriorSampler:
    """Independent per-bin sampler for the histogram-prior posterior.

    Bin ``j`` has posterior density proportional to
    ``exp(r_j a) g(a) 1(a <= a_hat_j)`` with ``r_j = n (t_j - t_{j-1})``.
    Uniform priors are sampled exactly by inverse CDF; any other prior by
    rejection from the exponential tilt with acceptance ``g(a) / sup g``.
    """

    def __init__(self, ps: PointSet, p: HistPrior):
        self.prior = p
        self.mle = histogram_mle(ps, p.grid)
        grid = np.asarray(p.grid)
        self.widths = np.diff(grid)
        self.rates = ps.n * self.widths
        # by index, since equal neighbours merge in the fitted StepFn
        self.a_hat = np.asarray(
            [ps.ys[i] for i in self.mle.boundary_point_indices]
        )
        self.n = ps.n
        g = p.g
        if g.lower >= np.min(self.a_hat):
            j = int(np.argmin(self.a_hat))
            raise PosteriorError(f"posterior support empty in bin {j + 1}: a_hat={self.a_hat[j]:g} below prior support")
        self.accept_rate = None

    @property
    def K(self):
        return self.prior.K

    def sample(self, rng: np.random.Generator, size: int, method: str = "auto") -> np.ndarray:
        """``(size, K)`` array of level draws."""
        g = self.prior.g
        if method == "auto":
            method = "exact" if g.kind == "uniform" else "rejection"
        if method == "exact":
            if g.kind != "uniform":
                raise PosteriorError("inverse-CDF sampling needs a uniform prior")
            lo, hi = g.params
            top = np.minimum(self.a_hat, hi)
            width = top - lo
            e = _trunc_exp(rng, self.rates[None, :], width[None, :], (size, self.K))
            return top[None, :] - e
        if method == "rejection":
            return self._rejection(rng, size)
        raise ValueError(f"unknown method {method!r}")

    def _rejection(self, rng, size):
        g = self.prior.g
        sup = g.sup
        out = np.empty((size, self.K))
        tried = accepted = 0
        for j in range(self.K):
            filled = 0
            while filled < size:
                m = int(1.2 * (size - filled)) + 16
                cand = self.a_hat[j] - rng.exponential(1.0 / self.rates[j], m)
                ok = rng.uniform(size=m) * sup < g.pdf(cand)
                keep = cand[ok]
                take = min(len(keep), size - filled)
                out[filled : filled + take, j] = keep[:take]
                filled += take
                tried += m
                accepted += int(ok.sum())
        self.accept_rate = accepted / tried
        return out

    def sample_theta(self, rng: np.random.Generator, size: int, method: str = "auto", chunk: int = 20000):
        """Draws of ``int f`` without holding the full ``(size, K)`` array."""
        out = np.empty(size)
        done = 0
        while done < size:
            m = min(chunk, size - done)
            out[done : done + m] = self.sample(rng, m, method) @ self.widths
            done += m
        return out

    def cdf(self, j: int, x):
        """Analytic posterior CDF of bin ``j`` under a uniform prior."""
        lo, hi = self.prior.g.params
        top = min(self.a_hat[j], hi)
        r = self.rates[j]
        x = np.clip(np.asarray(x, dtype=float), lo, top)
        return (np.exp(-r * (top - x)) - np.exp(-r * (top - lo))) / -np.expm1(-r * (top - lo))


def hist_posterior_sampler(ps: PointSet, p: HistPrior) -> HistPosteriorSampler:
    return HistPosteriorSampler(ps, p)


# ---------------------------------------------------------------------------
# Reversible-jump MCMC for CPP priors
# ---------------------------------------------------------------------------

MOVES = ("H", "T", "B", "D")


@dataclass
class RJConfig:
    iters: int = 100_000
    weights: tuple = (0.4, 0.3, 0.15, 0.15)
    burnin: Optional[int] = None  # default 20% of iters
    thin: Optional[int] = None  # default keeps about 1e4 draws
    height_scale: float = 1.0
    time_scale: float = 1.0
    birth_sd: float = 1.0
    adapt: bool = True
    target_accept: float = 0.35
    init_jumps: Optional[int] = None
    init_state: Optional[tuple] = None

    def __post_init__(self):
        if self.iters <= 0:
            raise PosteriorError("iters must be positive")
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (4,) or np.any(w < 0) or w.sum() <= 0:
            raise PosteriorError("move weights must be four nonnegative numbers, not all zero")
        self.weights = tuple((w / w.sum()).tolist())
        if self.burnin is None:
            self.burnin = self.iters // 5
        if self.thin is None:
            self.thin = max(1, (self.iters - self.burnin) // 10_000)

    @classmethod
    def parse_moves(cls, spec: str) -> tuple:
        parts = [float(v) for v in spec.split(":")]
        if len(parts) != 4:
            raise PosteriorError("moves must look like h:t:b:d")
        return tuple(parts)


@dataclass(frozen=True)
class RJState:
    """Jump times ``t`` (sorted, in (0, 1]) and levels ``b`` (one more)."""

    t: tuple
    b: tuple

    @property
    def K(self):
        return len(self.t)

    def draw(self) -> CppDraw:
        b = self.b
        return CppDraw(self.K, self.t, (b[0],) + tuple(b[i] - b[i - 1] for i in range(1, len(b))))

    def path(self, T) -> StepFn:
        return StepFn.from_jumps(self.t, self.b, T)


def _log(w: float) -> float:
    return math.log(w) if w > 0 else -math.inf


class RJTarget:
    """Unnormalised log posterior and proposal densities for a fixed data set."""

    def __init__(self, ps: PointSet, prior: CppPrior, cfg: RJConfig):
        self.ps = ps
        self.n = ps.n
        self.T = ps.T
        self.prior = prior
        self.cfg = cfg
        self.lam = prior.lam
        self.loglam = math.log(prior.lam)
        self.h = prior.h
        self.g = prior.g
        self.monotone = prior.g.lower >= 0
        self.jump_floor = max(prior.g.lower, 0.0)
        self.c_h = cfg.height_scale
        self.c_t = cfg.time_scale
        self._xs = ps.xlist
        self._rmq = ps.rmq

    # data ---------------------------------------------------------------
    def data_min(self, lo: float, hi: float) -> float:
        """Lowest y with x in ``(lo, hi]``."""
        xs = self._xs
        return self._rmq.min(bisect.bisect_right(xs, lo), bisect.bisect_right(xs, hi))

    # densities ----------------------------------------------------------
    def log_prior(self, s: RJState) -> float:
        t, b = s.t, s.b
        if s.K and (t[0] <= 0 or t[-1] > 1 or any(t[i] >= t[i + 1] for i in range(s.K - 1))):
            return -math.inf
        out = -self.lam + s.K * self.loglam + self.h.logpdf1(b[0])
        for i in range(1, len(b)):
            out += self.g.logpdf1(b[i] - b[i - 1])
        return out

    def feasible(self, s: RJState) -> bool:
        edges = (0.0,) + s.t + (self.T,)
        for j, level in enumerate(s.b):
            lo = -1.0 if j == 0 else edges[j]
            if level > self.data_min(lo, edges[j + 1]):
                return False
        return True

    def log_target(self, s: RJState) -> float:
        """``n int_0^T f + log prior`` on the feasible set, else ``-inf``."""
        lp = self.log_prior(s)
        if lp == -math.inf or not self.feasible(s):
            return -math.inf
        edges = (0.0,) + s.t + (self.T,)
        return self.n * math.fsum(b * (edges[j + 1] - edges[j]) for j, b in enumerate(s.b)) + lp

    # proposal geometry ----------------------------------------------------
    def height_sd(self, length: float) -> float:
        return self.c_h / (self.n * length)

    def time_window(self, jump: float) -> float:
        if jump == 0:
            return 1.0
        return min(self.c_t / (self.n * abs(jump)), 1.0)

    def birth_params(self, t: Sequence[float], b: Sequence[float], u: float):
        """Where a birth at ``u`` lands and the law of the new level.

        Returns ``(j, length, lower, upper, mode)``; ``mode`` is ``trunc``
        (truncated exponential below ``upper``), ``exp`` (untruncated),
        ``gauss`` (normal around the covering level, no data to the right)
        or ``None`` when no feasible level exists.
        """
        K = len(t)
        j = bisect.bisect_left(t, u)
        right = t[j] if j < K else self.T
        length = right - u
        dm = self.data_min(u, right)
        if self.monotone:
            lower = b[j] + self.jump_floor
            upper = dm if j == K else min(dm, b[j + 1] - self.jump_floor)
            if math.isinf(upper):
                return j, length, lower, upper, "gauss"
            if upper <= lower:
                return j, length, lower, upper, None
            return j, length, lower, upper, "trunc"
        if math.isinf(dm):
            return j, length, -math.inf, math.inf, "gauss"
        return j, length, -math.inf, dm, "exp"

    def birth_level_logpdf(self, params, bj: float, level: float) -> float:
        j, length, lower, upper, mode = params
        if mode is None:
            return -math.inf
        if mode == "gauss":
            sd = self.cfg.birth_sd
            z = (level - bj) / sd
            return -0.5 * z * z - math.log(sd) - 0.5 * math.log(2 * math.pi)
        if level > upper or level < lower:
            return -math.inf
        rate = self.n * length
        out = math.log(rate) - rate * (upper - level)
        if mode == "trunc":
            out -= math.log(-math.expm1(-rate * (upper - lower)))
        return out

    def sample_birth_level(self, params, bj: float, rng) -> float:
        j, length, lower, upper, mode = params
        if mode == "gauss":
            return bj + self.cfg.birth_sd * rng.standard_normal()
        rate = self.n * length
        u = rng.random()
        if mode == "trunc":
            e = -math.log1p(u * math.expm1(-rate * (upper - lower))) / rate
        else:
            e = -math.log1p(-u) / rate
        return upper - e

    def log_proposal(self, x: RJState, y: RJState) -> float:
        """``log q(x -> y)`` from the two states alone (independent route)."""
        w = [_log(v) for v in self.cfg.weights]
        if y.K == x.K + 1:
            new = [s for s in y.t if s not in x.t]
            if len(new) != 1:
                return -math.inf
            u = new[0]
            k = y.t.index(u)
            params = self.birth_params(x.t, x.b, u)
            if y.b[: k + 1] != x.b[: k + 1] or y.b[k + 2 :] != x.b[k + 1 :]:
                return -math.inf
            return w[2] + self.birth_level_logpdf(params, x.b[k], y.b[k + 1])
        if y.K == x.K - 1:
            return w[3] - math.log(x.K)
        if y.K != x.K:
            return -math.inf
        if y.t != x.t:
            diff = [i for i in range(x.K) if x.t[i] != y.t[i]]
            if len(diff) != 1 or y.b != x.b:
                return -math.inf
            k = diff[0]
            win = self.time_window(x.b[k + 1] - x.b[k])
            if abs(y.t[k] - x.t[k]) > win:
                return -math.inf
            return w[1] - math.log(x.K) - math.log(2 * win)
        diff = [i for i in range(len(x.b)) if x.b[i] != y.b[i]]
        if len(diff) != 1:
            return -math.inf
        j = diff[0]
        edges = (0.0,) + x.t + (self.T,)
        sd = self.height_sd(edges[j + 1] - edges[j])
        z = (y.b[j] - x.b[j]) / sd
        return w[0] - math.log(len(x.b)) - 0.5 * z * z - math.log(sd) - 0.5 * math.log(2 * math.pi)


@dataclass
class Chain:
    """Retained RJMCMC draws with diagnostics."""

    draws: list
    log_posterior: np.ndarray
    iters: np.ndarray
    T: float
    accepted: dict
    proposed: dict
    burnin: int
    thin: int
    scales: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.draws)

    @property
    def K(self) -> np.ndarray:
        return np.array([d.K for d in self.draws])

    def acceptance(self) -> dict:
        return {m: (self.accepted[m] / self.proposed[m] if self.proposed[m] else float("nan")) for m in MOVES}

    def paths(self):
        return [RJState(d.t, tuple(d.levels.tolist())).path(self.T) for d in self.draws]

    def validate(self, ps: PointSet, every: int = 1) -> None:
        """Raise unless every checked draw lies below the data."""
        for i in range(0, len(self.draws), every):
            d = self.draws[i]
            f = d.path(self.T)
            if len(ps) and np.any(f.eval(ps.xs) > ps.ys):
                raise PosteriorError(f"draw {i} violates the data constraint")
            if not np.isfinite(self.log_posterior[i]):
                raise PosteriorError(f"draw {i} has non-finite log posterior")

    def to_csv(self, path) -> None:
        th01 = posterior_functional(self, "integral01")
        th0T = posterior_functional(self, "integral0T")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "K", "theta01", "theta0T", "logpost"])
            for it, d, a, b, lp in zip(self.iters, self.draws, th01, th0T, self.log_posterior):
                w.writerow([int(it), d.K, repr(float(a)), repr(float(b)), repr(float(lp))])

    def to_json(self, every: int = 1) -> dict:
        return {
            "T": self.T,
            "burnin": self.burnin,
            "thin": self.thin,
            "acceptance": self.acceptance(),
            "draws": [{"iter": int(self.iters[i]), "t": list(self.draws[i].t), "a": list(self.draws[i].a)}
                      for i in range(0, len(self.draws), every)],
        }


def _initial_state(ps: PointSet, prior: CppPrior, cfg: RJConfig) -> RJState:
    if cfg.init_state is not None:
        t, b = cfg.init_state
        return RJState(tuple(float(v) for v in t), tuple(float(v) for v in b))
    stair = monotone_mle(ps, check_band=False)
    k0 = cfg.init_jumps
    if k0 is None:
        k0 = max(0, int(round(prior.lam)))
    fit = kjump_mle(stair, k0).fit
    t = tuple(fit.breaks[1:-1].tolist())
    b = list(fit.values.tolist())
    # keep jumps inside the prior support
    if prior.g.lower > 0:
        keep_t, keep_b = [], [b[0]]
        for ti, bi in zip(t, b[1:]):
            if bi - keep_b[-1] >= prior.g.lower:
                keep_t.append(ti)
                keep_b.append(bi)
        t, b = tuple(keep_t), keep_b
    if prior.h.lower > -math.inf and b[0] < prior.h.lower:
        raise PosteriorError("staircase start value lies outside the start-density support")
    return RJState(t, tuple(b))


class RJMoves(RJTarget):
    """The four proposals with their local Metropolis-Hastings ratios.

    Each ``move_*`` takes the current jump list ``t`` and level list ``b``
    and returns ``(t_new, b_new, log_ratio, d_target)`` or ``None`` when the
    proposal leaves the support.  ``d_target`` is the change in the log
    target, ``log_ratio`` adds the proposal correction.
    """

    def __init__(self, ps, prior, cfg):
        super().__init__(ps, prior, cfg)
        self.log_w = tuple(_log(w) for w in cfg.weights)

    def _d_prior_level(self, b, j, new):
        g = self.g.logpdf1
        K = len(b) - 1
        if j == 0:
            out = self.h.logpdf1(new) - self.h.logpdf1(b[0])
        else:
            out = g(new - b[j - 1]) - g(b[j] - b[j - 1])
        if j < K:
            out += g(b[j + 1] - new) - g(b[j + 1] - b[j])
        return out

    def move_height(self, t, b, rng):
        K = len(t)
        j = int(rng.integers(K + 1))
        lo = t[j - 1] if j > 0 else 0.0
        hi = t[j] if j < K else self.T
        length = hi - lo
        new = b[j] + self.c_h / (self.n * length) * rng.standard_normal()
        if new > self.data_min(lo if j > 0 else -1.0, hi):
            return None
        d = self.n * (new - b[j]) * length + self._d_prior_level(b, j, new)
        b2 = list(b)
        b2[j] = new
        return list(t), b2, d, d

    def move_time(self, t, b, rng):
        K = len(t)
        if not K:
            return None
        k = int(rng.integers(K))
        jump = b[k + 1] - b[k]
        new = t[k] + self.time_window(jump) * (2 * rng.random() - 1)
        left = t[k - 1] if k > 0 else 0.0
        right = t[k + 1] if k + 1 < K else 1.0
        if not (left < new < right or (k + 1 == K and left < new <= 1.0)):
            return None
        if new > t[k]:
            ok = b[k] <= self.data_min(t[k], new)
        else:
            ok = b[k + 1] <= self.data_min(new, t[k])
        if not ok:
            return None
        d = -self.n * jump * (new - t[k])
        t2 = list(t)
        t2[k] = new
        return t2, list(b), d, d

    def move_birth(self, t, b, rng):
        K = len(t)
        u = rng.random()
        if u <= 0 or u in t:
            return None
        params = self.birth_params(t, b, u)
        if params[4] is None:
            return None
        j = params[0]
        new = self.sample_birth_level(params, b[j], rng)
        lq = self.birth_level_logpdf(params, b[j], new)
        if lq == -math.inf:
            return None
        g = self.g.logpdf1
        d_prior = self.loglam + g(new - b[j])
        if j < K:
            d_prior += g(b[j + 1] - new) - g(b[j + 1] - b[j])
        d = self.n * (new - b[j]) * params[1] + d_prior
        ratio = d + self.log_w[3] - math.log(K + 1) - self.log_w[2] - lq
        t2 = list(t)
        t2.insert(j, u)
        b2 = list(b)
        b2.insert(j + 1, new)
        return t2, b2, ratio, d

    def move_death(self, t, b, rng):
        K = len(t)
        if not K:
            return None
        k = int(rng.integers(K))  # removes t[k] and the level b[k+1]
        right = t[k + 1] if k + 1 < K else self.T
        if b[k] > self.data_min(t[k], right):
            return None
        t2 = t[:k] + t[k + 1 :]
        b2 = b[: k + 1] + b[k + 2 :]
        lq = self.birth_level_logpdf(self.birth_params(t2, b2, t[k]), b[k], b[k + 1])
        if lq == -math.inf:
            return None
        g = self.g.logpdf1
        d_prior = -self.loglam - g(b[k + 1] - b[k])
        if k + 1 < K:
            d_prior += g(b[k + 2] - b[k]) - g(b[k + 2] - b[k + 1])
        d = -self.n * (b[k + 1] - b[k]) * (right - t[k]) + d_prior
        ratio = d + self.log_w[2] + lq - self.log_w[3] + math.log(K)
        return t2, b2, ratio, d

    def propose(self, move: str, t, b, rng):
        return {"H": self.move_height, "T": self.move_time, "B": self.move_birth, "D": self.move_death}[move](
            t, b, rng
        )


def rjmcmc(ps: PointSet, p: CppPrior, cfg: RJConfig = None, rng: np.random.Generator = None) -> Chain:
    """Reversible-jump sampler for ``exp(n int f) 1(f <= data) dPi(f)``.

    Moves: H (one level, Gaussian random walk with scale ``c/(n L)``), T (one
    jump time, uniform window ``c/(n |a_k|)``), B (birth at ``u ~ U[0,1]``,
    new level below the data minimum to its right), D (death merging a jump
    into its left neighbour).  Proposals leaving the data envelope are
    rejected.  Scales ``c`` adapt during burn-in, then freeze.
    """
    cfg = RJConfig() if cfg is None else cfg
    rng = np.random.default_rng(rng)
    mv = RJMoves(ps, p, cfg)
    state = _initial_state(ps, p, cfg)
    lp = mv.log_target(state)
    if not math.isfinite(lp):
        raise PosteriorError("initial state has zero posterior density")
    t, b = list(state.t), list(state.b)
    fns = (mv.move_height, mv.move_time, mv.move_birth, mv.move_death)
    cum = np.cumsum(cfg.weights)
    acc = dict.fromkeys(MOVES, 0)
    prop = dict.fromkeys(MOVES, 0)
    batch = {"H": [0, 0], "T": [0, 0]}
    draws, lps, its = [], [], []
    u_moves = rng.random(cfg.iters)
    u_acc = np.log(rng.random(cfg.iters))
    for it in range(cfg.iters):
        i = int(np.searchsorted(cum, u_moves[it], side="right"))
        i = min(i, 3)
        move = MOVES[i]
        prop[move] += 1
        res = fns[i](t, b, rng)
        ok = res is not None and (res[2] >= 0 or u_acc[it] < res[2])
        if ok:
            t, b = res[0], res[1]
            lp += res[3]
            acc[move] += 1
        if move in batch and (res is not None or move == "H" or t):
            batch[move][0] += ok
            batch[move][1] += 1
        if cfg.adapt and it < cfg.burnin:
            for m, attr in (("H", "c_h"), ("T", "c_t")):
                if batch[m][1] >= 100:
                    rate = batch[m][0] / batch[m][1]
                    setattr(mv, attr, getattr(mv, attr) * math.exp(rate - cfg.target_accept))
                    batch[m] = [0, 0]
        if it >= cfg.burnin and (it - cfg.burnin) % cfg.thin == 0:
            draws.append(RJState(tuple(t), tuple(b)).draw())
            lps.append(lp)
            its.append(it)
    return Chain(
        draws, np.array(lps), np.array(its), mv.T, acc, prop, cfg.burnin, cfg.thin,
        scales={"height": mv.c_h, "time": mv.c_t},
    )


# ---------------------------------------------------------------------------
# Summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CredibleInterval:
    lower: float
    upper: float
    alpha: float
    method: str

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError("lower must not exceed upper")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")

    def __contains__(self, x) -> bool:
        return self.lower <= x <= self.upper

    @property
    def length(self) -> float:
        return self.upper - self.lower


def posterior_functional(c: Chain, which: str = "integral0T") -> np.ndarray:
    if not len(c):
        raise PosteriorError("chain holds no retained draws")
    if which == "integral0T":
        return np.array([d.integral(c.T) for d in c.draws])
    if which == "integral01":
        return np.array([d.integral(c.T, 1.0) for d in c.draws])
    raise ValueError(f"unknown functional {which!r}")


def credible_interval(samples, alpha: float) -> CredibleInterval:
    """Equal-tailed interval from empirical quantiles (type 7)."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    samples = np.asarray(samples, dtype=float)
    if len(samples) < 100 / alpha:
        raise PosteriorError(f"need at least {math.ceil(100 / alpha)} samples, got {len(samples)}")
    lo, hi = np.quantile(samples, [alpha / 2, 1 - alpha / 2])
    return CredibleInterval(float(lo), float(hi), alpha, "quantile")


def ialpha(theta_mle: float, K: int, n: float, alpha: float) -> CredibleInterval:
    """Plug-in interval centred at ``theta_mle - K/n`` with sd ``sqrt(K)/n``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    z = stats.norm.ppf(1 - alpha / 2)
    centre = theta_mle - K / n
    half = math.sqrt(K) / n * z
    return CredibleInterval(centre - half, centre + half, alpha, "ialpha-plugin")


def effective_sample_size(x) -> float:
    """Autocorrelation ESS with Geyer's initial positive sequence."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = x.var()
    if var == 0:
        return float(n)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    total = 0.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair < 0:
            break
        total += pair
    tau = max(2 * total - 1, 1e-12)
    return float(min(n / tau, n))


def posterior_k_distribution(c: Chain) -> dict:
    """Empirical pmf of ``K`` with ESS-based standard errors."""
    ks = c.K
    out = {}
    for k in np.unique(ks):
        ind = (ks == k).astype(float)
        p = ind.mean()
        ess = effective_sample_size(ind) if 0 < p < 1 else len(ks)
        out[int(k)] = (float(p), float(math.sqrt(p * (1 - p) / ess)))
    return out
