"""Experiment runners, aggregation and on-disk outputs.

Every runner maps ``(config, replication index, n)`` to one flat record.
Aggregates are functions of the records alone, so ``aggregate.csv`` can be
recomputed from ``replications.csv``.  Statistics that need raw arrays
(pooled KS tests and the like) go to ``diagnostics.json`` instead.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import subprocess
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from scipy import stats

from . import __version__
from .limitlaw import (
    coverage_oracle_cpp,
    coverage_oracle_hist,
    gauss_cpp_limit,
    gauss_hist_limit,
    majorant,
    misspec_thresholds,
    sample_limit_theta,
    vjn_mean,
    vjn_sample,
    vjn_survival,
    DegenerateLimitError,
)
from .mle import freq_ci, histogram_mle, kjump_mle, monotone_mle, theta_block
from .model import (
    StepFn,
    Truth,
    default_band_monotone,
    default_band_pcstar,
    l1_dist_truth,
    make_ms_truth,
    simulate,
)
from .posterior import (
    HistPosteriorSampler,
    RJConfig,
    credible_interval,
    ialpha,
    posterior_functional,
    rjmcmc,
)
from .prior import CppPrior, Density, HistPrior, SubordinatorPrior, prior_from_json
from .stats import binomial_se, ks_one_sample, ks_two_sample, loglog_slope, stream_seed

SCHEMA_VERSION = "v1"

KINDS = ("coverage", "negative-linear", "cpp-limit", "negative-kink", "contract")

COLUMNS = {
    "coverage": [
        "rep", "n", "K", "seed", "theta0", "theta_mle", "m", "ialpha_lo", "ialpha_hi", "cover_ialpha",
        "post_lo", "post_hi", "cover_post", "ks_post_gauss", "theta_block", "cover_block",
    ],
    "negative-linear": [
        "rep", "n", "K", "seed", "theta0", "theta_mle", "ialpha_lo", "ialpha_hi", "cover_ialpha",
        "overshoot", "cover_post", "v_mean", "ks_v",
    ],
    "cpp-limit": [
        "rep", "n", "K", "seed", "theta0", "post_k_true", "post_k_mode", "ks_chain_limit", "ks_chain_gauss",
        "int_majorant", "int_kjump", "gauss_lo", "gauss_hi", "cover_gauss", "cover_post", "agree",
        "event_h", "acc_h", "acc_t", "acc_b", "acc_d",
    ],
    "negative-kink": [
        "rep", "n", "seed", "theta0", "post_mean", "post_q95", "mass_below", "k_mean", "k_q99",
    ],
    "contract": [
        "rep", "n", "K", "seed", "err_mean", "err_half", "mass_outside", "k_mean",
    ],
}

AGG_METRICS = {
    "coverage": [
        "reps", "cov_ialpha", "cov_ialpha_se", "oracle", "cov_post", "cov_block", "ks_post_gauss_median",
        "bias_mle", "bias_mle_se",
    ],
    "negative-linear": [
        "reps", "cov_ialpha", "cov_ialpha_se", "overshoot_rate", "cov_post", "v_mean", "v_mean_se",
        "vjn_mean", "bias_bound", "rho",
    ],
    "cpp-limit": [
        "reps", "post_k_true_mean", "ks_chain_limit_median", "ks_chain_gauss_median", "cov_gauss",
        "cov_gauss_se", "oracle", "cov_post", "agree_rate", "event_h_rate",
    ],
    "negative-kink": ["reps", "mass_below_mean", "k_q99_mean", "ctilde_max", "k_q99_slope"],
    "contract": ["reps", "err_mean", "err_se", "err_half_mean", "mass_outside_mean", "rate", "slope", "slope_half"],
}


class ConfigError(ValueError):
    """An experiment configuration is invalid."""


@dataclass
class ExperimentConfig:
    kind: str
    n: tuple
    reps: int = 100
    K: Union[int, str, None] = None
    alpha: float = 0.05
    master_seed: int = 0
    truth: Optional[dict] = None
    prior: Optional[dict] = None
    band: Optional[float] = None
    sampler: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    rate: Optional[str] = None
    outdir: Optional[str] = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; expected one of {', '.join(KINDS)}")
        ns = (self.n,) if np.isscalar(self.n) else tuple(self.n)
        self.n = tuple(float(v) for v in ns)
        if not self.n or any(v <= 0 for v in self.n):
            raise ConfigError("n-grid must hold positive values")
        if any(b <= a for a, b in zip(self.n, self.n[1:])):
            raise ConfigError("n-grid must increase")
        if int(self.reps) < 1:
            raise ConfigError("reps must be at least 1")
        self.reps = int(self.reps)
        if not 0 < self.alpha < 1:
            raise ConfigError("alpha must lie in (0, 1)")
        if self.band is not None and self.band <= 0:
            raise ConfigError("band must be positive")
        self.master_seed = int(self.master_seed) & ((1 << 64) - 1)

    @classmethod
    def from_json(cls, obj) -> "ExperimentConfig":
        if isinstance(obj, (str, Path)):
            obj = json.loads(Path(obj).read_text())
        known = set(cls.__dataclass_fields__)
        extra = set(obj) - known
        if extra:
            raise ConfigError(f"unknown config fields: {', '.join(sorted(extra))}")
        if "kind" not in obj or "n" not in obj:
            raise ConfigError("config needs 'kind' and 'n'")
        return cls(**obj)

    def to_json(self) -> dict:
        d = asdict(self)
        d["n"] = list(self.n)
        return d

    def k_for(self, n: float) -> int:
        rule = self.K
        if rule is None:
            return {"coverage": 100, "negative-linear": math.ceil(math.sqrt(n)), "cpp-limit": 3}.get(self.kind, 0)
        if isinstance(rule, (int, np.integer)):
            return int(rule)
        if rule == "sqrt":
            return math.ceil(math.sqrt(n))
        if rule == "cbrt":
            return math.ceil(n ** (1 / 3))
        raise ConfigError(f"unknown K rule {rule!r}")

    def p(self, key, default):
        return self.params.get(key, default)


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    aggregate: list  # rows (n, metric, value)
    diagnostics: dict
    seeds: list
    runtime: float

    def agg(self, metric: str, n: Optional[float] = None) -> float:
        for row_n, m, v in self.aggregate:
            if m == metric and (n is None or row_n == n or row_n == "all"):
                return v
        raise KeyError(metric)

    def column(self, name: str, n: Optional[float] = None) -> np.ndarray:
        return np.array([r[name] for r in self.records if n is None or r["n"] == n], dtype=float)


# ---------------------------------------------------------------------------
# Truth and prior helpers
# ---------------------------------------------------------------------------


def pcstar_truth(K: int, spec: Optional[dict] = None) -> Truth:
    """Step truth on the grid ``j/K``; default levels ``1 + sin(2 pi j / K) / 2``."""
    if spec is not None and spec.get("kind") not in (None, "pattern"):
        return Truth.from_json(spec)
    amp = (spec or {}).get("amplitude", 0.5)
    j = np.arange(1, K + 1)
    levels = 1.0 + amp * np.sin(2 * np.pi * j / K + 0.3)
    return Truth.from_step(StepFn(np.arange(K + 1) / K, levels))


def monotone_step_truth(K: int, T: float = 1.5, lo: float = 0.5, hi: float = 1.5) -> Truth:
    t = np.arange(1, K + 1) / (K + 1)
    levels = lo + (hi - lo) * np.arange(K + 1) / max(K, 1)
    return Truth.from_step(StepFn.from_jumps(t, levels, T))


def ms_band(n: float, f0: StepFn) -> float:
    """Default monotone band widened by the largest jump.

    Just left of a jump the staircase can sit a full jump above the truth,
    so a narrower band could drop points that would lower it.
    """
    jump = float(np.max(np.diff(f0.values))) if f0.n_pieces > 1 else 0.0
    return default_band_monotone(n) + jump


def _cpp_prior(spec: Optional[dict], delta_scale: float = 1.0):
    if spec is None:
        return CppPrior.gamma21(1.0)
    p = prior_from_json(spec)
    if isinstance(p, SubordinatorPrior):
        p = SubordinatorPrior(p.c, p.beta, p.delta * delta_scale, p.h)
        return p.as_cpp()
    if not isinstance(p, CppPrior):
        raise ConfigError("this experiment needs a CPP or subordinator prior")
    return p


def _rj_config(cfg: ExperimentConfig, **over) -> RJConfig:
    s = dict(cfg.sampler)
    s.update(over)
    if "moves" in s:
        s["weights"] = RJConfig.parse_moves(s.pop("moves")) if isinstance(s["moves"], str) else tuple(s.pop("moves"))
    return RJConfig(**s)


# ---------------------------------------------------------------------------
# Replications
# ---------------------------------------------------------------------------


def _rep_coverage(cfg: ExperimentConfig, n: float, rng) -> tuple:
    K = cfg.k_for(n)
    truth = pcstar_truth(K, cfg.truth)
    grid = np.arange(K + 1) / K
    ps = simulate(truth, n, h=cfg.band or default_band_pcstar(n, K), rng=rng)
    theta0 = truth.integral()
    r = histogram_mle(ps, grid)
    a0 = truth.eval(0.5 * (grid[:-1] + grid[1:]))
    a_hat = ps.ys[list(r.boundary_point_indices)]
    overshoot = n * np.diff(grid) * (a_hat - a0)
    th = r.fit.integral()
    iv = ialpha(th, K, n, cfg.alpha)
    R = cfg.p("prior_R", 10.0)
    samp = HistPosteriorSampler(ps, HistPrior(tuple(grid), Density.uniform(-R, R)))
    draws = max(int(cfg.p("posterior_draws", 2000)), math.ceil(100 / cfg.alpha))
    thetas = samp.sample_theta(rng, draws)
    ci = credible_interval(thetas, cfg.alpha)
    gauss = gauss_hist_limit(th, K, n)
    tb = theta_block(ps, K, n)
    lo, hi = freq_ci(tb, K, n, cfg.alpha)
    rec = dict(
        theta0=theta0, theta_mle=th, m=r.m, ialpha_lo=iv.lower, ialpha_hi=iv.upper, cover_ialpha=int(theta0 in iv),
        post_lo=ci.lower, post_hi=ci.upper, cover_post=int(theta0 in ci),
        ks_post_gauss=ks_one_sample(thetas, gauss.cdf), theta_block=tb, cover_block=int(lo <= theta0 <= hi),
    )
    return K, rec, {"overshoot": overshoot}


def _rep_negative_linear(cfg: ExperimentConfig, n: float, rng) -> tuple:
    K = cfg.k_for(n)
    truth = Truth.from_json(cfg.truth) if cfg.truth else Truth.linear(1.0, 0.0)
    if truth.kind != "linear" or truth.slope != 1 or truth.intercept != 0:
        raise ConfigError("negative-linear needs the truth f(x) = x")
    grid = np.arange(K + 1) / K
    ps = simulate(truth, n, h=cfg.band or default_band_pcstar(n, K), rng=rng)
    r = histogram_mle(ps, grid)
    a_hat = ps.ys[list(r.boundary_point_indices)]
    v = K * a_hat - np.arange(K)
    th = r.fit.integral()
    theta0 = truth.integral()
    iv = ialpha(th, K, n, cfg.alpha)
    rho = misspec_thresholds(n, K)["rho"]
    overshoot = int(theta0 <= th - K / n + math.sqrt(K) / n * rho)
    R = cfg.p("prior_R", 500.0)
    samp = HistPosteriorSampler(ps, HistPrior(tuple(grid), Density.uniform(-R, R)))
    draws = max(int(cfg.p("posterior_draws", 2000)), math.ceil(100 / cfg.alpha))
    ci = credible_interval(samp.sample_theta(rng, draws), cfg.alpha)
    rec = dict(
        theta0=theta0, theta_mle=th, ialpha_lo=iv.lower, ialpha_hi=iv.upper, cover_ialpha=int(theta0 in iv),
        overshoot=overshoot, cover_post=int(theta0 in ci), v_mean=float(v.mean()),
        ks_v=ks_one_sample(v, lambda y: 1 - vjn_survival(y, n, K)),
    )
    return K, rec, {"v": v}


def _rep_cpp_limit(cfg: ExperimentConfig, n: float, rng) -> tuple:
    K = cfg.k_for(n)
    T = cfg.p("T", 1.5)
    if cfg.truth:
        truth = Truth.from_json(cfg.truth)
    else:
        truth = Truth.from_step(make_ms_truth(K, cfg.p("R", 10.0), n, T, cfg.p("slack", 2.0)))
    f0 = truth.step
    K = len(f0.jump_times)
    ps = simulate(truth, n, h=cfg.band or ms_band(n, f0), rng=rng)
    theta0 = truth.integral()
    chain = rjmcmc(ps, _cpp_prior(cfg.prior), _rj_config(cfg), rng)
    thetas = posterior_functional(chain, "integral0T")
    ks_ = chain.K
    m = majorant(ps, f0)
    kj = kjump_mle(monotone_mle(ps), K)
    try:
        lim = sample_limit_theta(m, n, rng, int(cfg.p("limit_draws", 10_000)))
        ks_lim = ks_two_sample(thetas, lim)
    except DegenerateLimitError:
        ks_lim = float("nan")
    gauss = gauss_cpp_limit(m.majorant.integral(), K, n)
    plug = gauss_cpp_limit(kj.fit.integral(), K, n)
    z = stats.norm.ppf(1 - cfg.alpha / 2)
    g_lo, g_hi = plug.mean - z * plug.sd, plug.mean + z * plug.sd
    q_lo, q_hi = np.quantile(thetas, [cfg.alpha / 2, 1 - cfg.alpha / 2])
    acc = chain.acceptance()
    vals, counts = np.unique(ks_, return_counts=True)
    rec = dict(
        theta0=theta0, post_k_true=float(np.mean(ks_ == K)), post_k_mode=int(vals[np.argmax(counts)]),
        ks_chain_limit=ks_lim, ks_chain_gauss=ks_one_sample(thetas, gauss.cdf),
        int_majorant=m.majorant.integral(), int_kjump=kj.fit.integral(),
        gauss_lo=g_lo, gauss_hi=g_hi, cover_gauss=int(g_lo <= theta0 <= g_hi),
        cover_post=int(q_lo <= theta0 <= q_hi), agree=int(kj.fit == m.majorant), event_h=int(m.event_h),
        acc_h=acc["H"], acc_t=acc["T"], acc_b=acc["B"], acc_d=acc["D"],
    )
    return K, rec, {}


def _rep_negative_kink(cfg: ExperimentConfig, n: float, rng) -> tuple:
    truth = Truth.kink(cfg.p("T", 1.5))
    ps = simulate(truth, n, h=cfg.band or default_band_monotone(n), rng=rng)
    theta0 = truth.integral(0.0, 1.0)
    chain = rjmcmc(ps, _cpp_prior(cfg.prior), _rj_config(cfg), rng)
    th = posterior_functional(chain, "integral01")
    ct = cfg.p("ctilde", 0.0)
    cut = theta0 - ct * math.sqrt(math.log(n) / n)
    rec = dict(
        theta0=theta0, post_mean=float(th.mean()), post_q95=float(np.quantile(th, 0.95)),
        mass_below=float(np.mean(th < cut)), k_mean=float(chain.K.mean()), k_q99=float(np.quantile(chain.K, 0.99)),
    )
    return 0, rec, {}


RATES = {
    "monotone": lambda n, K: math.sqrt(math.log(n) / n),
    "pc": lambda n, K: K * math.log(n) / n,
}


def _contract_truth(cfg: ExperimentConfig, n: float):
    spec = cfg.truth or {"kind": "kink"}
    T = spec.get("T", 1.5)
    if spec["kind"] == "pc":
        K = cfg.k_for(n) if cfg.K is not None else math.ceil(n ** (1 / 3))
        return monotone_step_truth(K, T, 0.5, 0.5 + spec.get("R", 5.0)), K
    return Truth.from_json(spec), 0


def _posterior_l1(chain, truth, cap):
    draws = chain.draws
    idx = np.unique(np.linspace(0, len(draws) - 1, min(cap, len(draws))).astype(int))
    return np.array([l1_dist_truth(truth, draws[i].path(chain.T)) for i in idx])


def _rep_contract(cfg: ExperimentConfig, n: float, rng) -> tuple:
    truth, K = _contract_truth(cfg, n)
    band = ms_band(n, truth.step) if truth.kind == "step" else default_band_monotone(n)
    ps = simulate(truth, n, h=cfg.band or band, rng=rng)
    cap = int(cfg.p("l1_draws", 200))
    init = cfg.sampler.get("init_jumps", math.ceil(math.sqrt(n / math.log(n))))
    chain = rjmcmc(ps, _cpp_prior(cfg.prior), _rj_config(cfg, init_jumps=init), rng)
    err = _posterior_l1(chain, truth, cap)
    err_half = float("nan")
    if cfg.p("delta_halving", False):
        ch2 = rjmcmc(ps, _cpp_prior(cfg.prior, 0.5), _rj_config(cfg, init_jumps=init), rng)
        err_half = float(_posterior_l1(ch2, truth, cap).mean())
    rate = RATES[cfg.rate or ("pc" if K else "monotone")](n, K)
    M = cfg.p("M", 5.0)
    rec = dict(err_mean=float(err.mean()), err_half=err_half, mass_outside=float(np.mean(err > M * rate)),
               k_mean=float(chain.K.mean()))
    return K, rec, {}


RUNNERS = {
    "coverage": _rep_coverage,
    "negative-linear": _rep_negative_linear,
    "cpp-limit": _rep_cpp_limit,
    "negative-kink": _rep_negative_kink,
    "contract": _rep_contract,
}


def _one(args):
    cfg, index, n, r = args
    seed = stream_seed(cfg.master_seed, index)
    rng = np.random.default_rng(seed)
    K, rec, extra = RUNNERS[cfg.kind](cfg, n, rng)
    full = {"rep": r, "n": n, "K": K, "seed": seed}
    full.update(rec)
    return {c: full[c] for c in COLUMNS[cfg.kind]}, extra


def threads() -> int:
    env = os.environ.get("BPL_THREADS")
    cap = os.cpu_count() or 1
    if env:
        try:
            return max(1, min(int(env), cap))
        except ValueError:
            raise ConfigError("BPL_THREADS must be an integer")
    return cap


def run(cfg: ExperimentConfig, workers: Optional[int] = None) -> ExperimentResult:
    """Run every replication for every n and aggregate."""
    t0 = time.perf_counter()
    tasks = [(cfg, i * cfg.reps + r, n, r) for i, n in enumerate(cfg.n) for r in range(cfg.reps)]
    workers = threads() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(workers) as ex:
            out = list(ex.map(_one, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        out = [_one(t) for t in tasks]
    records = [o[0] for o in out]
    extras = [o[1] for o in out]
    agg = aggregate(cfg, records)
    diag = diagnostics(cfg, records, extras)
    seeds = [rec["seed"] for rec in records]
    return ExperimentResult(cfg, records, agg, diag, seeds, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Aggregation
# ---------------------------------------------------------------------------


def _col(records, name):
    return np.array([float(r[name]) for r in records])


def _mean_se(x):
    x = x[np.isfinite(x)]
    if not len(x):
        return float("nan"), float("nan")
    se = float(x.std(ddof=1) / math.sqrt(len(x))) if len(x) > 1 else float("nan")
    return float(x.mean()), se


def aggregate(cfg: ExperimentConfig, records: list) -> list:
    """Rows ``(n, metric, value)`` computed from the records only."""
    rows = []
    by_n = {}
    for rec in records:
        by_n.setdefault(float(rec["n"]), []).append(rec)
    per_n = {}
    for n, recs in by_n.items():
        vals = _aggregate_one(cfg, n, recs)
        per_n[n] = vals
        rows.extend((n, k, vals[k]) for k in AGG_METRICS[cfg.kind] if k in vals)
    ns = sorted(per_n)
    if cfg.kind == "negative-kink" and len(ns) > 1:
        rows.append(("all", "k_q99_slope", loglog_slope(ns, [per_n[n]["k_q99_mean"] for n in ns])))
    if cfg.kind == "contract" and len(ns) > 1:
        rows.append(("all", "slope", loglog_slope(ns, [per_n[n]["err_mean"] for n in ns])))
        half = [per_n[n]["err_half_mean"] for n in ns]
        if all(np.isfinite(half)):
            rows.append(("all", "slope_half", loglog_slope(ns, half)))
    return rows


def _aggregate_one(cfg, n, recs) -> dict:
    out = {"reps": len(recs)}
    kind = cfg.kind
    if kind == "coverage":
        K = int(recs[0]["K"])
        p = _col(recs, "cover_ialpha").mean()
        bias, bias_se = _mean_se(_col(recs, "theta_mle") - _col(recs, "theta0") - K / n)
        out.update(
            cov_ialpha=p, cov_ialpha_se=binomial_se(p, len(recs)), oracle=coverage_oracle_hist(K, cfg.alpha),
            cov_post=_col(recs, "cover_post").mean(), cov_block=_col(recs, "cover_block").mean(),
            ks_post_gauss_median=float(np.median(_col(recs, "ks_post_gauss"))), bias_mle=bias, bias_mle_se=bias_se,
        )
    elif kind == "negative-linear":
        K = int(recs[0]["K"])
        p = _col(recs, "cover_ialpha").mean()
        vm, vse = _mean_se(_col(recs, "v_mean"))
        th = misspec_thresholds(n, K)
        out.update(
            cov_ialpha=p, cov_ialpha_se=binomial_se(p, len(recs)), overshoot_rate=_col(recs, "overshoot").mean(),
            cov_post=_col(recs, "cover_post").mean(), v_mean=vm, v_mean_se=vse, vjn_mean=vjn_mean(n, K),
            bias_bound=th["bias_bound"], rho=th["rho"],
        )
    elif kind == "cpp-limit":
        K = int(recs[0]["K"])
        p = _col(recs, "cover_gauss").mean()
        out.update(
            post_k_true_mean=_col(recs, "post_k_true").mean(),
            ks_chain_limit_median=float(np.nanmedian(_col(recs, "ks_chain_limit"))),
            ks_chain_gauss_median=float(np.median(_col(recs, "ks_chain_gauss"))),
            cov_gauss=p, cov_gauss_se=binomial_se(p, len(recs)), oracle=coverage_oracle_cpp(K, cfg.alpha),
            cov_post=_col(recs, "cover_post").mean(), agree_rate=_col(recs, "agree").mean(),
            event_h_rate=_col(recs, "event_h").mean(),
        )
    elif kind == "negative-kink":
        q95 = _col(recs, "post_q95")
        theta0 = float(recs[0]["theta0"])
        out.update(
            mass_below_mean=_col(recs, "mass_below").mean(), k_q99_mean=_col(recs, "k_q99").mean(),
            # largest c with q95 below theta0 - c sqrt(log n / n) on every replication
            ctilde_max=float(np.min((theta0 - q95) / math.sqrt(math.log(n) / n))),
        )
    elif kind == "contract":
        err, se = _mean_se(_col(recs, "err_mean"))
        K = int(recs[0]["K"])
        out.update(
            err_mean=err, err_se=se, err_half_mean=float(np.mean(_col(recs, "err_half"))),
            mass_outside_mean=_col(recs, "mass_outside").mean(),
            rate=RATES[cfg.rate or ("pc" if K else "monotone")](n, K),
        )
    return out


def diagnostics(cfg: ExperimentConfig, records: list, extras: list) -> dict:
    out = {}
    if cfg.kind == "coverage":
        pooled = np.concatenate([e["overshoot"] for e in extras])
        out["overshoot_ks_exp1"] = ks_one_sample(pooled, stats.expon.cdf)
        out["overshoot_count"] = int(len(pooled))
    if cfg.kind == "negative-linear":
        for n in cfg.n:
            v = np.concatenate([e["v"] for rec, e in zip(records, extras) if rec["n"] == n])
            K = int(next(r["K"] for r in records if r["n"] == n))
            rng = np.random.default_rng(stream_seed(cfg.master_seed, 1 << 40))
            ref = vjn_sample(n, K, rng, len(v))
            key = f"n={n:g}"
            out[key] = {
                "v_ks_exact_cdf": ks_one_sample(v, lambda y: 1 - vjn_survival(y, n, K)),
                "v_ks_reconstruction": ks_two_sample(v, ref),
                "v_count": int(len(v)),
            }
    return out


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, str):
        return v
    v = float(v)
    if v.is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(v)


def records_csv(kind: str, records: list) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS[kind])
    for r in records:
        w.writerow([_fmt(r[c]) for c in COLUMNS[kind]])
    return buf.getvalue()


def aggregate_csv(rows: list) -> str:
    buf = io.StringIO()
    buf.write(f"# schema={SCHEMA_VERSION}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n", "metric", "value"])
    for n, m, v in rows:
        w.writerow([_fmt(n), m, _fmt(v)])
    return buf.getvalue()


def read_records(path) -> tuple:
    """``(kind-agnostic header, list of dict rows)`` from a replications file."""
    lines = Path(path).read_text().splitlines()
    if not lines or not lines[0].startswith("# schema="):
        raise ConfigError("missing schema header")
    if lines[0] != f"# schema={SCHEMA_VERSION}":
        raise ConfigError(f"unsupported {lines[0][2:]}")
    rows = list(csv.DictReader(lines[1:]))
    return list(rows[0].keys()) if rows else [], rows


def kind_from_columns(cols) -> str:
    for k, c in COLUMNS.items():
        if list(cols) == c:
            return k
    raise ConfigError("columns match no known experiment schema")


def version_string() -> str:
    try:
        desc = subprocess.run(
            ["git", "describe", "--always", "--dirty"], capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        ).stdout.strip()
    except (OSError, subprocess.SubprocessError):
        desc = ""
    return f"{__version__}-{desc}" if desc else __version__


def write_outputs(res: ExperimentResult, outdir) -> Path:
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    cfg = res.config
    (out / "replications.csv").write_text(records_csv(cfg.kind, res.records))
    (out / "aggregate.csv").write_text(aggregate_csv(res.aggregate))
    (out / "diagnostics.json").write_text(json.dumps(res.diagnostics, indent=2, sort_keys=True))
    bands = {}
    for n in cfg.n:
        if cfg.band is not None:
            bands[f"{n:g}"] = cfg.band
        elif cfg.kind in ("coverage", "negative-linear"):
            bands[f"{n:g}"] = default_band_pcstar(n, cfg.k_for(n))
        elif cfg.kind == "cpp-limit" and not cfg.truth:
            K = cfg.k_for(n)
            f0 = make_ms_truth(K, cfg.p("R", 10.0), n, cfg.p("T", 1.5), cfg.p("slack", 2.0))
            bands[f"{n:g}"] = ms_band(n, f0)
        elif cfg.kind == "contract":
            truth, _ = _contract_truth(cfg, n)
            bands[f"{n:g}"] = ms_band(n, truth.step) if truth.kind == "step" else default_band_monotone(n)
        else:
            bands[f"{n:g}"] = default_band_monotone(n)
    manifest = {
        "config": cfg.to_json(),
        "version": version_string(),
        "seed_scheme": "splitmix64(master_seed xor replication_index)",
        "seeds": [int(s) for s in res.seeds],
        "band": bands,
        "runtime_seconds": round(res.runtime, 3),
        "schema": SCHEMA_VERSION,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2))
    return out


def recompute_aggregate(cfg: ExperimentConfig, replications_path) -> list:
    """Re-derive aggregate rows from a replications file."""
    cols, rows = read_records(replications_path)
    recs = [{c: float(r[c]) for c in cols} for r in rows]
    return aggregate(cfg, recs)


def schema_text() -> str:
    lines = [f"schema {SCHEMA_VERSION}"]
    for k in KINDS:
        lines.append(f"{k}:")
        lines.append("  replications.csv: " + ",".join(COLUMNS[k]))
        lines.append("  aggregate.csv metrics: " + ",".join(AGG_METRICS[k]))
    lines.append("negative-kink: aggregate row n=all holds k_q99_slope")
    lines.append("contract: aggregate rows n=all hold slope and slope_half")
    return "\n".join(lines)
