import math

import numpy as np
import pytest
from scipy import integrate

from bpl.experiments import ms_band
from bpl.mle import kjump_mle, monotone_mle
from bpl.model import StepFn, Truth, make_ms_truth, simulate
from bpl.posterior import (
    Chain,
    HistPosteriorSampler,
    PosteriorError,
    RJConfig,
    RJMoves,
    RJState,
    credible_interval,
    effective_sample_size,
    ialpha,
    posterior_functional,
    posterior_k_distribution,
    rjmcmc,
)
from bpl.prior import CppDraw, CppPrior, Density, HistPrior
from bpl.stats import ks_one_sample


@pytest.fixture(scope="module")
def pc_data():
    K = 20
    truth = Truth.from_step(StepFn(np.arange(K + 1) / K, 1 + 0.3 * np.cos(np.arange(K))))
    return simulate(truth, 2e3, h=0.3, rng=12), K


@pytest.fixture(scope="module")
def ms_data():
    f0 = make_ms_truth(3, 10.0, 1e4)
    return simulate(Truth.from_step(f0), 1e4, h=ms_band(1e4, f0), rng=3), f0


# -- histogram posterior --------------------------------------------------------


def test_exact_sampler_matches_analytic_cdf(pc_data):
    ps, K = pc_data
    s = HistPosteriorSampler(ps, HistPrior(tuple(np.arange(K + 1) / K), Density.uniform(-2, 2)))
    draws = s.sample(np.random.default_rng(0), 20_000)
    for j in (0, 7, K - 1):
        assert ks_one_sample(draws[:, j], lambda x: s.cdf(j, x)) < 0.015
        assert np.all(draws[:, j] <= s.a_hat[j])


def test_rejection_sampler_general_prior(pc_data):
    ps, K = pc_data
    g = Density.gaussian(1.0, 0.1)
    s = HistPosteriorSampler(ps, HistPrior(tuple(np.arange(K + 1) / K), g))
    draws = s.sample(np.random.default_rng(1), 20_000)
    assert 0 < s.accept_rate <= 1
    j, top, r = 3, s.a_hat[3], s.rates[3]
    dens = lambda x: math.exp(r * (x - top)) * g.pdf(x)  # noqa: E731
    z = integrate.quad(dens, top - 50 / r, top)[0]

    def cdf(xs):
        return np.array([integrate.quad(dens, top - 50 / r, min(x, top))[0] / z for x in xs])

    grid = np.quantile(draws[:, j], np.linspace(0.02, 0.98, 25))
    emp = np.searchsorted(np.sort(draws[:, j]), grid, side="right") / len(draws)
    assert np.max(np.abs(emp - cdf(grid))) < 0.015


def test_large_r_mean_centre(pc_data):
    ps, K = pc_data
    s = HistPosteriorSampler(ps, HistPrior(tuple(np.arange(K + 1) / K), Density.uniform(-1e3, 1e3)))
    th = s.sample_theta(np.random.default_rng(2), 50_000)
    centre = s.mle.fit.integral() - K / ps.n
    assert abs(th.mean() - centre) < 3 * math.sqrt(K) / ps.n / math.sqrt(len(th))


def test_empty_posterior_support(pc_data):
    ps, K = pc_data
    with pytest.raises(PosteriorError, match="support empty"):
        HistPosteriorSampler(ps, HistPrior(tuple(np.arange(K + 1) / K), Density.uniform(1.2, 3)))


# -- RJMCMC ---------------------------------------------------------------------


def test_config_errors():
    with pytest.raises(PosteriorError):
        RJConfig(iters=0)
    with pytest.raises(PosteriorError):
        RJConfig(weights=(1, -1, 0, 0))
    with pytest.raises(PosteriorError):
        RJConfig(weights=(0, 0, 0, 0))
    with pytest.raises(PosteriorError):
        RJConfig.parse_moves("1:2:3")
    assert RJConfig(weights=(2, 1, 1, 0)).weights == (0.5, 0.25, 0.25, 0.0)


def _check_detailed_balance(ps, prior, pairs, seed, weights=(0.25, 0.25, 0.25, 0.25)):
    cfg = RJConfig(iters=1, weights=weights, height_scale=3.0, time_scale=3.0)
    mv = RJMoves(ps, prior, cfg)
    rng = np.random.default_rng(seed)
    fit = kjump_mle(monotone_mle(ps, check_band=False), 3).fit
    t, b = list(fit.jump_times.tolist()), list(fit.values.tolist())
    seen = {m: 0 for m in "HTBD"}
    worst = 0.0
    while sum(seen.values()) < pairs:
        move = "HTBD"[int(rng.integers(4))]
        res = mv.propose(move, t, b, rng)
        if res is None:
            continue
        t2, b2, ratio, d = res
        x, y = RJState(tuple(t), tuple(b)), RJState(tuple(t2), tuple(b2))
        lx, ly = mv.log_target(x), mv.log_target(y)
        if not math.isfinite(ly):
            # the move's local checks must agree with the global support check
            assert ratio == -math.inf or d == -math.inf
            continue
        seen[move] += 1
        assert d == pytest.approx(ly - lx, abs=1e-12 * abs(lx))
        full = ly - lx + mv.log_proposal(y, x) - mv.log_proposal(x, y)
        # |log lhs - log rhs| of pi(x) q(x,y) a(x,y) = pi(y) q(y,x) a(y,x) is the relative error
        worst = max(worst, abs(ratio - full))
        if math.log(rng.random()) < ratio:
            t, b = list(t2), list(b2)
    return worst, seen


@pytest.mark.parametrize("prior", [CppPrior.gamma21(2.0), CppPrior(2.0, Density.gaussian(0, 5), Density.gaussian(0, 3))])
def test_detailed_balance_identity(ms_data, prior):
    ps, _ = ms_data
    worst, seen = _check_detailed_balance(ps, prior, 1000, seed=5)
    assert worst < 1e-10
    assert min(seen.values()) > 20


def test_zero_step_proposal_has_unit_acceptance(ms_data):
    ps, f0 = ms_data
    mv = RJMoves(ps, CppPrior.gamma21(1.0), RJConfig(iters=1, height_scale=0.0))
    t, b = [], [float(ps.ys.min()) - 0.1]
    t2, b2, ratio, d = mv.move_height(t, b, np.random.default_rng(0))
    assert b2 == b and ratio == 0.0 and d == 0.0


def test_chain_respects_data_and_finds_k(ms_data):
    ps, f0 = ms_data
    chain = rjmcmc(ps, CppPrior.gamma21(1.0), RJConfig(iters=30_000), np.random.default_rng(4))
    chain.validate(ps)
    pk = posterior_k_distribution(chain)
    assert max(pk, key=lambda k: pk[k][0]) == 3
    th = posterior_functional(chain)
    assert abs(np.median(th) - f0.integral()) < 20 * 7 / ps.n
    lps = chain.log_posterior
    mv = RJMoves(ps, CppPrior.gamma21(1.0), RJConfig(iters=1))
    for i in range(0, len(chain), 500):
        d = chain.draws[i]
        s = RJState(d.t, tuple(np.cumsum(d.a).tolist()))
        assert lps[i] == pytest.approx(mv.log_target(s), abs=1e-6)


def test_constant_chain_when_only_time_moves():
    ps = simulate(Truth.from_step(StepFn.constant(1.0, 1.5)), 1e3, h=0.5, rng=1)
    cfg = RJConfig(iters=2000, weights=(0, 1, 0, 0), init_state=((), (0.9,)))
    chain = rjmcmc(ps, CppPrior.gamma21(1.0), cfg, np.random.default_rng(0))
    assert np.all(posterior_functional(chain) == 0.9 * 1.5)
    assert chain.accepted["T"] == 0


def test_chain_export(ms_data, tmp_path):
    ps, _ = ms_data
    chain = rjmcmc(ps, CppPrior.gamma21(1.0), RJConfig(iters=2000, thin=10), np.random.default_rng(0))
    chain.to_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "iter,K,theta01,theta0T,logpost"
    assert len(lines) == len(chain) + 1
    arch = chain.to_json(every=5)
    assert len(arch["draws"]) == math.ceil(len(chain) / 5)


def test_infeasible_start_is_rejected(ms_data):
    ps, _ = ms_data
    with pytest.raises(PosteriorError):
        rjmcmc(ps, CppPrior.gamma21(1.0), RJConfig(iters=10, init_state=((), (1e6,))))


# -- summaries ---------------------------------------------------------------------


def test_ialpha_example():
    iv = ialpha(1.0, 100, 1e4, 0.05)
    assert iv.lower == pytest.approx(0.9880400, abs=5e-8)
    assert iv.upper == pytest.approx(0.9919600, abs=5e-8)


def test_credible_interval_rules():
    x = np.random.default_rng(0).normal(size=10_000)
    with pytest.raises(PosteriorError):
        credible_interval(x[:1000], 0.05)
    widths = [credible_interval(x, a).length for a in (0.2, 0.5, 0.9, 0.99)]
    assert all(w1 > w2 for w1, w2 in zip(widths, widths[1:]))
    iv = credible_interval(x, 0.05)
    assert iv.lower == pytest.approx(np.quantile(x, 0.025)) and 0.0 in iv


def test_ess():
    rng = np.random.default_rng(0)
    x = rng.normal(size=20_000)
    assert effective_sample_size(x) == pytest.approx(20_000, rel=0.1)
    rho = 0.8
    y = np.empty(20_000)
    y[0] = 0
    for i in range(1, len(y)):
        y[i] = rho * y[i - 1] + rng.normal()
    assert effective_sample_size(y) == pytest.approx(20_000 * (1 - rho) / (1 + rho), rel=0.2)


def test_k_distribution_point_mass():
    draws = [CppDraw(3, (0.1, 0.2, 0.3), (1, 1, 1, 1))] * 50
    c = Chain(draws, np.zeros(50), np.arange(50), 1.5, {}, {}, 0, 1)
    assert posterior_k_distribution(c) == {3: (1.0, 0.0)}
