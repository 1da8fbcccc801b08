import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bpl.mle import (
    EmptyBinError,
    MleResult,
    block_variance_formula,
    freq_ci,
    histogram_mle,
    kjump_bruteforce,
    kjump_mle,
    monotone_mle,
    theta_bc,
    theta_block,
    theta_naive,
)
from bpl.model import PointSet, StepFn, Truth, simulate


def _pts(points, T=1.0, n=10.0, h=10.0, truth=None):
    xs, ys = zip(*sorted(points))
    truth = truth or Truth.from_step(StepFn.constant(-5.0, T))
    return PointSet(n, T, h, truth, np.array(xs, float), np.array(ys, float))


def test_histogram_examples():
    r = histogram_mle(_pts([(0.2, 0.5), (0.7, 0.3)]), (0, 0.5, 1))
    assert r.fit.values.tolist() == [0.5, 0.3]
    assert r.m == 2
    r = histogram_mle(_pts([(0.1, 1), (0.9, 2)]), (0, 1))
    assert r.fit == StepFn.constant(1.0, 1.0)


def test_histogram_empty_bin_names_bin():
    with pytest.raises(EmptyBinError, match="bin 2"):
        histogram_mle(_pts([(0.2, 0.5), (0.3, 0.3)]), (0, 0.5, 1))


def test_monotone_examples():
    ps = _pts([(0.2, 0.5), (0.4, 0.2), (0.8, 0.9), (1.5, 0.7)], T=2.0)
    r = monotone_mle(ps)
    assert r.fit.breaks.tolist() == [0, 0.4, 2]
    assert r.fit.values.tolist() == [0.2, 0.7]
    assert monotone_mle(_pts([(1.2, 1.0)], T=2.0)).fit == StepFn.constant(1.0, 2.0)
    with pytest.raises(ValueError):
        monotone_mle(_pts([(0.2, 1.0)], T=2.0))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_monotone_is_maximal_below_data(seed):
    ps = simulate(Truth.kink(), 300.0, h=0.5, rng=seed)
    if not np.any(ps.xs >= 1):
        return
    f = monotone_mle(ps, check_band=False).fit
    assert np.all(np.diff(f.values) > 0)
    assert np.all(f.eval(ps.xs) <= ps.ys)
    # every piece is pinned by an observation on its graph
    for i in monotone_mle(ps, check_band=False).boundary_point_indices:
        assert f.eval(ps.xs[i]) == ps.ys[i]
    assert f.jump_times.max(initial=0) < 1


STAIR = MleResult(StepFn((0, 0.3, 0.6, 1.5), (1, 2, 3)), (0, 1, 2), 2)


@pytest.mark.parametrize("K, integral", [(1, 3.3), (0, 1.5), (2, 3.6), (5, 3.6)])
def test_kjump_examples(K, integral):
    assert kjump_mle(STAIR, K).fit.integral() == pytest.approx(integral)
    if K == 1:
        assert kjump_mle(STAIR, 1).fit.jump_times.tolist() == [0.6]


@settings(max_examples=150, deadline=None)
@given(
    st.lists(st.floats(0.01, 1.0), min_size=2, max_size=12),
    st.lists(st.floats(0.01, 1.0), min_size=12, max_size=12),
    st.integers(0, 12),
)
def test_kjump_dp_equals_bruteforce(widths, incs, K):
    m = len(widths)
    b = np.concatenate([[0.0], np.cumsum(widths)])
    v = np.cumsum(incs[:m])
    stair = MleResult(StepFn(b, v), tuple(range(m)), m - 1)
    dp = kjump_mle(stair, K).fit
    bf = kjump_bruteforce(stair, K)
    assert dp.integral() == pytest.approx(bf.integral(), rel=1e-12)
    assert dp == bf


def test_kjump_ties_pick_first_location():
    stair = MleResult(StepFn((0, 1, 2, 3), (1, 2, 3)), (0, 1, 2), 2)
    # cutting at 1 or 2 gives 1 + 2*2 = 5 versus 2 + 3 = 5
    assert kjump_mle(stair, 1).fit.jump_times.tolist() == [1.0]


def test_functional_examples():
    r = MleResult(StepFn.constant(1.0, 1.0), tuple(range(10)), 1)
    assert theta_bc(r, 1000) == pytest.approx(0.99)
    assert theta_bc(MleResult(r.fit, (), 1), 1000) == theta_naive(r)
    ps = _pts([(0.5, 0.2)], truth=Truth.from_step(StepFn.constant(0.0, 1.0)), h=5.0)
    assert theta_block(ps, 1, 10) == pytest.approx(1.1)


def test_freq_ci_example():
    lo, hi = freq_ci(1.0, 100, 1e4, 0.04)
    assert (hi - lo) / 2 == pytest.approx(5 * math.sqrt(3e-6))
    half = (lambda iv: (iv[1] - iv[0]) / 2)(freq_ci(1.0, 100, 1e4, 1 - 1e-12))
    assert half == pytest.approx(math.sqrt(block_variance_formula(100, 1e4)), rel=1e-9)


def test_block_estimator_constant_truth_variance():
    # for a constant truth the exact variance is K/n^2 + 1/(K n)
    n, K, reps = 1e4, 100, 400
    t = Truth.from_step(StepFn.constant(1.0, 1.0))
    rng = np.random.default_rng(1)
    th = np.array([theta_block(simulate(t, n, h=0.2, rng=rng), K) for _ in range(reps)])
    target = K / n**2 + 1 / (K * n)
    assert abs(th.mean() - 1.0) < 4 * math.sqrt(target / reps)
    assert th.var(ddof=1) == pytest.approx(target, rel=0.25)
