import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from bpl.stats import (
    binomial_se,
    default_tv_bins,
    ks_one_sample,
    ks_two_sample,
    ks_two_sample_bruteforce,
    loglog_slope,
    splitmix64,
    stream_seed,
    tv_binned,
)


def test_splitmix64_reference_values():
    # first outputs of the reference generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert splitmix64(0x9E3779B97F4A7C15) == 0x6E789E6AA1B965F4
    assert stream_seed(7, 3) == splitmix64(7 ^ 3)


@pytest.mark.parametrize(
    "a, b, expected",
    [([1, 2, 3], [1, 2, 3], 0.0), ([1, 2, 3], [10, 20, 30], 1.0), ([1, 2, 3, 4], [2.5, 2.6, 2.7, 2.8], 0.5)],
)
def test_ks_examples(a, b, expected):
    assert ks_two_sample(a, b) == expected


@settings(max_examples=200, deadline=None)
@given(
    st.lists(st.integers(-5, 5), min_size=1, max_size=40),
    st.lists(st.integers(-5, 5), min_size=1, max_size=40),
)
def test_ks_merge_equals_bruteforce_with_ties(a, b):
    assert ks_two_sample(a, b) == pytest.approx(ks_two_sample_bruteforce(a, b), abs=1e-15)


def test_ks_matches_scipy():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=300), rng.normal(0.2, 1, size=170)
    assert ks_two_sample(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-15)
    assert ks_one_sample(a, stats.norm.cdf) == pytest.approx(stats.kstest(a, "norm").statistic, abs=1e-15)


def test_tv_binned():
    assert tv_binned([1, 2, 3], [1, 2, 3]) == 0.0
    assert tv_binned([0, 0.1], [0.9, 1.0], bins=2) == 1.0
    assert default_tv_bins(500, 500) == 10
    with pytest.raises(ValueError):
        tv_binned([0, 1], [0, 1], bins=1)


def test_slope_and_se():
    ns = [1e3, 1e4, 1e5]
    assert loglog_slope(ns, [n**-0.5 for n in ns]) == pytest.approx(-0.5)
    with pytest.raises(ValueError):
        loglog_slope([1e3], [1.0])
    assert binomial_se(0.5, 100) == pytest.approx(0.05)
    assert math.isfinite(binomial_se(1.0, 10))
