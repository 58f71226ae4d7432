import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from artifact import metrics as mt
from artifact.errors import EmptyRegime, InsufficientTail, WindowTooLong

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


# ---------------------------------------------------------------- oracles

def cte_oracle(values, alpha, tail="lower"):
    """Selection by repeated extraction of the current extreme, O(n k)."""
    pool = list(map(float, values))
    k = math.ceil(round(len(pool) * (1 - alpha), 9))
    picked = []
    for _ in range(k):
        e = min(pool) if tail == "lower" else max(pool)
        pool.remove(e)
        picked.append(e)
    return math.fsum(picked) / k


def mdd_oracle(prices):
    """O(n^2): worst (p_j - p_i)/p_i over all i <= j."""
    worst = 0.0
    for i in range(len(prices)):
        for j in range(i, len(prices)):
            worst = min(worst, (prices[j] - prices[i]) / prices[i])
    return worst


# ---------------------------------------------------------------- cte

def test_cte_examples():
    assert mt.cte_alpha(np.arange(1, 101), 0.95, "upper") == 98.0
    assert mt.cte_alpha(np.arange(1, 101), 0.95, "lower") == 3.0
    for alpha in (0.5, 0.9, 0.95, 0.99):
        assert mt.cte_alpha(np.full(200, 2.5), alpha) == 2.5


def test_cte_normal_tail():
    x = np.random.default_rng(0).standard_normal(1_000_000)
    want = stats.norm.pdf(stats.norm.ppf(0.95)) / 0.05
    assert want == pytest.approx(2.063, abs=1e-3)
    assert abs(mt.cte_alpha(x, 0.95, "upper") - want) < 0.01


def test_tail_size_is_rounding_safe():
    assert mt.tail_size(100, 0.95) == 5
    assert mt.tail_size(1000, 0.99) == 10
    assert mt.tail_size(101, 0.95) == 6


def test_cte_rejects_empty_tail():
    with pytest.raises(InsufficientTail):
        mt.cte_alpha([1.0, 2.0], 0.99)
    with pytest.raises(ValueError):
        mt.cte_alpha([1.0, 2.0], 1.0)


def test_cte_matches_oracle_on_random_instances():
    rng = np.random.default_rng(13)
    for _ in range(100):
        n = int(rng.integers(20, 1001))
        x = rng.standard_t(3, n) * rng.uniform(0.1, 5)
        alpha = float(rng.choice([0.9, 0.95, 0.975, 0.99]))
        if round(n * (1 - alpha), 9) < 1:
            continue
        for tail in ("lower", "upper"):
            assert mt.cte_alpha(x, alpha, tail) == cte_oracle(x, alpha, tail)


@settings(max_examples=200, deadline=None)
@given(st.lists(finite, min_size=20, max_size=300), st.sampled_from([0.9, 0.95]))
def test_cte_properties(values, alpha):
    x = np.asarray(values)
    lo, hi = mt.cte_alpha(x, alpha, "lower"), mt.cte_alpha(x, alpha, "upper")
    assert x.min() <= lo <= x.mean() + 1e-9
    assert x.mean() - 1e-9 <= hi <= x.max()
    assert lo <= hi
    # permutation invariance is exact thanks to fsum
    assert mt.cte_alpha(x[::-1], alpha) == lo
    assert mt.cte_alpha(-x, alpha, "upper") == pytest.approx(-lo, abs=1e-12)


# ---------------------------------------------------------------- drawdown

def test_max_drawdown_examples():
    assert mt.max_drawdown(np.linspace(1, 2, 50)) == 0.0
    assert mt.max_drawdown([100, 120, 90, 110]) == pytest.approx(-0.25)
    with pytest.raises(ValueError):
        mt.max_drawdown([1.0, -1.0])


def test_max_drawdown_matches_oracle_on_random_walks():
    rng = np.random.default_rng(21)
    for _ in range(100):
        n = int(rng.integers(2, 1001))
        p = 100 * np.exp(np.cumsum(rng.normal(0, 0.02, n)))
        assert mt.max_drawdown(p) == mdd_oracle(p.tolist())


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(0.01, 1e3), min_size=1, max_size=60))
def test_max_drawdown_property(prices):
    d = mt.max_drawdown(prices)
    assert -1.0 < d <= 0.0
    assert d == pytest.approx(mdd_oracle(prices), abs=1e-12)
    assert mt.max_drawdown(np.asarray(prices) * 7.0) == pytest.approx(d, abs=1e-12)


# ---------------------------------------------------------------- moments

def test_return_moments_examples():
    vol, skew, kurt = mt.return_moments(np.zeros(100))
    assert vol == 0.0 and math.isnan(skew) and math.isnan(kurt)
    x = np.random.default_rng(3).normal(0, 0.01, 1_000_000)
    vol, skew, kurt = mt.return_moments(x)
    assert abs(kurt - 3) < 0.05 and abs(skew) < 0.01
    assert vol == pytest.approx(0.01 * math.sqrt(252), rel=0.01)
    assert 0.01 * math.sqrt(252) == pytest.approx(0.1587, abs=1e-4)


def test_autocorr_examples():
    x = np.random.default_rng(4).standard_normal(1_000_000)
    assert abs(mt.autocorr(x, "none", 1)) < 0.01
    alt = np.tile([1.0, -1.0], 500)
    assert math.isnan(mt.autocorr(alt, "abs", 1))
    assert mt.autocorr(alt, "none", 1) == pytest.approx(-1.0)


def test_autocorr_of_ar1():
    rng = np.random.default_rng(8)
    x = np.zeros(200_000)
    for t in range(1, x.size):
        x[t] = 0.5 * x[t - 1] + rng.standard_normal()
    assert mt.autocorr(x, "none", 1) == pytest.approx(0.5, abs=0.01)
    assert mt.autocorr(x, "none", 2) == pytest.approx(0.25, abs=0.01)


# ---------------------------------------------------------------- dispersion

def test_dispersion_identical_regimes_is_one():
    r = np.random.default_rng(0).standard_normal((300, 20))
    mask = np.ones(300, dtype=bool)
    assert mt.dispersion_ratio(r, np.ones(20, bool), mask, calm=mask) == pytest.approx(1.0)


def test_dispersion_doubled_stress_variance():
    rng = np.random.default_rng(1)
    t, n = 4000, 40
    stress = np.zeros(t, dtype=bool)
    stress[::5] = True
    common = rng.standard_normal((t, 1)) * 3.0
    idio = rng.standard_normal((t, n)) * np.where(stress, math.sqrt(2.0), 1.0)[:, None]
    assert mt.dispersion_ratio(common + idio, np.ones(n, bool), stress) == pytest.approx(2.0, abs=0.1)


def test_dispersion_requires_regimes():
    r = np.zeros((10, 4))
    with pytest.raises(EmptyRegime):
        mt.dispersion_ratio(r, np.ones(4, bool), np.zeros(10, bool))


# ---------------------------------------------------------------- performativity

def _fake_sim(v, p, drift=0.0):
    return SimpleNamespace(v=np.asarray(v), p=np.asarray(p), drift_step=drift)


def test_performativity_independent_gap_is_near_zero():
    rng = np.random.default_rng(2)
    v = np.cumsum(rng.standard_normal(3000))
    p = v + rng.standard_normal(3000)
    pi = mt.performativity_index(_fake_sim(v, p), window=252)
    assert abs(np.median(pi)) < 0.05


def test_performativity_detects_feedback():
    rng = np.random.default_rng(2)
    n, beta = 3000, 0.5
    v = np.zeros(n)
    gap = rng.standard_normal(n)
    for t in range(n - 1):
        v[t + 1] = v[t] + beta * gap[t] + 0.1 * rng.standard_normal()
    pi = mt.performativity_index(_fake_sim(v, v + gap), window=252)
    assert np.median(pi) > 0.9


def test_performativity_window_too_long():
    with pytest.raises(WindowTooLong):
        mt.performativity_index(_fake_sim(np.zeros(10), np.zeros(10)), window=20)


# ---------------------------------------------------------------- tail ratio and common share

def test_tail_vol_ratio_near_one_without_loading():
    rng = np.random.default_rng(6)
    r, eta = rng.standard_normal(200_000), rng.standard_normal(200_000)
    assert mt.tail_vol_ratio(r, eta) == pytest.approx(1.0, abs=0.05)


def test_tail_vol_ratio_grows_with_loading():
    rng = np.random.default_rng(6)
    eta = rng.standard_normal(100_000)
    r = 2.0 * eta + rng.standard_normal(100_000)
    assert mt.tail_vol_ratio(r, eta) > 1.5


def test_common_noise_share():
    rng = np.random.default_rng(7)
    eta = rng.standard_normal(50_000)
    noise = rng.standard_normal(50_000)
    assert mt.common_noise_share(noise, eta) < 1e-3
    r = eta + noise
    r[1:] -= 0.5 * eta[:-1]
    # var explained: 1 + 0.25 over 1 + 0.25 + 1
    assert mt.common_noise_share(r, eta) == pytest.approx(1.25 / 2.25, abs=0.01)
    assert mt.common_noise_share(noise, np.zeros(50_000)) == 0.0


def test_metrics_record_columns():
    rng = np.random.default_rng(0)
    r = rng.normal(0, 0.01, 500)
    rec = mt.metrics_from_returns(r, 100 * np.exp(np.cumsum(r)))
    cols = mt.MetricsRecord.columns()
    assert cols[0] == "ann_vol" and len(rec.to_row()) == len(cols)
    assert rec.cte99 <= rec.cte95 <= 0
    assert rec.excess_kurtosis == pytest.approx(rec.kurtosis - 3)
