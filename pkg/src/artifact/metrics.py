"""Risk and distributional statistics.

Sign convention: returns keep their sign, so loss-tail CTEs are negative.
"""

import math
from dataclasses import asdict, dataclass, fields

import numpy as np
from scipy import stats

from .errors import EmptyRegime, InsufficientTail, WindowTooLong
from .params import PERIODS_PER_YEAR


def tail_size(n, alpha):
    """Number of observations in the (1 - alpha) tail, ceil(n (1 - alpha))."""
    # round first so 100 * (1 - 0.95) counts as 5, not 5.000000000000004
    return math.ceil(round(n * (1.0 - alpha), 9))


def cte_alpha(values, alpha, tail="lower"):
    """Conditional tail expectation: mean of the ceil(n(1-alpha)) worst values.

    ``tail='lower'`` averages the smallest values (loss tail of signed
    returns); ``tail='upper'`` the largest (e.g. for |p - v|).  The sum is
    exactly rounded, so the result does not depend on summation order.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if tail not in ("lower", "upper"):
        raise ValueError("tail must be 'lower' or 'upper'")
    x = np.asarray(values, dtype=float).ravel()
    n = x.size
    if n == 0 or round(n * (1.0 - alpha), 9) < 1:
        raise InsufficientTail(f"{n} observations leave no {1 - alpha:.3g} tail")
    k = tail_size(n, alpha)
    s = np.sort(x)
    picked = s[:k] if tail == "lower" else s[n - k:]
    return math.fsum(picked.tolist()) / k


def gaps(sim, reference="fundamental"):
    """|p - v| per period; ``reference='exogenous'`` uses the no-feedback path."""
    v = sim.v if reference == "fundamental" else sim.v_exog
    return np.abs(sim.p - v)


def empirical_multiplier(run_hi, run_base, alpha=0.95, reference="fundamental"):
    """CTE of |p - v| in ``run_hi`` over the same in ``run_base``."""
    if len(run_hi.p) != len(run_base.p):
        raise ValueError("runs must share a horizon")
    num = cte_alpha(gaps(run_hi, reference), alpha, "upper")
    den = cte_alpha(gaps(run_base, reference), alpha, "upper")
    return num / den


def max_drawdown(prices):
    """Most negative (p_t - running max) / running max; 0 for a rising path."""
    p = np.asarray(prices, dtype=float)
    if p.size == 0:
        return 0.0
    if np.any(p <= 0):
        raise ValueError("prices must be positive")
    peak = np.maximum.accumulate(p)
    return float(np.min((p - peak) / peak))


def return_moments(series):
    """(annualised vol, skew, raw kurtosis); NaN moments for a flat series."""
    r = np.asarray(series, dtype=float)
    if r.size < 30:
        raise ValueError("need at least 30 returns")
    sd = r.std(ddof=1)
    vol = float(sd * math.sqrt(PERIODS_PER_YEAR))
    if sd == 0 or not np.isfinite(sd):
        return vol, math.nan, math.nan
    return vol, float(stats.skew(r)), float(stats.kurtosis(r, fisher=False))


def autocorr(series, transform="abs", lag=1):
    """Pearson autocorrelation of |r|, r^2 or r at the given lag."""
    r = np.asarray(series, dtype=float)
    if r.size <= lag + 2:
        raise ValueError("series too short for this lag")
    if transform == "abs":
        x = np.abs(r)
    elif transform == "square":
        x = r * r
    elif transform in (None, "none"):
        x = r
    else:
        raise ValueError(f"unknown transform {transform!r}")
    a, b = x[lag:], x[:-lag]
    a, b = a - a.mean(), b - b.mean()
    den = math.sqrt(float(np.dot(a, a)) * float(np.dot(b, b)))
    if den == 0:
        return math.nan
    return float(np.dot(a, b) / den)


def vol_persistence(series, lags=5):
    """Mean squared-return autocorrelation over lags 1..lags."""
    return float(np.mean([autocorr(series, "square", k) for k in range(1, lags + 1)]))


def stress_mask(market_returns, quantile=0.9):
    """Periods whose |return| is in the top decile."""
    a = np.abs(np.asarray(market_returns, dtype=float))
    return a >= np.quantile(a, quantile)


def dispersion_ratio(returns_by_agent, group_mask, stress, calm=None):
    """Within-group pairwise return-difference variance, stress over calm.

    ``returns_by_agent`` is periods x agents.  For one period the mean of
    (r_i - r_j)^2 over pairs in the group equals twice the cross-sectional
    variance, so the ratio is taken on that.  ``calm`` defaults to the
    complement of ``stress``.
    """
    r = np.asarray(returns_by_agent, dtype=float)
    g = np.asarray(group_mask, dtype=bool)
    stress = np.asarray(stress, dtype=bool)
    calm = ~stress if calm is None else np.asarray(calm, dtype=bool)
    if g.sum() < 2:
        raise ValueError("group needs at least two agents")
    if not stress.any() or not calm.any():
        raise EmptyRegime("stress and calm regimes must both be non-empty")
    cs = r[:, g].var(axis=1, ddof=1)
    return float(cs[stress].mean() / cs[calm].mean())


def performativity_index(sim, window=252):
    """Rolling correlation of the gap p_t - v_t with the next feedback innovation.

    The innovation is v_{t+1} - v_t - mu dt.  Returns one value per window
    end (index t is the last gap used).
    """
    p, v = np.asarray(sim.p), np.asarray(sim.v)
    gap = (p - v)[:-1]
    innov = np.diff(v) - sim.drift_step
    n = gap.size
    if window > n:
        raise WindowTooLong(f"window {window} exceeds {n} usable periods")
    if window < 3:
        raise ValueError("window must be at least 3")
    gw = np.lib.stride_tricks.sliding_window_view(gap, window)
    iw = np.lib.stride_tricks.sliding_window_view(innov, window)
    gw = gw - gw.mean(axis=1, keepdims=True)
    iw = iw - iw.mean(axis=1, keepdims=True)
    num = (gw * iw).sum(axis=1)
    den = np.sqrt((gw * gw).sum(axis=1) * (iw * iw).sum(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(den > 0, num / den, np.nan)


def tail_vol_ratio(returns, conditioner, quantile=0.99):
    """RMS return when |conditioner| is in its top tail, over the unconditional RMS.

    With the common AI noise as conditioner this is the tail-to-unconditional
    volatility ratio: near one when the common component is negligible.
    """
    r = np.asarray(returns, dtype=float)
    c = np.abs(np.asarray(conditioner, dtype=float))
    sel = c >= np.quantile(c, quantile)
    if not sel.any():
        raise EmptyRegime("no tail periods")
    return float(math.sqrt(np.mean(r[sel] ** 2)) / math.sqrt(np.mean(r ** 2)))


def common_noise_share(returns, eta, lags=1):
    """R^2 of returns regressed on the common AI noise and its lags.

    Zero in population when AI signals carry no common component, so the
    excess common-noise variance of a market is this share times var(r).
    """
    r = np.asarray(returns, dtype=float)
    e = np.asarray(eta, dtype=float)
    if r.shape != e.shape:
        raise ValueError("returns and eta must align")
    y = r[lags:] - r[lags:].mean()
    cols = [e[lags - k: e.size - k] for k in range(lags + 1)]
    X = np.column_stack(cols)
    X = X - X.mean(axis=0)
    if not np.any(X):
        return 0.0
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    ss = float(np.dot(y, y))
    return float(np.dot(X @ coef, X @ coef) / ss) if ss > 0 else 0.0


@dataclass
class MetricsRecord:
    ann_vol: float
    skew: float
    kurtosis: float
    excess_kurtosis: float
    max_drawdown: float
    cte95: float
    cte99: float
    abs_autocorr_lag1: float
    sq_autocorr_lag1: float
    empirical_multiplier: float = math.nan
    dispersion_ratio_ai: float = math.nan
    performativity_index: float = math.nan
    vol_persistence: float = math.nan

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def to_row(self):
        return [getattr(self, c) for c in self.columns()]

    def to_dict(self):
        return asdict(self)


def metrics_from_returns(returns, prices):
    vol, skew, kurt = return_moments(returns)
    return MetricsRecord(
        ann_vol=vol, skew=skew, kurtosis=kurt, excess_kurtosis=kurt - 3.0,
        max_drawdown=max_drawdown(prices),
        cte95=cte_alpha(returns, 0.95), cte99=cte_alpha(returns, 0.99),
        abs_autocorr_lag1=autocorr(returns, "abs", 1),
        sq_autocorr_lag1=autocorr(returns, "square", 1),
        vol_persistence=vol_persistence(returns),
    )
