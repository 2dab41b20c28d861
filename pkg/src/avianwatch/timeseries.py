"""Stationarity checks and lagged correlation between weekly series.

Lag convention: at lag ``n`` the online series ``a`` is read at week
``t + n`` and compared with cases ``b`` at week ``t``. Negative lags mean
online activity comes first.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.linalg import solve_triangular

from .ingestion import WEEK, AlignedPair, WeeklySeries, align

logger = logging.getLogger(__name__)

DEFAULT_SWEEP = (-10, 10)
REPORTING_WINDOW = (-4, 0)
MIN_TEST_LENGTH = 12

# MacKinnon (2010) response surface, one variable, constant only:
# crit(T) = b0 + b1/T + b2/T^2 + b3/T^3
_ADF_C_SURFACE = {
    "1%": (-3.43035, -6.5393, -16.786, -79.433),
    "5%": (-2.86154, -2.8903, -4.234, -40.040),
    "10%": (-2.56677, -1.5384, -2.809, 0.0),
}
_KPSS_C_CRIT = {"10%": 0.347, "5%": 0.463, "2.5%": 0.574, "1%": 0.739}


class StationarityError(ValueError):
    pass


class NonStationaryError(StationarityError):
    def __init__(self, message: str, trail: list):
        super().__init__(message)
        self.trail = trail


@dataclass(frozen=True)
class StationarityResult:
    test: str  # "adf" | "kpss"
    statistic: float
    critical_values: dict[str, float]
    lags: int  # ADF augmentation lags, or KPSS bandwidth
    nobs: int

    @property
    def stationary(self) -> bool:
        return self.statistic < self.critical_values["5%"]

    @property
    def conclusion(self) -> str:
        return "stationary" if self.stationary else "nonstationary"


@dataclass(frozen=True)
class LagCorrelation:
    lag: int
    r: float
    n: int


@dataclass(frozen=True)
class CorrelationResult:
    lag: int
    r: float
    p_value: float
    n: int
    window: tuple[int, int]


def _values(s) -> np.ndarray:
    return np.asarray(s.values if isinstance(s, WeeklySeries) else s, dtype=float)


def difference(s: WeeklySeries, d: int = 1) -> WeeklySeries:
    """``d``-th order forward difference; the first ``d`` weeks are consumed."""
    if d < 0:
        raise ValueError("difference order must be non-negative")
    if d >= len(s):
        raise ValueError(f"cannot difference {len(s)} values {d} times")
    if d == 0:
        return s
    return WeeklySeries(s.start_week + d * WEEK, np.diff(s.values, n=d))


# ------------------------------------------------------------ unit roots


def adf_critical_values(nobs: int) -> dict[str, float]:
    crit = {k: b0 + b1 / nobs + b2 / nobs**2 + b3 / nobs**3 for k, (b0, b1, b2, b3) in _ADF_C_SURFACE.items()}
    # the surface has no 2.5% row; interpolate on the normal-quantile scale
    z1, z25, z5 = stats.norm.ppf([0.01, 0.025, 0.05])
    w = (z25 - z1) / (z5 - z1)
    crit["2.5%"] = crit["1%"] + w * (crit["5%"] - crit["1%"])
    return {k: crit[k] for k in ("1%", "2.5%", "5%", "10%")}


def _ols(y: np.ndarray, X: np.ndarray):
    """Coefficients, their standard errors and the residual sum of squares."""
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if np.any(diag <= 1e-10 * np.linalg.norm(X, axis=0)):
        raise StationarityError("degenerate regression (collinear design)")
    beta = solve_triangular(r, q.T @ y)
    resid = y - X @ beta
    ssr = float(resid @ resid)
    dof = len(y) - X.shape[1]
    r_inv = solve_triangular(r, np.eye(r.shape[0]))
    se = np.sqrt(np.sum(r_inv**2, axis=1) * ssr / dof)
    return beta, se, ssr


def schwert_max_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def adf_test(s, regression: str = "c", max_lags: int | str = "auto") -> StationarityResult:
    """Augmented Dickey-Fuller test with a constant.

    With ``max_lags="auto"`` the augmentation order is the AIC minimiser over
    0..floor(12 (N/100)^(1/4)), searched on a common sample; the chosen
    regression is then refitted on all usable observations. An integer fixes
    the order.
    """
    if regression != "c":
        raise ValueError("only the constant-term regression is supported")
    x = _values(s)
    n = x.size
    if n < MIN_TEST_LENGTH:
        raise StationarityError(f"ADF needs at least {MIN_TEST_LENGTH} observations, got {n}")
    if np.ptp(x) == 0:
        raise StationarityError("constant series: ADF regression is degenerate")
    cap = n // 2 - 2
    if max_lags == "auto":
        maxlag = min(schwert_max_lag(n), cap)
    else:
        maxlag = int(max_lags)
        if not 0 <= maxlag <= cap:
            raise ValueError(f"max_lags must be in [0, {cap}] for {n} observations")
    dx = np.diff(x)

    def design(lags: int, start: int):
        rows = np.arange(start, dx.size)
        cols = [np.ones(rows.size), x[rows]]
        cols += [dx[rows - k] for k in range(1, lags + 1)]
        return dx[rows], np.column_stack(cols)

    used = maxlag
    if max_lags == "auto":
        best = None
        for lags in range(maxlag + 1):
            y, X = design(lags, maxlag)
            _, _, ssr = _ols(y, X)
            m = y.size
            llf = -0.5 * m * (math.log(2 * math.pi) + math.log(ssr / m) + 1)
            aic = -2 * llf + 2 * X.shape[1]
            if best is None or (aic, lags) < best:
                best = (aic, lags)
        used = best[1]
    y, X = design(used, used)
    beta, se, _ = _ols(y, X)
    stat = float(beta[1] / se[1])
    return StationarityResult("adf", stat, adf_critical_values(y.size), used, y.size)


def kpss_test(s, regression: str = "c", bandwidth: int | str = "auto") -> StationarityResult:
    """KPSS level-stationarity test with a Bartlett-kernel long-run variance."""
    if regression != "c":
        raise ValueError("only the constant-term regression is supported")
    x = _values(s)
    n = x.size
    if n < MIN_TEST_LENGTH:
        raise StationarityError(f"KPSS needs at least {MIN_TEST_LENGTH} observations, got {n}")
    resid = x - x.mean()
    if not np.any(resid):
        raise StationarityError("zero-variance series: KPSS is undefined")
    lags = int(math.floor(4.0 * (n / 100.0) ** 0.25)) if bandwidth == "auto" else int(bandwidth)
    if not 0 <= lags < n:
        raise ValueError("bandwidth out of range")
    lrv = resid @ resid
    for i in range(1, lags + 1):
        lrv += 2.0 * (1.0 - i / (lags + 1.0)) * (resid[i:] @ resid[:-i])
    lrv /= n
    partial = np.cumsum(resid)
    stat = float(partial @ partial / n**2 / lrv)
    return StationarityResult("kpss", stat, dict(_KPSS_C_CRIT), lags, n)


def ensure_stationary(s: WeeklySeries, max_d: int = 2):
    """Difference until both ADF and KPSS agree on stationarity.

    Returns ``(series, d_applied, (adf, kpss))`` with the results for the
    returned series. Raises :class:`NonStationaryError` carrying every
    ``(d, adf, kpss)`` step when ``max_d`` differences are not enough.
    """
    trail = []
    current = s
    for d in range(max_d + 1):
        adf, kpss = adf_test(current), kpss_test(current)
        trail.append((d, adf, kpss))
        if adf.stationary and kpss.stationary:
            return current, d, (adf, kpss)
        if d < max_d:
            current = difference(current, 1)
    raise NonStationaryError(f"still nonstationary after {max_d} differences", trail)


# ----------------------------------------------------------- correlation


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    sxx, syy = xc @ xc, yc @ yc
    if sxx == 0 or syy == 0:
        raise ValueError("Pearson r undefined for a zero-variance series")
    r = float(xc @ yc / math.sqrt(sxx * syy))
    return max(-1.0, min(1.0, r))


def pearson(pair: AlignedPair) -> float:
    if pair.n_overlap < 3:
        raise ValueError("Pearson r needs at least 3 overlapping weeks")
    return _pearson(pair.a.values, pair.b.values)


def pearson_pvalue(r: float, n: int) -> float:
    """Two-sided p-value of ``r`` from a t test with ``n - 2`` degrees of freedom."""
    if n < 4:
        raise ValueError("p-value needs n >= 4")
    if abs(r) >= 1.0:
        return 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return float(min(1.0, 2.0 * stats.t.sf(abs(t), n - 2)))


def cross_correlate(pair: AlignedPair, lag_range: tuple[int, int] = DEFAULT_SWEEP) -> list[LagCorrelation]:
    """Pearson r of ``a[t + lag]`` against ``b[t]`` over each lag's own overlap."""
    lo, hi = lag_range
    if hi < lo:
        raise ValueError("lag range is empty")
    a, b = pair.a.values, pair.b.values
    n = a.size
    out = []
    for lag in range(lo, hi + 1):
        if lag >= 0:
            x, y = a[lag:], b[: n - lag]
        else:
            x, y = a[: n + lag], b[-lag:]
        if x.size < 3:
            logger.warning("lag %d skipped: overlap %d < 3", lag, max(x.size, 0))
            continue
        try:
            r = _pearson(x, y)
        except ValueError:
            logger.warning("lag %d skipped: zero variance in overlap", lag)
            continue
        out.append(LagCorrelation(lag, r, int(x.size)))
    return out


def best_lag(lcs: list[LagCorrelation], reporting_window: tuple[int, int] = REPORTING_WINDOW) -> CorrelationResult:
    """Strongest positive-direction lag inside the window; ties go toward lag 0."""
    lo, hi = reporting_window
    inside = [c for c in lcs if lo <= c.lag <= hi]
    if not inside:
        raise ValueError(f"no lag inside reporting window {reporting_window}")
    top = max(inside, key=lambda c: (c.r, -abs(c.lag)))
    return CorrelationResult(top.lag, top.r, pearson_pvalue(top.r, top.n), top.n, (lo, hi))


def confidence_band(n: int) -> float:
    """Half-width of the 95% band drawn around zero correlation."""
    if n < 4:
        raise ValueError("confidence band needs n >= 4")
    return 1.96 / math.sqrt(n)


@dataclass
class LagAnalysis:
    result: CorrelationResult
    sweep: list[LagCorrelation]
    d_applied: int
    band: float
    tests: dict = field(default_factory=dict)


def lagged_correlation(
    online: WeeklySeries,
    cases: WeeklySeries,
    lag_range: tuple[int, int] = DEFAULT_SWEEP,
    reporting_window: tuple[int, int] = REPORTING_WINDOW,
    max_d: int = 2,
) -> LagAnalysis:
    """Stationarity-checked lead/lag analysis of ``online`` against ``cases``.

    Both series are differenced to the larger of their required orders so
    they stay on a common integration order.
    """
    pair = align(online, cases)
    _, d_a, _ = ensure_stationary(pair.a, max_d)
    _, d_b, _ = ensure_stationary(pair.b, max_d)
    d = max(d_a, d_b)
    pair = AlignedPair(difference(pair.a, d), difference(pair.b, d))
    tests = {
        "online": (adf_test(pair.a), kpss_test(pair.a)),
        "cases": (adf_test(pair.b), kpss_test(pair.b)),
    }
    sweep = cross_correlate(pair, lag_range)
    result = best_lag(sweep, reporting_window)
    return LagAnalysis(result, sweep, d, confidence_band(pair.n_overlap), tests)
