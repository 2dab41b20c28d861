"""SARIMAX specification, estimation and rolling one-step forecasts.

Differencing is applied to the endogenous and exogenous series before
estimation (regression with ARMA errors on the differenced data), so the
state space only ever carries the stationary ARMA part.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import minimize

from ..ingestion import WEEK, WeeklySeries, align_many
from .statespace import (
    StateSpace,
    companion,
    concentrated_nll,
    constrain_ar,
    constrain_ma,
    expand_polynomials,
    harvey_vectors,
    initial_covariance,
    kalman_filter,
    KalmanError,
)

logger = logging.getLogger(__name__)

MAX_ORDER = 4
NM_MAXITER = 500
LOGLIK_RTOL = 1e-8
MAX_RESTARTS = 4
BOUNDARY_MODULUS = 0.99


class FitError(RuntimeError):
    pass


class DesignError(ValueError):
    pass


@dataclass(frozen=True)
class ModelSpec:
    p: int = 0
    d: int = 0
    q: int = 0
    P: int = 0
    D: int = 0
    Q: int = 0
    s: int = 0
    include_intercept: bool = True
    exog_count: int = 0

    def __post_init__(self):
        orders = (self.p, self.d, self.q, self.P, self.D, self.Q)
        if any(o < 0 for o in orders) or self.s < 0 or self.exog_count < 0:
            raise ValueError("model orders must be non-negative")
        if any(o > MAX_ORDER for o in orders):
            raise ValueError(f"model orders are capped at {MAX_ORDER}")
        if self.s == 0 and (self.P or self.D or self.Q):
            raise ValueError("seasonal orders need a seasonal period s > 0")
        if self.s == 1:
            raise ValueError("seasonal period must be 0 or at least 2")

    @property
    def n_diff(self) -> int:
        return self.d + self.s * self.D

    @property
    def k_free(self) -> int:
        """Parameters searched by the optimizer (the variance is profiled out)."""
        return int(self.include_intercept) + self.exog_count + self.p + self.q + self.P + self.Q

    @property
    def k_params(self) -> int:
        return self.k_free + 1

    def label(self) -> str:
        base = f"({self.p},{self.d},{self.q})"
        if self.s:
            base += f"({self.P},{self.D},{self.Q},{self.s})"
        return base


@dataclass(frozen=True)
class SarimaxParams:
    intercept: float = 0.0
    exog: tuple[float, ...] = ()
    ar: tuple[float, ...] = ()
    ma: tuple[float, ...] = ()
    seasonal_ar: tuple[float, ...] = ()
    seasonal_ma: tuple[float, ...] = ()
    sigma2: float = 1.0


@dataclass(frozen=True)
class Dataset:
    """Cases plus lag-shifted exogenous series on a common week index.

    ``exog[j].values[t]`` is the regressor value used for ``endog`` week ``t``
    (it was observed ``-lag`` weeks earlier).
    """

    endog: WeeklySeries
    exog: tuple[WeeklySeries, ...]
    exog_names: tuple[str, ...]
    lag: int
    train_weeks: int
    eval_weeks: int

    def __post_init__(self):
        if self.train_weeks + self.eval_weeks != len(self.endog):
            raise DesignError("train + eval weeks must equal the series length")
        for x in self.exog:
            if len(x) != len(self.endog) or x.start_week != self.endog.start_week:
                raise DesignError("exogenous series are not aligned with the endogenous series")

    @property
    def exog_matrix(self) -> np.ndarray:
        if not self.exog:
            return np.zeros((len(self.endog), 0))
        return np.column_stack([x.values for x in self.exog])

    def select(self, names) -> Dataset:
        idx = [self.exog_names.index(n) for n in names]
        return replace(self, exog=tuple(self.exog[i] for i in idx), exog_names=tuple(names))


def build_design(
    cases: WeeklySeries,
    exog_list: list[WeeklySeries],
    lag: int = 0,
    train_weeks: int | None = None,
    eval_weeks: int = 13,
    exog_names: tuple[str, ...] | None = None,
) -> Dataset:
    """Shift exogenous series by ``lag`` (<= 0) and split into train/eval weeks.

    With ``train_weeks=None`` every usable week not held out for evaluation
    is used for training. When fewer weeks are requested the most recent ones
    are kept.
    """
    if lag > 0:
        raise DesignError("exogenous lag must be zero or negative")
    if eval_weeks < 2:
        raise DesignError("need at least 2 evaluation weeks")
    names = tuple(exog_names) if exog_names else tuple(f"x{j + 1}" for j in range(len(exog_list)))
    if len(names) != len(exog_list):
        raise DesignError("one name per exogenous series")
    aligned = align_many([cases, *exog_list])
    total = len(aligned[0])
    shift = -lag
    if train_weeks is None:
        train_weeks = total - shift - eval_weeks
    required = shift + train_weeks + eval_weeks
    if train_weeks < 1 or required > total:
        raise DesignError(
            f"lag {lag} with {max(train_weeks, 0)} train + {eval_weeks} eval weeks needs "
            f"{shift + max(train_weeks, 1) + eval_weeks} aligned weeks, only {total} available"
        )
    keep = train_weeks + eval_weeks
    y = aligned[0].values[shift:]
    start = aligned[0].start_week + shift * WEEK
    endog = WeeklySeries(start, y)
    exog = [WeeklySeries(start, x.values[: total - shift]) for x in aligned[1:]]
    offset = len(endog) - keep
    if offset:
        first = endog.weeks[offset]
        endog = endog.slice_weeks(first, endog.end_week)
        exog = [x.slice_weeks(first, x.end_week) for x in exog]
    return Dataset(endog, tuple(exog), names, lag, train_weeks, eval_weeks)


# ----------------------------------------------------------- state space


def to_state_space(spec: ModelSpec, params: SarimaxParams) -> StateSpace:
    if len(params.exog) != spec.exog_count:
        raise ValueError(f"spec has {spec.exog_count} exog terms, params have {len(params.exog)}")
    for name, got, want in (
        ("ar", params.ar, spec.p),
        ("ma", params.ma, spec.q),
        ("seasonal_ar", params.seasonal_ar, spec.P),
        ("seasonal_ma", params.seasonal_ma, spec.Q),
    ):
        if len(got) != want:
            raise ValueError(f"{name} has {len(got)} coefficients, spec expects {want}")
    if not spec.include_intercept and params.intercept != 0.0:
        raise ValueError("spec has no intercept but params set one")
    arr = lambda v: np.asarray(v, dtype=float)  # noqa: E731
    phi, theta = expand_polynomials(arr(params.ar), arr(params.ma), arr(params.seasonal_ar), arr(params.seasonal_ma), spec.s)
    tcol, rvec = harvey_vectors(phi, theta)
    design = np.zeros(rvec.size)
    design[0] = 1.0
    return StateSpace(companion(tcol), rvec, design, float(params.sigma2), float(params.intercept), arr(params.exog))


def difference_array(x: np.ndarray, d: int, D: int = 0, s: int = 0) -> np.ndarray:
    """Apply (1 - L)^d (1 - L^s)^D along axis 0."""
    out = np.asarray(x, dtype=float)
    for _ in range(D):
        out = out[s:] - out[:-s]
    for _ in range(d):
        out = out[1:] - out[:-1]
    return out


# ------------------------------------------------------------- estimation


@dataclass(frozen=True)
class FittedModel:
    spec: ModelSpec
    params: SarimaxParams
    loglik: float
    converged: bool
    seed: int
    nobs: int
    iterations: int = 0
    exog_names: tuple[str, ...] = field(default=())

    @property
    def aic(self) -> float:
        return 2 * self.spec.k_params - 2 * self.loglik

    @property
    def max_root_modulus(self) -> float:
        """Largest inverse-root modulus over the AR and MA polynomials (0 if none)."""
        p = self.params
        phi, theta = expand_polynomials(
            np.array(p.ar), np.array(p.ma), np.array(p.seasonal_ar), np.array(p.seasonal_ma), self.spec.s
        )
        out = 0.0
        for poly in (np.r_[1.0, -phi], np.r_[1.0, theta]):
            if poly.size > 1:
                # inverse roots of c(L) are the roots of L^k c(1/L)
                out = max(out, float(np.max(np.abs(np.roots(poly)))))
        return out

    @property
    def on_boundary(self) -> bool:
        """Estimate sits at the stationarity/invertibility edge (MLE pile-up)."""
        return self.max_root_modulus >= BOUNDARY_MODULUS


def _training_arrays(spec: ModelSpec, dataset: Dataset):
    if len(dataset.exog) != spec.exog_count:
        raise ValueError(f"spec expects {spec.exog_count} exog series, dataset has {len(dataset.exog)}")
    n = dataset.train_weeks
    y = dataset.endog.values[:n]
    X = dataset.exog_matrix[:n]
    return difference_array(y, spec.d, spec.D, spec.s), difference_array(X, spec.d, spec.D, spec.s)


def _unpack(spec: ModelSpec, theta: np.ndarray):
    pos = 0
    c = 0.0
    if spec.include_intercept:
        c = float(theta[0])
        pos = 1
    beta = theta[pos : pos + spec.exog_count]
    pos += spec.exog_count
    parts = []
    for k, fn in ((spec.p, constrain_ar), (spec.q, constrain_ma), (spec.P, constrain_ar), (spec.Q, constrain_ma)):
        parts.append(tuple(float(v) for v in fn(np.ascontiguousarray(theta[pos : pos + k]))))
        pos += k
    return c, beta, parts


def fit(spec: ModelSpec, dataset: Dataset, seed: int = 0) -> FittedModel:
    """Maximum-likelihood fit on the training weeks.

    Nelder-Mead runs from a start drawn uniformly in [-0.5, 0.5] (in
    standardized, unconstrained coordinates) and is restarted from its own
    optimum until the log-likelihood changes by less than 1e-8 relative.
    """
    yd, Xd = _training_arrays(spec, dataset)
    n = yd.size
    if n <= spec.k_params + 5:
        raise FitError(f"{n} usable training weeks is too few for {spec.k_params} parameters")
    # standardize so random starts in [-0.5, 0.5] are on a sensible scale;
    # without an intercept only rescale, since centering would add one
    if spec.include_intercept:
        my, mx = yd.mean(), Xd.mean(axis=0)
    else:
        my, mx = 0.0, np.zeros(Xd.shape[1])
    sy = yd.std() or 1.0
    sx = Xd.std(axis=0)
    sx[sx == 0] = 1.0
    ys = np.ascontiguousarray((yd - my) / sy)
    Xs = np.ascontiguousarray((Xd - mx) / sx)
    args = (ys, Xs, spec.include_intercept, spec.p, spec.q, spec.P, spec.Q, spec.s)

    def nll(theta):
        return concentrated_nll(np.ascontiguousarray(theta, dtype=float), *args)

    rng = np.random.default_rng(seed)
    k = spec.k_free
    best_x = None
    for _ in range(20):
        x0 = rng.uniform(-0.5, 0.5, k)
        f0 = nll(x0)
        if math.isfinite(f0):
            best_x, best_f = x0, f0
            break
    if best_x is None:
        raise FitError("likelihood is not finite at any starting point")

    converged = k == 0
    iterations = 0
    if k:
        prev = best_f
        for _ in range(MAX_RESTARTS + 1):
            res = minimize(
                nll, best_x, method="Nelder-Mead",
                options={"maxiter": NM_MAXITER, "xatol": 1e-9, "fatol": 1e-11},
            )
            iterations += int(res.nit)
            if res.fun <= best_f:
                best_x, best_f = res.x, float(res.fun)
            if abs(prev - best_f) <= LOGLIK_RTOL * max(1.0, abs(best_f)) and res.nit < NM_MAXITER:
                converged = True
                break
            prev = best_f
    if not math.isfinite(best_f):
        raise FitError("optimizer ended at a non-finite likelihood")

    c_s, beta_s, (ar, ma, sar, sma) = _unpack(spec, best_x)
    # recover sigma2 for the standardized fit
    phi, theta = expand_polynomials(np.array(ar), np.array(ma), np.array(sar), np.array(sma), spec.s)
    tcol, rvec = harvey_vectors(phi, theta)
    ss = StateSpace(companion(tcol), rvec, np.eye(rvec.size)[0], 1.0, 0.0, np.zeros(0))
    resid = ys - c_s - (Xs @ beta_s if Xs.shape[1] else 0.0)
    v, F, fail = kalman_filter(np.ascontiguousarray(resid), tcol, rvec, initial_covariance(ss), 1.0)
    if fail >= 0:
        raise KalmanError(int(fail))
    sigma2_s = float(np.mean(v * v / F))

    beta = sy * np.asarray(beta_s) / sx
    intercept = (my + sy * c_s - float(beta @ mx)) if spec.include_intercept else 0.0
    params = SarimaxParams(
        intercept=float(intercept),
        exog=tuple(float(b) for b in beta),
        ar=ar, ma=ma, seasonal_ar=sar, seasonal_ma=sma,
        sigma2=float(sy * sy * sigma2_s),
    )
    loglik = -best_f - n * math.log(sy)
    return FittedModel(spec, params, loglik, converged, int(seed), n, iterations, dataset.exog_names)


def forecast(model: FittedModel, dataset: Dataset, horizon: int | None = None) -> np.ndarray:
    """Rolling one-step-ahead predictions for the evaluation weeks.

    The filter runs over the whole series with the fitted parameters, so each
    evaluation week is predicted from all actual values before it.
    """
    spec = model.spec
    horizon = dataset.eval_weeks if horizon is None else int(horizon)
    if not 1 <= horizon <= dataset.eval_weeks:
        raise ValueError(f"horizon must be in [1, {dataset.eval_weeks}]")
    if len(dataset.exog) != spec.exog_count:
        raise ValueError("dataset exog does not match the fitted spec")
    end = dataset.train_weeks + horizon
    y = dataset.endog.values[:end]
    X = dataset.exog_matrix[:end]
    if not np.all(np.isfinite(X)):
        raise ValueError("exogenous values missing for an evaluation week")
    nd = spec.n_diff
    if dataset.train_weeks <= nd:
        raise ValueError("training window shorter than the differencing order")
    w = difference_array(y, spec.d, spec.D, spec.s)
    Xw = difference_array(X, spec.d, spec.D, spec.s)
    ss = to_state_space(spec, model.params)
    mean = ss.obs_intercept + (Xw @ ss.exog_coefs if Xw.shape[1] else 0.0)
    v, F, fail = kalman_filter(
        np.ascontiguousarray(w - mean), ss.transition[:, 0].copy(), ss.selection, initial_covariance(ss), ss.state_cov
    )
    if fail >= 0:
        raise KalmanError(int(fail))
    w_hat = w - v
    # y_t - w_t depends only on earlier actual values
    y_hat = w_hat + (y[nd:] - w)
    return y_hat[dataset.train_weeks - nd :]


def r2_score(actual, predicted) -> float:
    a = np.asarray(actual, dtype=float)
    f = np.asarray(predicted, dtype=float)
    if a.shape != f.shape or a.size < 2:
        raise ValueError("need two equal-length arrays of at least 2 values")
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0:
        raise ValueError("R^2 undefined: actual values have zero variance")
    return 1.0 - float(np.sum((a - f) ** 2)) / ss_tot
