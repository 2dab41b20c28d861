"""Harvey-form state space for (seasonal) ARMA errors and its Kalman filter.

The state vector has dimension ``r = max(p*, q* + 1)`` where ``p*`` and
``q*`` are the orders of the multiplied seasonal polynomials. With
``y_t = c + x_t' beta + z_t`` the error ``z_t`` is the first state::

    alpha_{t+1} = T alpha_t + R eta_t,   eta_t ~ N(0, sigma2)
    z_t = alpha_t[0]

T is a companion matrix (AR coefficients in column 0, ones on the
superdiagonal) and R = (1, theta_1, ..., theta_{r-1}).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

DIFFUSE_VARIANCE = 1e6
_LOG_2PI = math.log(2.0 * math.pi)


class KalmanError(ArithmeticError):
    def __init__(self, step: int, message: str = "prediction variance is not positive"):
        super().__init__(f"Kalman filter failed at step {step}: {message}")
        self.step = step


@njit(cache=True)
def pacf_to_ar(partials):
    """Durbin-Levinson map from partial autocorrelations in (-1, 1) to AR coefficients."""
    p = partials.size
    phi = np.zeros(p)
    tmp = np.zeros(p)
    for k in range(p):
        rk = partials[k]
        for j in range(k):
            tmp[j] = phi[j] - rk * phi[k - 1 - j]
        for j in range(k):
            phi[j] = tmp[j]
        phi[k] = rk
    return phi


@njit(cache=True)
def ar_to_pacf(phi):
    """Inverse of :func:`pacf_to_ar` (step-down recursion)."""
    p = phi.size
    a = phi.copy()
    out = np.zeros(p)
    for k in range(p - 1, -1, -1):
        rk = a[k]
        out[k] = rk
        if k == 0:
            break
        denom = 1.0 - rk * rk
        prev = np.zeros(k)
        for j in range(k):
            prev[j] = (a[j] + rk * a[k - 1 - j]) / denom
        for j in range(k):
            a[j] = prev[j]
    return out


@njit(cache=True)
def constrain_ar(x):
    return pacf_to_ar(np.tanh(x))


@njit(cache=True)
def constrain_ma(x):
    return -pacf_to_ar(np.tanh(x))


def unconstrain_ar(phi) -> np.ndarray:
    return np.arctanh(ar_to_pacf(np.asarray(phi, dtype=float)))


def unconstrain_ma(theta) -> np.ndarray:
    return np.arctanh(ar_to_pacf(-np.asarray(theta, dtype=float)))


@njit(cache=True)
def expand_polynomials(ar, ma, sar, sma, s):
    """Coefficients of the multiplied AR and MA lag polynomials.

    Returned ``phi`` satisfies (1 - sum phi_k L^k) = (1 - sum ar_i L^i)(1 - sum sar_j L^sj);
    ``theta`` satisfies (1 + sum theta_k L^k) = (1 + sum ma_i L^i)(1 + sum sma_j L^sj).
    """
    p, q, P, Q = ar.size, ma.size, sar.size, sma.size
    phi = np.zeros(p + s * P)
    a = np.zeros(p + 1)
    a[0] = 1.0
    a[1:] = -ar
    b = np.zeros(s * P + 1)
    b[0] = 1.0
    for j in range(P):
        b[s * (j + 1)] = -sar[j]
    prod = np.zeros(p + s * P + 1)
    for i in range(a.size):
        for j in range(b.size):
            prod[i + j] += a[i] * b[j]
    phi[:] = -prod[1:]
    theta = np.zeros(q + s * Q)
    a = np.zeros(q + 1)
    a[0] = 1.0
    a[1:] = ma
    b = np.zeros(s * Q + 1)
    b[0] = 1.0
    for j in range(Q):
        b[s * (j + 1)] = sma[j]
    prod = np.zeros(q + s * Q + 1)
    for i in range(a.size):
        for j in range(b.size):
            prod[i + j] += a[i] * b[j]
    theta[:] = prod[1:]
    return phi, theta


@njit(cache=True)
def harvey_vectors(phi, theta):
    """Column 0 of the companion transition and the selection vector R."""
    r = max(phi.size, theta.size + 1)
    tcol = np.zeros(r)
    tcol[: phi.size] = phi
    rvec = np.zeros(r)
    rvec[0] = 1.0
    rvec[1 : theta.size + 1] = theta
    return tcol, rvec


@njit(cache=True)
def _companion_sandwich(tcol, M):
    """T M T' for the companion matrix with first column ``tcol``."""
    r = tcol.size
    A = np.empty((r, r))  # T M
    for i in range(r):
        for j in range(r):
            v = tcol[i] * M[0, j]
            if i + 1 < r:
                v += M[i + 1, j]
            A[i, j] = v
    B = np.empty((r, r))  # A T'
    for i in range(r):
        for j in range(r):
            v = A[i, 0] * tcol[j]
            if j + 1 < r:
                v += A[i, j + 1]
            B[i, j] = v
    return B


@njit(cache=True)
def stationary_covariance(tcol, rvec, sigma2):
    """Solve P = T P T' + sigma2 R R' by doubling; returns (P, converged)."""
    r = tcol.size
    P = sigma2 * np.outer(rvec, rvec)
    # dense power of T for the doubling step
    A = np.zeros((r, r))
    for i in range(r):
        A[i, 0] = tcol[i]
        if i + 1 < r:
            A[i, i + 1] = 1.0
    for _ in range(64):
        P_new = P + A @ P @ A.T
        A = A @ A
        diff = np.max(np.abs(P_new - P))
        P = P_new
        if diff <= 1e-16 * max(1.0, np.max(np.abs(P))):
            return 0.5 * (P + P.T), True
        if not np.isfinite(diff):
            break
    return P, False


@njit(cache=True)
def kalman_filter(resid, tcol, rvec, P0, sigma2):
    """Prediction errors ``v`` and variances ``F``; ``fail`` is the first bad step or -1."""
    n = resid.size
    r = tcol.size
    a = np.zeros(r)
    P = P0.copy()
    v = np.empty(n)
    F = np.empty(n)
    Q = sigma2 * np.outer(rvec, rvec)
    au = np.empty(r)
    Pu = np.empty((r, r))
    for t in range(n):
        f = P[0, 0]
        if not (f > 0.0) or not np.isfinite(f):
            return v, F, t
        vt = resid[t] - a[0]
        v[t] = vt
        F[t] = f
        for i in range(r):
            au[i] = a[i] + P[i, 0] * vt / f
        for i in range(r):
            for j in range(r):
                Pu[i, j] = P[i, j] - P[i, 0] * P[0, j] / f
        for i in range(r):
            a[i] = tcol[i] * au[0] + (au[i + 1] if i + 1 < r else 0.0)
        P = _companion_sandwich(tcol, Pu) + Q
    return v, F, -1


@njit(cache=True)
def concentrated_nll(theta, y, X, has_c, p, q, P, Q, s):
    """Negative log-likelihood with sigma2 profiled out.

    ``theta`` is laid out as [intercept?, exog betas, ar, ma, seasonal ar,
    seasonal ma] in unconstrained space. Returns +inf where the filter fails.
    """
    k = X.shape[1]
    pos = 0
    c = 0.0
    if has_c:
        c = theta[0]
        pos = 1
    beta = theta[pos : pos + k]
    pos += k
    ar = constrain_ar(theta[pos : pos + p])
    pos += p
    ma = constrain_ma(theta[pos : pos + q])
    pos += q
    sar = constrain_ar(theta[pos : pos + P])
    pos += P
    sma = constrain_ma(theta[pos : pos + Q])
    phi, th = expand_polynomials(ar, ma, sar, sma, s)
    tcol, rvec = harvey_vectors(phi, th)
    P0, ok = stationary_covariance(tcol, rvec, 1.0)
    if not ok:
        return np.inf
    resid = y - c - X @ beta if k > 0 else y - c
    v, F, fail = kalman_filter(resid, tcol, rvec, P0, 1.0)
    if fail >= 0:
        return np.inf
    n = y.size
    sum_log_f = 0.0
    sum_scaled = 0.0
    for t in range(n):
        sum_log_f += math.log(F[t])
        sum_scaled += v[t] * v[t] / F[t]
    sigma2 = max(sum_scaled / n, 1e-300)
    return 0.5 * n * (_LOG_2PI + math.log(sigma2) + 1.0) + 0.5 * sum_log_f


# ----------------------------------------------------------- public layer


@dataclass(frozen=True)
class StateSpace:
    transition: np.ndarray  # T (r x r)
    selection: np.ndarray  # R (r,)
    design: np.ndarray  # Z (r,)
    state_cov: float  # sigma2
    obs_intercept: float
    exog_coefs: np.ndarray

    @property
    def k_states(self) -> int:
        return self.selection.size

    @property
    def is_stable(self) -> bool:
        return bool(np.max(np.abs(np.linalg.eigvals(self.transition))) < 1.0)


def companion(tcol: np.ndarray) -> np.ndarray:
    r = tcol.size
    T = np.zeros((r, r))
    T[:, 0] = tcol
    T[np.arange(r - 1), np.arange(1, r)] = 1.0
    return T


def initial_covariance(ss: StateSpace) -> np.ndarray:
    """Unconditional covariance if T is stable, else a large diagonal proxy."""
    if ss.is_stable:
        P0, ok = stationary_covariance(ss.transition[:, 0].copy(), ss.selection, ss.state_cov)
        if ok:
            return P0
    return DIFFUSE_VARIANCE * np.eye(ss.k_states)


def kalman_loglik(ss: StateSpace, observations, exog=None) -> float:
    """Exact Gaussian log-likelihood by the prediction-error decomposition."""
    y = np.asarray(observations, dtype=float)
    if not np.all(np.isfinite(y)):
        raise ValueError("observations must be finite")
    if not ss.state_cov > 0:
        raise ValueError("innovation variance must be positive")
    mean = np.full(y.size, ss.obs_intercept)
    if ss.exog_coefs.size:
        if exog is None:
            raise ValueError("state space has regression terms but no exog was given")
        mean = mean + np.asarray(exog, dtype=float).reshape(y.size, -1) @ ss.exog_coefs
    v, F, fail = kalman_filter(y - mean, ss.transition[:, 0].copy(), ss.selection, initial_covariance(ss), ss.state_cov)
    if fail >= 0:
        raise KalmanError(int(fail))
    return float(-0.5 * np.sum(_LOG_2PI + np.log(F) + v * v / F))
