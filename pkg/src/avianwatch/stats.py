"""Shared statistics: VIF, one-tailed Wilcoxon signed-rank, mean/std summaries."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

EXACT_WILCOXON_MAX_N = 25


@dataclass(frozen=True)
class VifReport:
    vif: tuple[float, ...]  # math.inf marks perfect collinearity
    pearson: np.ndarray


def vif(columns: Sequence[Sequence[float]]) -> VifReport:
    """Variance inflation factor of each column against the others (with intercept)."""
    X = np.column_stack([np.asarray(c, dtype=float) for c in columns])
    n, k = X.shape
    if k < 2:
        raise ValueError("VIF needs at least two columns")
    if n <= k + 1:
        raise ValueError(f"VIF needs more than {k + 1} rows, got {n}")
    if np.any(np.ptp(X, axis=0) == 0):
        raise ValueError("VIF undefined for a constant column")
    out = []
    for j in range(k):
        y = X[:, j]
        others = np.column_stack([np.ones(n), np.delete(X, j, axis=1)])
        beta, *_ = np.linalg.lstsq(others, y, rcond=None)
        resid = y - others @ beta
        yc = y - y.mean()
        r2 = 1.0 - (resid @ resid) / (yc @ yc)
        out.append(math.inf if r2 >= 1.0 - 1e-12 else 1.0 / (1.0 - r2))
    return VifReport(tuple(out), np.corrcoef(X, rowvar=False))


def _signed_ranks(x, y):
    d = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
    d = d[d != 0]
    ranks = sps.rankdata(np.abs(d))  # average ranks for ties
    return d, ranks


def _exact_upper_tail(ranks: np.ndarray, t_plus: float) -> float:
    """P(T+ >= t_plus) under random signs, by a subset-sum count over doubled ranks."""
    doubled = np.rint(2 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.float64)
    counts[0] = 1.0
    for r in doubled:
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    target = int(np.rint(2 * t_plus))
    return float(counts[target:].sum() / 2.0 ** len(doubled))


def wilcoxon_one_tailed(x: Sequence[float], y: Sequence[float], alternative: str = "greater") -> float:
    """One-tailed signed-rank p-value for paired samples.

    ``alternative="greater"`` tests whether ``x`` tends to exceed ``y``.
    Zero differences are dropped; ties share average ranks. The null
    distribution is enumerated exactly up to 25 non-zero pairs and
    approximated by a continuity-corrected normal above that.
    """
    if alternative not in ("greater", "less"):
        raise ValueError("alternative must be 'greater' or 'less'")
    if len(x) != len(y):
        raise ValueError("paired samples differ in length")
    d, ranks = _signed_ranks(x, y)
    n = d.size
    if n == 0:
        raise ValueError("all differences are zero; the test has no information")
    if n < 5:
        raise ValueError(f"need at least 5 non-zero differences, got {n}")
    if alternative == "less":
        d = -d
    t_plus = float(ranks[d > 0].sum())
    if n <= EXACT_WILCOXON_MAX_N:
        return min(1.0, _exact_upper_tail(ranks, t_plus))
    mean = n * (n + 1) / 4.0
    _, tie_sizes = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - (tie_sizes**3 - tie_sizes).sum() / 48.0
    z = (t_plus - mean - 0.5) / math.sqrt(var)
    return float(sps.norm.sf(z))


@dataclass(frozen=True)
class Summary:
    mean: float
    count: int
    _std: float | None = None

    @property
    def std(self) -> float:
        if self._std is None:
            raise ValueError("sample standard deviation needs at least two values")
        return self._std

    @property
    def has_std(self) -> bool:
        return self._std is not None


def summarize(values: Sequence[float]) -> Summary:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("cannot summarize an empty sample")
    std = float(arr.std(ddof=1)) if arr.size >= 2 else None
    return Summary(float(arr.mean()), int(arr.size), std)
