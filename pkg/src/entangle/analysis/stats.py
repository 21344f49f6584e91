"""Small-sample statistics: IQM, Pearson correlation, paired tests."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import betainc

from ..errors import AllZeroDifferences, DegenerateVariance, EmptyInput, LengthMismatch

EXACT_WILCOXON_MAX_N = 12


def iqm(values) -> float:
    """Interquartile mean: average of the middle half, with fractional end weights.

    Sorted value ``i`` covers ``[i, i+1)``; the middle half is ``[M/4, 3M/4]``.
    """
    x = np.sort(np.asarray(values, dtype=np.float64).ravel())
    m = x.size
    if m == 0:
        raise EmptyInput("iqm of an empty list")
    lo, hi = m / 4.0, 3.0 * m / 4.0
    idx = np.arange(m)
    weights = np.clip(np.minimum(idx + 1, hi) - np.maximum(idx, lo), 0.0, None)
    return float(np.dot(weights, x) / (hi - lo))


def student_t_cdf(t: float, dof: float) -> float:
    if dof <= 0:
        raise ValueError("dof must be positive")
    if t == 0:
        return 0.5
    if math.isinf(t):
        return 1.0 if t > 0 else 0.0
    tail = 0.5 * float(betainc(dof / 2.0, 0.5, dof / (dof + t * t)))
    return 1.0 - tail if t > 0 else tail


def t_two_sided_p(t: float, dof: float) -> float:
    if math.isinf(t):
        return 0.0
    return min(1.0, float(betainc(dof / 2.0, 0.5, dof / (dof + t * t))))


@dataclass
class CorrelationResult:
    pearson_r: float
    n: int
    t_statistic: float
    p_two_sided: float

    def to_json(self) -> dict:
        return asdict(self)


def pearson(x, y) -> CorrelationResult:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.size != y.size:
        raise LengthMismatch("pearson needs equal-length inputs")
    n = x.size
    if n < 3:
        raise EmptyInput("pearson needs at least 3 points")
    xc, yc = x - x.mean(), y - y.mean()
    sxx, syy = float(xc @ xc), float(yc @ yc)
    if sxx <= 0.0 or syy <= 0.0:
        raise DegenerateVariance("zero variance in pearson input")
    r = float(np.clip((xc @ yc) / math.sqrt(sxx * syy), -1.0, 1.0))
    if abs(r) == 1.0:
        t = math.copysign(math.inf, r)
    else:
        t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return CorrelationResult(r, n, t, t_two_sided_p(t, n - 2))


@dataclass
class PairedTestResult:
    test: str
    statistic: float
    p_two_sided: float
    n_effective: int

    def to_json(self) -> dict:
        return asdict(self)


def _paired(a, b) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"paired samples differ in length ({a.size} vs {b.size})")
    return a - b


def midranks(x) -> np.ndarray:
    """1-based ranks with ties sharing the mean of their positions."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="mergesort")
    ranks = np.empty(x.size)
    sorted_x = x[order]
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_signed_rank_p(ranks: np.ndarray, w_plus: float) -> float:
    # midranks are multiples of 1/2, so doubled ranks index an integer DP table
    r2 = np.rint(2 * ranks).astype(np.int64)
    total = int(r2.sum())
    counts = np.zeros(total + 1)
    counts[0] = 1.0
    for r in r2:
        counts[r:] = counts[r:] + counts[: total + 1 - r].copy()
    probs = counts / counts.sum()
    w2 = int(round(2 * w_plus))
    lower = probs[: w2 + 1].sum()
    upper = probs[w2:].sum()
    return min(1.0, 2.0 * min(lower, upper))


def _normal_signed_rank_p(ranks: np.ndarray, w_plus: float) -> float:
    n = ranks.size
    mean = n * (n + 1) / 4.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var = n * (n + 1) * (2 * n + 1) / 24.0 - float(np.sum(tie_counts**3 - tie_counts)) / 48.0
    if var <= 0:
        return 1.0
    dev = max(abs(w_plus - mean) - 0.5, 0.0)
    return min(1.0, math.erfc(dev / math.sqrt(var) / math.sqrt(2.0)))


def wilcoxon_signed_rank(a, b, method: str = "auto") -> PairedTestResult:
    """Two-sided signed-rank test on ``a - b`` (zero differences dropped).

    ``method="auto"`` uses the exact null distribution for up to 12 nonzero
    differences and a normal approximation with tie and continuity
    corrections beyond that.
    """
    if method not in ("auto", "exact", "normal"):
        raise ValueError("method must be auto, exact or normal")
    d = _paired(a, b)
    d = d[d != 0.0]
    n = d.size
    if n == 0:
        raise AllZeroDifferences("all paired differences are zero")
    ranks = midranks(np.abs(d))
    w_plus = float(ranks[d > 0].sum())
    exact = method == "exact" or (method == "auto" and n <= EXACT_WILCOXON_MAX_N)
    p = _exact_signed_rank_p(ranks, w_plus) if exact else _normal_signed_rank_p(ranks, w_plus)
    return PairedTestResult("wilcoxon", w_plus, p, n)


def paired_t_test(a, b) -> PairedTestResult:
    d = _paired(a, b)
    n = d.size
    if n < 2:
        raise EmptyInput("paired t-test needs at least 2 pairs")
    sd = float(np.std(d, ddof=1))
    if sd == 0.0:
        raise DegenerateVariance("paired differences have zero variance")
    t = float(d.mean() / (sd / math.sqrt(n)))
    return PairedTestResult("paired_t", t, t_two_sided_p(t, n - 1), n)
