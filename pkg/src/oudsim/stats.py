"""Replication statistics: intervals, paired tests, sizing, normality, OLS.

Student-t probabilities go through the regularized incomplete beta function
(continued fraction, ~1e-12 accuracy); quantiles invert the CDF with
bisection polished by Newton steps.  Prediction intervals are empirical
quantiles across replications, which reproduces the asymmetric published
intervals that a symmetric normal-theory construction cannot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

_verfc = np.vectorize(math.erfc)


# --- special functions -------------------------------------------------------


def _betacf(a: float, b: float, x: float) -> float:
    # Lentz's continued fraction for the incomplete beta.
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 400):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-14:
            return h
    raise RuntimeError("incomplete beta continued fraction did not converge")


def regularized_incomplete_beta(a: float, b: float, x: float) -> float:
    """I_x(a, b) for a, b > 0 and x in [0, 1]."""
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"x must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                + a * math.log(x) + b * math.log1p(-x))
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def student_t_cdf(t: float, df: float) -> float:
    """P(T <= t) for Student's t with ``df`` degrees of freedom."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    p = 0.5 * regularized_incomplete_beta(0.5 * df, 0.5, x)
    return 1.0 - p if t > 0 else p


def student_t_ppf(q: float, df: float) -> float:
    """Quantile of Student's t by bisection plus Newton polish."""
    if not 0.0 < q < 1.0:
        raise ValueError("q must be in (0, 1)")
    if q == 0.5:
        return 0.0
    lo, hi = -1.0, 1.0
    while student_t_cdf(lo, df) > q:
        lo *= 2.0
    while student_t_cdf(hi, df) < q:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if student_t_cdf(mid, df) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-12 * max(1.0, abs(hi)):
            break
    t = 0.5 * (lo + hi)
    # Newton steps against the analytic density
    for _ in range(3):
        pdf = math.exp(math.lgamma(0.5 * (df + 1)) - math.lgamma(0.5 * df)
                       - 0.5 * math.log(df * math.pi)
                       - 0.5 * (df + 1) * math.log1p(t * t / df))
        if pdf <= 0:
            break
        t -= (student_t_cdf(t, df) - q) / pdf
    return t


# --- summaries and intervals --------------------------------------------------


@dataclass(frozen=True)
class SampleSummary:
    n: int
    mean: float
    sd: float
    se: float
    skewness: float


def summarize(samples: Sequence[float]) -> SampleSummary:
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    sd = float(x.std(ddof=1))
    g1 = skewness(x) if x.size >= 3 else math.nan
    return SampleSummary(int(x.size), float(x.mean()), sd,
                         sd / math.sqrt(x.size), g1)


def mean_ci(samples: Sequence[float], alpha: float = 0.05
            ) -> tuple[float, float, float, float]:
    """t confidence interval for the mean: (mean, half_width, lo, hi)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2:
        raise ValueError("need at least 2 samples")
    m = float(x.mean())
    se = float(x.std(ddof=1)) / math.sqrt(x.size)
    h = student_t_ppf(1.0 - alpha / 2.0, x.size - 1) * se
    return m, h, m - h, m + h


def prediction_interval(samples: Sequence[float], alpha: float = 0.05
                        ) -> tuple[float, float]:
    """Empirical (alpha/2, 1 - alpha/2) quantiles across replications."""
    x = np.asarray(samples, dtype=float)
    if x.size < 2.0 / alpha:
        raise ValueError(
            f"need at least {math.ceil(2.0 / alpha)} samples for alpha={alpha}")
    lo, hi = np.quantile(x, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def paired_t_test(a: Sequence[float], b: Sequence[float]
                  ) -> tuple[float, float]:
    """Two-sided paired t test; pairs by index (common random numbers).

    Returns (t, p).  Identical samples give (0, 1).  A nonzero mean
    difference with zero variance is an error.
    """
    x = np.asarray(a, dtype=float)
    y = np.asarray(b, dtype=float)
    if x.shape != y.shape:
        raise ValueError("paired test needs equal-length samples")
    if x.size < 2:
        raise ValueError("need at least 2 pairs")
    d = x - y
    mean_d = float(d.mean())
    sd_d = float(d.std(ddof=1))
    if sd_d == 0.0:
        if mean_d == 0.0:
            return 0.0, 1.0
        raise ValueError("zero variance of differences with nonzero mean")
    t = mean_d / (sd_d / math.sqrt(d.size))
    p = 2.0 * (1.0 - student_t_cdf(abs(t), d.size - 1))
    return t, min(p, 1.0)


def required_replications(s_hat: float, h: float, alpha: float = 0.05,
                          pilot_n: int = 600) -> int:
    """Smallest n with n >= (s_hat * t_crit / h)^2, floored at 2.

    Uses the pilot run's degrees of freedom for the t critical value
    (single pass, no iteration).
    """
    if s_hat <= 0:
        raise ValueError("s_hat must be positive")
    if h <= 0:
        raise ValueError("half width must be positive")
    if pilot_n < 2:
        raise ValueError("pilot_n must be >= 2")
    t = student_t_ppf(1.0 - alpha / 2.0, pilot_n - 1)
    return max(2, math.ceil((s_hat * t / h) ** 2))


def skewness(samples: Sequence[float]) -> float:
    """Sample skewness g1 = m3 / m2^(3/2) (biased moment convention)."""
    x = np.asarray(samples, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 samples")
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        raise ValueError("zero variance")
    m3 = float(np.mean(d ** 3))
    return m3 / m2 ** 1.5


def lilliefors_test(samples: Sequence[float], mc_rounds: int = 10_000,
                    seed: int = 0) -> tuple[float, float]:
    """Kolmogorov-Smirnov test for normality with estimated parameters.

    D is the KS distance between the empirical CDF and the normal CDF at
    the sample's own mean and standard deviation; the p-value is Monte
    Carlo, re-estimating the parameters in every simulated round.
    """
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    if n < 5:
        raise ValueError("need at least 5 samples")
    sd = float(x.std(ddof=1))
    if sd == 0.0:
        raise ValueError("zero variance")

    def ks_stat(sorted_rows: np.ndarray) -> np.ndarray:
        mean = sorted_rows.mean(axis=1, keepdims=True)
        std = sorted_rows.std(axis=1, ddof=1, keepdims=True)
        z = (sorted_rows - mean) / std
        cdf = 0.5 * _verfc(-z / math.sqrt(2.0))
        i = np.arange(1, sorted_rows.shape[1] + 1)
        d_plus = (i / n - cdf).max(axis=1)
        d_minus = (cdf - (i - 1) / n).max(axis=1)
        return np.maximum(d_plus, d_minus)

    d_obs = float(ks_stat(x[None, :])[0])
    rng = np.random.default_rng(seed)
    exceed = 0
    done = 0
    chunk = max(1, min(mc_rounds, 20_000_000 // max(n, 1)))
    while done < mc_rounds:
        m = min(chunk, mc_rounds - done)
        sims = np.sort(rng.standard_normal((m, n)), axis=1)
        exceed += int((ks_stat(sims) >= d_obs).sum())
        done += m
    p = (exceed + 1) / (mc_rounds + 1)
    return d_obs, p


# --- ordinary least squares ---------------------------------------------------


@dataclass(frozen=True)
class OlsResult:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    t_values: np.ndarray
    p_values: np.ndarray
    residuals: np.ndarray
    df_resid: int


def ols(X: Sequence[Sequence[float]], y: Sequence[float]) -> OlsResult:
    """Least squares with classical standard errors and two-sided p-values.

    ``X`` must already contain its intercept column and have full column
    rank; rank deficiency is an error rather than a silent pseudo-inverse.
    """
    Xm = np.asarray(X, dtype=float)
    yv = np.asarray(y, dtype=float)
    if Xm.ndim != 2 or Xm.shape[0] != yv.size:
        raise ValueError("X must be n x k with len(y) == n")
    n, k = Xm.shape
    if n <= k:
        raise ValueError("need more observations than columns")
    q, r = np.linalg.qr(Xm)
    if np.abs(np.diag(r)).min() < 1e-10 * np.abs(np.diag(r)).max():
        raise ValueError("design matrix is rank deficient")
    beta = np.linalg.solve(r, q.T @ yv)
    resid = yv - Xm @ beta
    df = n - k
    sigma2 = float(resid @ resid) / df
    rinv = np.linalg.inv(r)
    cov = sigma2 * (rinv @ rinv.T)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = np.where(se > 0, beta / se, np.inf)
    pvals = np.array([2.0 * (1.0 - student_t_cdf(abs(t), df)) for t in tvals])
    return OlsResult(beta, se, tvals, np.minimum(pvals, 1.0), resid, df)


def p_value_flag(p: float) -> str:
    """Significance marker: ** for p < 0.001, * for p < 0.05, else empty."""
    if p < 0.001:
        return "**"
    if p < 0.05:
        return "*"
    return ""


def format_p(p: float) -> str:
    """p-value with 3 significant digits, as printed in reports."""
    if p < 0.001:
        return "<0.001"
    return f"{p:.3g}"
