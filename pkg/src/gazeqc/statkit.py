"""Numerical statistics shared across the toolkit.

Geometric median, OLS with inference, AIC, Welch and one-sample t tests,
Holm step-down adjustment and the normality transforms applied before
testing.  The Student t distribution is evaluated here (regularized
incomplete beta by continued fraction) so fractional Welch degrees of
freedom need no external dependency.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import RankDeficient

__all__ = [
    "OlsFit",
    "TestResult",
    "Transform",
    "median",
    "mad",
    "iqr",
    "quartiles",
    "geometric_median",
    "ols",
    "aic",
    "t_distribution_sf",
    "t_distribution_ppf",
    "welch_anova_two_groups",
    "one_sample_t",
    "holm_adjust",
    "transform",
]

# RSS at or below this fraction of sum(y^2) counts as an exact fit
EXACT_FIT_RTOL = 1e-24


def median(values) -> float:
    """Scalar median; even-length sets take the midpoint of the central pair."""
    a = np.sort(np.asarray(values, dtype=float))
    n = a.size
    if n == 0:
        raise ValueError("median of empty sequence")
    mid = n // 2
    if n % 2:
        return float(a[mid])
    return float(0.5 * (a[mid - 1] + a[mid]))


def mad(values, center=None) -> float:
    """Raw median absolute deviation (no normal-consistency factor)."""
    a = np.asarray(values, dtype=float)
    c = median(a) if center is None else center
    return median(np.abs(a - c))


def quartiles(values) -> tuple[float, float]:
    """First and third quartiles, linear interpolation between order statistics."""
    a = np.asarray(values, dtype=float)
    q1, q3 = np.percentile(a, [25.0, 75.0], method="linear")
    return float(q1), float(q3)


def iqr(values) -> float:
    q1, q3 = quartiles(values)
    return q3 - q1


def geometric_median(points, tol: float = 1e-10, max_iter: int = 1000) -> tuple[float, float]:
    """Point minimizing the sum of Euclidean distances to ``points``.

    Parameters
    ----------
    points : array-like, shape (n, 2)
    tol : float
        Iteration stops once a Weiszfeld step moves less than this.
    max_iter : int

    Returns
    -------
    (x, y) : tuple of float
        Best iterate found.
    """
    p = np.asarray(points, dtype=float).reshape(-1, 2)
    if p.shape[0] == 0:
        raise ValueError("geometric median needs at least one point")
    return kernels.weiszfeld(np.ascontiguousarray(p[:, 0]), np.ascontiguousarray(p[:, 1]), tol, max_iter)


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    std_errors: np.ndarray
    residuals: np.ndarray
    rss: float
    tss: float
    r2: float
    n: int
    p: int
    y_scale: float = 0.0

    @property
    def df_resid(self) -> int:
        return self.n - self.p

    @property
    def sigma2(self) -> float:
        return self.rss / self.df_resid if self.df_resid > 0 else float("nan")

    def ci95(self, j: int) -> tuple[float, float]:
        if self.df_resid < 1:
            return (float("nan"), float("nan"))
        q = t_distribution_ppf(0.975, self.df_resid)
        b = float(self.coefficients[j])
        h = q * float(self.std_errors[j])
        return (b - h, b + h)


def ols(y, X) -> OlsFit:
    """Least squares through a QR factorization of the design.

    ``X`` must already contain the intercept column when one is wanted.
    R-squared is computed about the mean of ``y`` and is 0 when ``y`` is
    constant.
    """
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, p = X.shape
    if y.size != n:
        raise ValueError("y and X row counts differ")
    if n < p:
        raise RankDeficient(f"{n} observations for {p} coefficients")
    Q, R = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(R))
    col_norm = np.linalg.norm(X, axis=0)
    if np.any(diag <= 1e-10 * np.maximum(col_norm, 1e-300)):
        raise RankDeficient("design matrix is rank deficient")
    beta = np.linalg.solve(R, Q.T @ y)
    fitted = X @ beta
    resid = y - fitted
    rss = float(resid @ resid)
    ybar = float(np.mean(y))
    tss = float(np.sum((y - ybar) ** 2))
    if tss > 0:
        r2 = min(1.0, max(0.0, 1.0 - rss / tss))
    else:
        r2 = 0.0
    if n > p:
        Rinv = np.linalg.inv(R)
        cov_unscaled = Rinv @ Rinv.T
        se = np.sqrt(np.maximum(np.diag(cov_unscaled), 0.0) * rss / (n - p))
    else:
        se = np.full(p, np.nan)
    return OlsFit(beta, se, resid, rss, tss, r2, n, p, float(y @ y))


def aic(fit: OlsFit) -> float:
    """``n ln(RSS/n) + 2p``; an exact fit returns ``-inf`` (ranked best)."""
    if fit.rss <= EXACT_FIT_RTOL * max(fit.y_scale, 1e-300) or fit.rss == 0.0:
        return float("-inf")
    return fit.n * math.log(fit.rss / fit.n) + 2 * fit.p


# ----------------------------------------------------------------------
# Student t distribution

def _betacf(a: float, b: float, x: float) -> float:
    # modified Lentz evaluation of the incomplete-beta continued fraction
    tiny = 1e-300
    qab = a + b
    qap = a + 1.0
    qam = a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 500):
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
        if abs(delta - 1.0) < 1e-15:
            break
    return h


def _betainc(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(x) + b * math.log1p(-x))
    bt = math.exp(lbt)
    if x < (a + 1.0) / (a + b + 2.0):
        return bt * _betacf(a, b, x) / a
    return 1.0 - bt * _betacf(b, a, 1.0 - x) / b


def t_distribution_sf(t: float, df: float) -> float:
    """Upper-tail probability P(T > t) for Student's t with real ``df``."""
    if math.isnan(t) or math.isnan(df):
        return float("nan")
    if df <= 0:
        raise ValueError("df must be positive")
    if math.isinf(t):
        return 0.0 if t > 0 else 1.0
    if math.isinf(df):
        return 0.5 * math.erfc(t / math.sqrt(2.0))
    if t == 0.0:
        return 0.5
    x = df / (df + t * t)
    tail = 0.5 * _betainc(0.5 * df, 0.5, x)
    return tail if t > 0 else 1.0 - tail


def t_distribution_ppf(q: float, df: float) -> float:
    """Quantile of Student's t, inverting :func:`t_distribution_sf` by bisection."""
    if not 0.0 < q < 1.0:
        raise ValueError("quantile must lie in (0, 1)")
    if q == 0.5:
        return 0.0
    if q < 0.5:
        return -t_distribution_ppf(1.0 - q, df)
    target = 1.0 - q
    lo, hi = 0.0, 1.0
    while t_distribution_sf(hi, df) > target:
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if t_distribution_sf(mid, df) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-14 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


# ----------------------------------------------------------------------
# tests

@dataclass(frozen=True)
class TestResult:
    statistic: float
    df: float
    p_two_tailed: float
    estimate: float
    ci95: tuple[float, float]
    degenerate: bool = False
    note: str = ""

    __test__ = False  # keep pytest from collecting this class


def _two_tailed(t: float, df: float) -> float:
    if math.isinf(t):
        return 0.0
    return min(1.0, 2.0 * t_distribution_sf(abs(t), df))


def welch_anova_two_groups(a, b) -> TestResult:
    """Welch two-sample comparison (one-way analysis of means, unequal variances).

    ``statistic`` is the signed Welch t (its square is the one-way F) for
    ``mean(a) - mean(b)``.  Zero-variance groups give a flagged degenerate
    result instead of raising.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.size < 2 or b.size < 2:
        raise ValueError("each group needs at least two values")
    ma, mb = float(np.mean(a)), float(np.mean(b))
    va, vb = float(np.var(a, ddof=1)), float(np.var(b, ddof=1))
    na, nb = a.size, b.size
    diff = ma - mb
    sa, sb = va / na, vb / nb
    se2 = sa + sb
    if se2 == 0.0:
        if diff == 0.0:
            return TestResult(0.0, float(na + nb - 2), 1.0, 0.0, (0.0, 0.0), True, "zero variance, equal means")
        stat = math.copysign(math.inf, diff)
        return TestResult(stat, float(na + nb - 2), 0.0, diff, (diff, diff), True, "zero variance")
    se = math.sqrt(se2)
    df = se2 * se2 / ((sa * sa) / (na - 1) + (sb * sb) / (nb - 1)) if (sa > 0 or sb > 0) else float(na + nb - 2)
    t = diff / se
    q = t_distribution_ppf(0.975, df)
    return TestResult(t, df, _two_tailed(t, df), diff, (diff - q * se, diff + q * se))


def one_sample_t(x, mu0: float = 1.0) -> TestResult:
    """One-sample t test of ``mean(x) == mu0`` with a 95% CI for the mean."""
    x = np.asarray(x, dtype=float)
    n = x.size
    if n < 2:
        raise ValueError("need at least two values")
    m = float(np.mean(x))
    s = float(np.std(x, ddof=1))
    df = float(n - 1)
    if s == 0.0:
        if m == mu0:
            return TestResult(0.0, df, 1.0, m, (m, m), True, "zero variance")
        stat = math.copysign(math.inf, m - mu0)
        return TestResult(stat, df, 0.0, m, (m, m), True, "zero variance")
    se = s / math.sqrt(n)
    t = (m - mu0) / se
    q = t_distribution_ppf(0.975, df)
    return TestResult(t, df, _two_tailed(t, df), m, (m - q * se, m + q * se))


def holm_adjust(p_values) -> np.ndarray:
    """Holm step-down adjusted p-values, monotone in sorted order and capped at 1."""
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return p.copy()
    if np.any((p < 0) | (p > 1)):
        raise ValueError("p-values must lie in [0, 1]")
    m = p.size
    order = np.argsort(p, kind="stable")
    adj_sorted = np.empty(m)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[idx]))
        adj_sorted[rank] = running
    out = np.empty(m)
    out[order] = adj_sorted
    return out


class Transform(str, enum.Enum):
    CUBE_ROOT = "cuberoot"
    LOGIT = "logit"


LOGIT_EPS = 1e-6


def transform(values, kind) -> np.ndarray:
    """Normality transform: sign-preserving cube root, or logit for proportions.

    Logit inputs at exactly 0 or 1 are clamped to ``LOGIT_EPS`` from the
    boundary; anything outside [0, 1] raises.
    """
    kind = Transform(kind)
    v = np.asarray(values, dtype=float)
    if kind is Transform.CUBE_ROOT:
        return np.cbrt(v)
    if np.any((v < 0) | (v > 1)):
        raise ValueError("logit needs values in [0, 1]")
    c = np.clip(v, LOGIT_EPS, 1.0 - LOGIT_EPS)
    return np.log(c / (1.0 - c))
