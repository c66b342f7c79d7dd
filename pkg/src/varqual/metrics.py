"""Variance-quality metrics computed from batches of A/A-test t-statistics.

An A/A test assigns identical treatment to both arms, so its t-statistic is
a draw from the null distribution (approximately standard normal for large
groups). Over a batch of such t-statistics t_1..t_n, three summary metrics
flag miscalibrated variance estimates:

- false positive rate (FPR): fraction of |t_j| at or above the confidence
  threshold; null value is 1 - ci_level (0.1 for 90% intervals),
- average t^2: mean of t_j^2; null value 1,
- excess kurtosis g2: the unbiased fourth-standardized-moment estimator;
  null value 0.

Each metric comes with a normal-approximation standard error and a z-test
(``*_report`` functions) that accepts or rejects its null at a chosen
significance level.

Moment convention: M_k denotes the k-th central sample moment with 1/n
normalization, the convention under which ``kurtosis_g2`` is the standard
unbiased excess-kurtosis estimator.

All functions are pure and thread-safe.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special

_SQRT2 = math.sqrt(2.0)


class MetricKind(str, Enum):
    """The three variance-quality metrics."""

    FPR = "fpr"
    AVG_T2 = "avg_t2"
    KURTOSIS = "kurtosis"


class Sidedness(str, Enum):
    """Alternative hypothesis of a metric's z-test."""

    TWO_SIDED = "two"
    ONE_SIDED_GREATER = "greater"


class InsufficientDataError(ValueError):
    """Batch is too small for the requested statistic."""


class DegenerateVarianceError(ValueError):
    """Sample dispersion is zero where a positive one is required."""


class ZeroStandardErrorError(ValueError):
    """A metric report cannot be formed because its standard error is zero."""


NULL_VALUES = {
    MetricKind.FPR: 0.1,  # for the default 90% intervals; 1 - ci_level in general
    MetricKind.AVG_T2: 1.0,
    MetricKind.KURTOSIS: 0.0,
}


@dataclass(frozen=True)
class MetricReport:
    """Point estimate plus z-test decision for one variance-quality metric.

    Invariants: ``z_score == (estimate - null_value) / std_error``,
    ``reject == (p_value < alpha)``, and ``p_value`` follows the stated
    sidedness (``2 * Phi(-|z|)`` two-sided, ``Phi(-z)`` one-sided greater).
    """

    metric: MetricKind
    estimate: float
    null_value: float
    std_error: float
    z_score: float
    p_value: float
    reject: bool
    sidedness: Sidedness
    alpha: float


def normal_cdf(x: float) -> float:
    """Standard normal CDF, computed through the complementary error function.

    Accurate to close to machine precision over the full double range.
    """
    return 0.5 * math.erfc(-x / _SQRT2)


def normal_quantile(p: float) -> float:
    """Inverse of ``normal_cdf``. Requires 0 < p < 1."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile level must be in (0, 1), got {p}")
    return float(special.ndtri(p))


def _as_batch(values, min_n: int, what: str) -> np.ndarray:
    """Validate a t-statistic batch: 1-D, finite, at least ``min_n`` values."""
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError(f"{what} expects a 1-D batch of t-statistics, got shape {arr.shape}")
    if arr.size < min_n:
        raise InsufficientDataError(f"{what} needs at least {min_n} t-statistics, got {arr.size}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what}: t-statistics must all be finite")
    return arr


def welch_t(control, test) -> float:
    """Two-sample t-statistic for the difference of means, test minus control.

    Uses unbiased per-group sample variances and the unpooled standard error
    sqrt(s2_test/n_test + s2_control/n_control). Antisymmetric under swapping
    the groups.
    """
    c = np.asarray(control, dtype=np.float64)
    t = np.asarray(test, dtype=np.float64)
    for name, g in (("control", c), ("test", t)):
        if g.ndim != 1 or g.size < 2:
            raise InsufficientDataError(f"{name} group needs at least 2 samples")
        if not np.all(np.isfinite(g)):
            raise ValueError(f"{name} group contains non-finite samples")
    se2 = c.var(ddof=1) / c.size + t.var(ddof=1) / t.size
    if se2 <= 0.0:
        raise DegenerateVarianceError("both groups have zero sample variance")
    return float((t.mean() - c.mean()) / math.sqrt(se2))


def welch_t_rows(control: np.ndarray, test: np.ndarray) -> np.ndarray:
    """Row-wise ``welch_t`` for matrices of shape (batches, group_size)."""
    vc = control.var(axis=1, ddof=1)
    vt = test.var(axis=1, ddof=1)
    se2 = vc / control.shape[1] + vt / test.shape[1]
    if np.any(se2 <= 0.0):
        raise DegenerateVarianceError("a batch row has zero pooled variance")
    return (test.mean(axis=1) - control.mean(axis=1)) / np.sqrt(se2)


def apply_variance_noise(t, xi):
    """Rescale t-statistics as if their variance estimates were multiplied by xi.

    A variance estimate inflated by a factor xi > 0 shrinks the t-statistic
    to t / sqrt(xi). Accepts scalars or arrays (broadcast elementwise).
    """
    xi_arr = np.asarray(xi, dtype=np.float64)
    if np.any(xi_arr <= 0.0) or not np.all(np.isfinite(xi_arr)):
        raise ValueError("variance noise factors must be finite and > 0")
    out = np.asarray(t, dtype=np.float64) / np.sqrt(xi_arr)
    if np.isscalar(t) and np.isscalar(xi):
        return float(out)
    return out


def fpr(values, ci_level: float = 0.90) -> float:
    """Fraction of t-statistics at or above the two-sided confidence threshold.

    The threshold is the (1 - (1 - ci_level)/2) normal quantile; for 90%
    intervals that is the 0.95 quantile, about 1.6449. The comparison is
    closed (>=), which matters only for ties.
    """
    arr = _as_batch(values, 1, "fpr")
    if not 0.0 < ci_level < 1.0:
        raise ValueError(f"ci_level must be in (0, 1), got {ci_level}")
    threshold = normal_quantile(1.0 - (1.0 - ci_level) / 2.0)
    return float(np.mean(np.abs(arr) >= threshold))


def avg_t2(values) -> float:
    """Mean of the squared t-statistics. Equals 1 in expectation under the null."""
    arr = _as_batch(values, 1, "avg_t2")
    return float(np.mean(arr * arr))


def kurtosis_g2(values) -> float:
    """Unbiased excess-kurtosis estimator g2 of a t-statistic batch.

    g2 = (n-1)/((n-2)(n-3)) * [(n+1) * M4/M2^2 - 3(n-1)], with M2 and M4 the
    central sample moments (1/n normalization). Zero for normal data; exactly
    invariant under affine maps of the batch. Requires n >= 4 and M2 > 0.
    """
    arr = _as_batch(values, 4, "kurtosis_g2")
    n = arr.size
    d = arr - arr.mean()
    m2 = float(np.mean(d * d))
    if m2 == 0.0:
        raise DegenerateVarianceError("all t-statistics are identical; M2 is zero")
    # Standardize before taking the 4th power so M4/M2^2 stays well scaled.
    z2 = (d * d) / m2
    ratio = float(np.mean(z2 * z2))
    return (n - 1) / ((n - 2) * (n - 3)) * ((n + 1) * ratio - 3.0 * (n - 1))


def kurtosis_se(n: int) -> float:
    """Normal-approximation standard deviation of g2 for a batch of size n.

    sqrt(24 n (n-1)^2 / ((n-3)(n-2)(n+3)(n+5))); tends to sqrt(24/n).
    """
    if n < 4:
        raise InsufficientDataError(f"kurtosis_se needs n >= 4, got {n}")
    num = 24.0 * n * (n - 1) ** 2
    den = float((n - 3) * (n - 2) * (n + 3) * (n + 5))
    return math.sqrt(num / den)


def _z_test(
    metric: MetricKind,
    estimate: float,
    null_value: float,
    std_error: float,
    alpha: float,
    sidedness: Sidedness,
) -> MetricReport:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if not std_error > 0.0:
        raise ZeroStandardErrorError(
            f"{metric.value}: standard error is zero, no z-test can be formed"
        )
    z = (estimate - null_value) / std_error
    if sidedness is Sidedness.TWO_SIDED:
        p = 2.0 * normal_cdf(-abs(z))
    else:
        p = normal_cdf(-z)
    return MetricReport(
        metric=metric,
        estimate=estimate,
        null_value=null_value,
        std_error=std_error,
        z_score=z,
        p_value=p,
        reject=p < alpha,
        sidedness=sidedness,
        alpha=alpha,
    )


def fpr_report(
    values,
    alpha: float = 0.1,
    sidedness: Sidedness = Sidedness.TWO_SIDED,
    ci_level: float = 0.90,
) -> MetricReport:
    """z-test of the batch FPR against its nominal rate 1 - ci_level.

    Standard error is the binomial sqrt(FPR(1-FPR)/n), so a batch whose FPR
    is exactly 0 or 1 raises ZeroStandardErrorError.
    """
    arr = _as_batch(values, 1, "fpr_report")
    est = fpr(arr, ci_level)
    if est == 0.0 or est == 1.0:
        raise ZeroStandardErrorError(
            f"observed FPR of {est} has zero binomial standard error"
        )
    se = math.sqrt(est * (1.0 - est) / arr.size)
    # 12-significant-digit snap undoes the float subtraction artifact
    # (1.0 - 0.90 is not the 0.1 the caller meant)
    nominal = float(f"{1.0 - ci_level:.12g}")
    return _z_test(MetricKind.FPR, est, nominal, se, alpha, sidedness)


def avg_t2_report(
    values,
    alpha: float = 0.1,
    sidedness: Sidedness = Sidedness.TWO_SIDED,
) -> MetricReport:
    """z-test of the average squared t-statistic against 1.

    Standard error is sample_std(t_j^2) / sqrt(n) (ddof=1), needing n >= 2
    and a non-degenerate spread of the squared values.
    """
    arr = _as_batch(values, 2, "avg_t2_report")
    t2 = arr * arr
    se = float(t2.std(ddof=1)) / math.sqrt(arr.size)
    if se == 0.0:
        raise ZeroStandardErrorError("all squared t-statistics are identical")
    return _z_test(MetricKind.AVG_T2, float(t2.mean()), 1.0, se, alpha, sidedness)


def kurtosis_report(
    values,
    alpha: float = 0.1,
    sidedness: Sidedness = Sidedness.TWO_SIDED,
) -> MetricReport:
    """z-test of the excess-kurtosis estimate against 0, using ``kurtosis_se``."""
    arr = _as_batch(values, 4, "kurtosis_report")
    est = kurtosis_g2(arr)
    return _z_test(MetricKind.KURTOSIS, est, 0.0, kurtosis_se(arr.size), alpha, sidedness)


def metric_report(
    kind: MetricKind,
    values,
    alpha: float = 0.1,
    sidedness: Sidedness = Sidedness.TWO_SIDED,
    ci_level: float = 0.90,
) -> MetricReport:
    """Dispatch to the report function for ``kind``."""
    kind = MetricKind(kind)
    if kind is MetricKind.FPR:
        return fpr_report(values, alpha, sidedness, ci_level)
    if kind is MetricKind.AVG_T2:
        return avg_t2_report(values, alpha, sidedness)
    return kurtosis_report(values, alpha, sidedness)


def metric_estimate(kind: MetricKind, values, ci_level: float = 0.90) -> float:
    """Point estimate alone for ``kind``, without forming a z-test."""
    kind = MetricKind(kind)
    if kind is MetricKind.FPR:
        return fpr(values, ci_level)
    if kind is MetricKind.AVG_T2:
        return avg_t2(values)
    return kurtosis_g2(values)
