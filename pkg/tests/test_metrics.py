import math

import numpy as np
import pytest

from conftest import Z_STAR_90, fpr_quadrature, mp_normal_cdf
from varqual.metrics import (
    NULL_VALUES,
    DegenerateVarianceError,
    InsufficientDataError,
    MetricKind,
    Sidedness,
    ZeroStandardErrorError,
    apply_variance_noise,
    avg_t2,
    avg_t2_report,
    fpr,
    fpr_report,
    kurtosis_g2,
    kurtosis_report,
    kurtosis_se,
    metric_estimate,
    metric_report,
    normal_cdf,
    normal_quantile,
    welch_t,
    welch_t_rows,
)


# ---------------------------------------------------------------------------
# normal CDF / quantile


def test_normal_cdf_against_mpmath():
    for x in [-8.0, -3.0, -1.5, -0.5, 0.0, 0.3, 1.0, 2.5, 8.0]:
        assert normal_cdf(x) == pytest.approx(mp_normal_cdf(x), abs=1e-16, rel=1e-14)


def test_normal_quantile_known_values():
    assert normal_quantile(0.5) == 0.0
    assert normal_quantile(0.95) == pytest.approx(1.6448536269514722, abs=1e-15)
    assert normal_quantile(0.75) == pytest.approx(0.6744897501960817, abs=1e-15)


def test_normal_quantile_round_trips_cdf():
    for p in [1e-6, 0.01, 0.3, 0.5, 0.9, 0.999999]:
        assert normal_cdf(normal_quantile(p)) == pytest.approx(p, rel=1e-12)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.2, 1.7])
def test_normal_quantile_rejects_out_of_domain(p):
    with pytest.raises(ValueError):
        normal_quantile(p)


# ---------------------------------------------------------------------------
# Welch t


def test_welch_t_hand_value():
    # groups [1,2,3,4] and [2,3,4,5]: mean diff 1, both variances 5/3,
    # so t = 1 / sqrt((5/3)/4 + (5/3)/4) = sqrt(1.2)
    t = welch_t([1.0, 2.0, 3.0, 4.0], [2.0, 3.0, 4.0, 5.0])
    assert t == pytest.approx(1.0954451150103321, abs=1e-15)
    assert t == pytest.approx(math.sqrt(1.2), abs=1e-15)


def test_welch_t_antisymmetric(rng):
    for _ in range(20):
        c = rng.normal(size=rng.integers(2, 40))
        t = rng.normal(size=rng.integers(2, 40))
        assert welch_t(c, t) == -welch_t(t, c)


def test_welch_t_stable_under_large_offset():
    c = np.array([1.0, 2.0, 3.0, 4.0]) + 1e8
    t = np.array([2.0, 3.0, 4.0, 5.0]) + 1e8
    assert welch_t(c, t) == pytest.approx(math.sqrt(1.2), rel=1e-9)


def test_welch_t_unequal_sizes_and_variances(rng):
    c = rng.normal(0.0, 1.0, size=30)
    t = rng.normal(0.0, 3.0, size=7)
    se = math.sqrt(np.var(c, ddof=1) / 30 + np.var(t, ddof=1) / 7)
    assert welch_t(c, t) == pytest.approx((t.mean() - c.mean()) / se, rel=1e-14)


def test_welch_t_requires_two_per_group():
    with pytest.raises(InsufficientDataError):
        welch_t([1.0], [1.0, 2.0])
    with pytest.raises(InsufficientDataError):
        welch_t([1.0, 2.0], [3.0])


def test_welch_t_rejects_fully_degenerate_groups():
    with pytest.raises(DegenerateVarianceError):
        welch_t([2.0, 2.0, 2.0], [5.0, 5.0])
    # one degenerate arm is fine as long as the other has spread
    assert math.isfinite(welch_t([2.0, 2.0, 2.0], [4.0, 5.0]))


def test_welch_t_rows_matches_scalar(rng):
    control = rng.normal(size=(12, 9))
    test = rng.normal(size=(12, 9))
    rows = welch_t_rows(control, test)
    assert rows.shape == (12,)
    for i in range(12):
        assert rows[i] == pytest.approx(welch_t(control[i], test[i]), rel=1e-14)


# ---------------------------------------------------------------------------
# noise application


def test_apply_variance_noise_identity_at_unit_noise(rng):
    t = rng.normal(size=100)
    out = apply_variance_noise(t, np.ones(100))
    np.testing.assert_array_equal(out, t)


def test_apply_variance_noise_scales_by_root_xi():
    assert apply_variance_noise(2.0, 4.0) == 1.0
    np.testing.assert_allclose(
        apply_variance_noise(np.array([1.0, -3.0]), np.array([0.25, 9.0])),
        [2.0, -1.0],
    )


def test_apply_variance_noise_rejects_nonpositive_xi():
    with pytest.raises(ValueError):
        apply_variance_noise(1.0, 0.0)
    with pytest.raises(ValueError):
        apply_variance_noise(np.ones(3), np.array([1.0, -2.0, 1.0]))


# ---------------------------------------------------------------------------
# point estimates


def test_fpr_hand_batch():
    batch = [0.0, 1.0, 1.6448536269514722, 2.0, -3.0]
    # threshold for 90% CIs is Phi^-1(0.95); the comparison is closed, so the
    # exact-threshold value counts
    assert fpr(batch) == pytest.approx(3 / 5)


def test_fpr_threshold_is_closed():
    assert fpr([Z_STAR_90]) == 1.0
    assert fpr([math.nextafter(Z_STAR_90, 0.0)]) == 0.0


def test_fpr_ci_level_changes_threshold():
    batch = [0.7, -0.7]
    assert fpr(batch) == 0.0  # |t| < 1.6449
    assert fpr(batch, ci_level=0.5) == 1.0  # threshold drops to 0.6745


def test_avg_t2_hand_batch():
    assert avg_t2([1.0, 2.0, 3.0]) == pytest.approx(14 / 3, rel=1e-15)


def test_kurtosis_hand_value_exact():
    assert kurtosis_g2([-1.0, 1.0, -1.0, 1.0]) == -6.0


def test_kurtosis_of_normal_sample_near_zero(rng):
    n = 200_000
    g2 = kurtosis_g2(rng.standard_normal(n))
    assert abs(g2) < 4 * kurtosis_se(n)


def test_kurtosis_affine_invariance(rng):
    t = rng.standard_normal(500)
    base = kurtosis_g2(t)
    for a, b in [(-2.7, 13.5), (1e-3, 0.0), (40.0, -7.0)]:
        shifted = kurtosis_g2(a * t + b)
        assert abs(shifted - base) <= 1e-9 * max(1.0, abs(base))


def test_estimates_are_permutation_invariant(rng):
    t = rng.standard_normal(257)
    perm = rng.permutation(t)
    assert fpr(perm) == fpr(t)
    assert avg_t2(perm) == pytest.approx(avg_t2(t), abs=1e-12)
    assert kurtosis_g2(perm) == pytest.approx(kurtosis_g2(t), abs=1e-12)


def test_estimate_preconditions():
    with pytest.raises(InsufficientDataError):
        fpr([])
    with pytest.raises(InsufficientDataError):
        kurtosis_g2([1.0, 2.0, 3.0])  # needs n >= 4
    with pytest.raises(DegenerateVarianceError):
        kurtosis_g2([2.0, 2.0, 2.0, 2.0])
    with pytest.raises(ValueError):
        avg_t2([1.0, np.nan])
    with pytest.raises(ValueError):
        avg_t2(np.ones((3, 3)))  # not 1-D


def test_kurtosis_se_values():
    # n=4: sqrt(24*4*9 / (1*2*7*9)) exactly
    assert kurtosis_se(4) == pytest.approx(2.6186146828319083, abs=1e-15)
    # asymptotically sqrt(24/n)
    assert kurtosis_se(10**6) * math.sqrt(10**6 / 24) == pytest.approx(1.0, abs=1e-3)
    with pytest.raises(InsufficientDataError):
        kurtosis_se(3)


# ---------------------------------------------------------------------------
# z-test reports


def test_fpr_report_frozen_case():
    # 130 of 1000 values beyond the threshold: estimate 0.13 exactly
    batch = np.concatenate([np.full(130, 2.0), np.zeros(870)])
    r = fpr_report(batch)
    assert r.estimate == 0.13
    assert r.null_value == 0.1
    assert r.std_error == pytest.approx(math.sqrt(0.13 * 0.87 / 1000), rel=1e-15)
    assert r.z_score == pytest.approx(2.820914688837224, abs=1e-12)
    assert r.reject  # p ~ 0.0048 < 0.1


def test_fpr_report_zero_standard_error():
    with pytest.raises(ZeroStandardErrorError):
        fpr_report(np.zeros(50))  # FPR = 0
    with pytest.raises(ZeroStandardErrorError):
        fpr_report(np.full(50, 3.0))  # FPR = 1


def test_avg_t2_report_standard_error(rng):
    t = rng.standard_normal(400)
    r = avg_t2_report(t)
    t2 = t * t
    assert r.estimate == pytest.approx(t2.mean(), rel=1e-14)
    assert r.std_error == pytest.approx(t2.std(ddof=1) / 20, rel=1e-12)
    with pytest.raises(InsufficientDataError):
        avg_t2_report(np.array([1.3]))


def test_kurtosis_report_uses_analytic_se(rng):
    t = rng.standard_normal(100)
    r = kurtosis_report(t)
    assert r.std_error == pytest.approx(kurtosis_se(100), rel=1e-15)
    assert r.estimate == pytest.approx(kurtosis_g2(t), rel=1e-15)


def test_report_field_relationships(rng):
    alphas = [0.05, 0.1, 0.5]
    for n in [4, 37, 1000]:
        t = rng.standard_normal(n) * 1.1
        for kind in MetricKind:
            for sidedness in Sidedness:
                for alpha in alphas:
                    try:
                        r = metric_report(kind, t, alpha, sidedness)
                    except ZeroStandardErrorError:
                        continue
                    assert r.metric is kind
                    assert r.sidedness is sidedness
                    assert r.null_value == NULL_VALUES[kind]
                    assert r.std_error > 0
                    assert r.z_score == (r.estimate - r.null_value) / r.std_error
                    if sidedness is Sidedness.TWO_SIDED:
                        expected_p = 2 * mp_normal_cdf(-abs(r.z_score))
                    else:
                        expected_p = mp_normal_cdf(-r.z_score)
                    assert r.p_value == pytest.approx(expected_p, abs=1e-13)
                    assert r.reject == (r.p_value < alpha)


def test_one_sided_greater_ignores_low_tail():
    # strongly negative z: two-sided rejects, one-sided-greater must not
    t = np.full(100, 0.1)
    t[:2] = 3.0  # FPR = 0.02, well below 0.1
    two = fpr_report(t, alpha=0.1, sidedness=Sidedness.TWO_SIDED)
    one = fpr_report(t, alpha=0.1, sidedness=Sidedness.ONE_SIDED_GREATER)
    assert two.z_score < 0 and two.reject
    assert not one.reject
    assert one.p_value == pytest.approx(1 - two.p_value / 2, rel=1e-12)


def test_metric_report_matches_specific_builders(rng):
    t = rng.standard_normal(64)
    assert metric_report(MetricKind.FPR, t) == fpr_report(t)
    assert metric_report(MetricKind.AVG_T2, t) == avg_t2_report(t)
    assert metric_report(MetricKind.KURTOSIS, t) == kurtosis_report(t)
    for kind in MetricKind:
        assert metric_estimate(kind, t) == metric_report(kind, t).estimate


def test_null_values_mapping():
    assert NULL_VALUES[MetricKind.FPR] == 0.1
    assert NULL_VALUES[MetricKind.AVG_T2] == 1.0
    assert NULL_VALUES[MetricKind.KURTOSIS] == 0.0


def test_reports_are_calibrated_on_null_batches():
    # On i.i.d. standard normal t-batches each report should reject with
    # frequency alpha. R=1000 repeats at n=10^4 gives a 3-sigma band of
    # 0.1 +/- 3*sqrt(0.1*0.9/1000).
    rng = np.random.default_rng(993)
    repeats, n, alpha = 1000, 10_000, 0.1
    rejects = {kind: 0 for kind in MetricKind}
    for _ in range(repeats):
        t = rng.standard_normal(n)
        for kind in MetricKind:
            rejects[kind] += metric_report(kind, t, alpha).reject
    band = 3 * math.sqrt(alpha * (1 - alpha) / repeats)
    for kind, count in rejects.items():
        assert abs(count / repeats - alpha) < band, (kind, count / repeats)


def test_fpr_estimate_tracks_quadrature_oracle():
    # Multiplicative lognormal noise at theta=0.3: the population FPR is the
    # quadrature value of E[2 Phi(-z* sqrt(xi))], not the nominal 0.1.
    theta = 0.3
    rng = np.random.default_rng(41)
    n = 200_000
    z = rng.standard_normal(n)
    xi = np.exp(theta * rng.standard_normal(n) - theta * theta / 2)
    p = fpr_quadrature(theta)
    assert fpr(z / np.sqrt(xi)) == pytest.approx(p, abs=4 * math.sqrt(p * (1 - p) / n))
