"""Variance-quality auditing for A/B-test confidence intervals.

Computes three metrics from A/A-test t-statistics — false positive rate,
average squared t, and excess kurtosis — each with a z-test against its
known null value, and provides the Monte Carlo machinery to compare the
metrics' power, sample complexity, and relative efficiency under
multiplicative lognormal variance noise.
"""

from varqual.metrics import (
    MetricKind,
    MetricReport,
    Sidedness,
    NULL_VALUES,
    InsufficientDataError,
    DegenerateVarianceError,
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
from varqual.power import (
    ALL_METRICS,
    DEFAULT_TARGET_POWERS,
    DEFAULT_THETAS,
    DEFAULT_TRIALS,
    FIRST_CROSSING,
    ISOTONIC,
    EfficiencyEntry,
    PowerCurve,
    PowerPoint,
    SampleComplexityResult,
    complexity_table,
    efficiency_table,
    estimate_power,
    estimate_powers,
    log_grid,
    relative_efficiency,
    run_sweep,
    sample_complexity,
)
from varqual.simulate import (
    FAST,
    FULL,
    ExperimentConfig,
    Normal,
    Uniform,
    rng_substream,
    run_aa_batch,
    sample_noise,
)

__version__ = "0.1.0"
