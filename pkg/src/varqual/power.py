"""Power, sample complexity, and relative efficiency of variance-quality metrics.

A metric's power at noise level theta and batch size n is the fraction of
independent simulated batches on which its z-test rejects. Sweeping n while
holding theta fixed yields a power curve; inverting the curve at a target
power gives the sample complexity N (how many A/A tests the metric needs);
the ratio of two metrics' sample complexities is their relative efficiency.

Every sweep cell (theta index, n index) draws from its own random substream,
so results are identical no matter how cells are ordered or spread across
worker processes. Within a cell, all metrics are evaluated on the same
simulated batches (paired comparison).
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.optimize import isotonic_regression

from varqual.metrics import (
    MetricKind,
    Sidedness,
    ZeroStandardErrorError,
    metric_report,
)
from varqual.simulate import ExperimentConfig, rng_substream, run_aa_batch

ALL_METRICS = (MetricKind.FPR, MetricKind.AVG_T2, MetricKind.KURTOSIS)

DEFAULT_THETAS = (0.1, 0.2, 0.3, 0.4)
DEFAULT_TARGET_POWERS = (0.5, 0.6, 0.7, 0.8, 0.9)
DEFAULT_TRIALS = 500

FIRST_CROSSING = "first-crossing"
ISOTONIC = "isotonic"
INTERP_MODES = (FIRST_CROSSING, ISOTONIC)


@dataclass(frozen=True)
class PowerPoint:
    """Rejection frequency of one metric at one (theta, n) cell.

    ``degenerate`` counts trials whose report could not be formed (zero
    standard error); those count as non-rejections.
    """

    theta: float
    n_tests: int
    power: float
    trials: int
    metric: MetricKind
    rejections: int
    degenerate: int = 0

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if round(self.power * self.trials) != self.rejections:
            raise ValueError(
                f"power {self.power} is not rejections/trials ({self.rejections}/{self.trials})"
            )


@dataclass(frozen=True)
class PowerCurve:
    """Power of one metric at one theta over an ascending grid of n."""

    theta: float
    metric: MetricKind
    points: tuple[PowerPoint, ...]

    def __post_init__(self):
        ns = [p.n_tests for p in self.points]
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError(f"power curve n values must be strictly increasing, got {ns}")
        for p in self.points:
            if p.theta != self.theta or p.metric != self.metric:
                raise ValueError("all points of a curve must share theta and metric")
        if len({p.trials for p in self.points}) > 1:
            raise ValueError("all points of a curve must share the trial count")

    @property
    def n_values(self) -> np.ndarray:
        return np.array([p.n_tests for p in self.points], dtype=float)

    @property
    def powers(self) -> np.ndarray:
        return np.array([p.power for p in self.points], dtype=float)

    @property
    def trials(self) -> int:
        return self.points[0].trials

    @property
    def degenerate(self) -> int:
        return sum(p.degenerate for p in self.points)


@dataclass(frozen=True)
class SampleComplexityResult:
    """Number of A/A tests a metric needs to hit ``target_power`` at one theta.

    ``n_required`` is None when the swept grid never reaches the target
    (NOT_REACHED); ``interpolated`` is False on an exact grid hit or when the
    first grid point already exceeds the target.
    """

    metric: MetricKind
    theta: float
    target_power: float
    n_required: float | None
    interpolated: bool

    @property
    def reached(self) -> bool:
        return self.n_required is not None


@dataclass(frozen=True)
class EfficiencyEntry:
    """Relative efficiency e12 = N2 / N1 of metric_1 against metric_2.

    e12 > 1 means metric_1 needs fewer A/A tests. ``e12`` is None (UNDEFINED)
    when either sample complexity is NOT_REACHED.
    """

    metric_1: MetricKind
    metric_2: MetricKind
    theta: float
    target_power: float
    e12: float | None


def log_grid(lo: float = 100, hi: float = 10_000, count: int = 30, *, integer: bool = True):
    """Geometrically spaced grid of batch sizes from lo to hi inclusive.

    With ``integer=True`` (the default) values are rounded to ints and
    deduplicated; with ``integer=False`` the raw geometric progression is
    returned (consecutive ratio (hi/lo)**(1/(count-1))).
    """
    if count < 1 or lo <= 0 or hi < lo:
        raise ValueError(f"invalid grid bounds lo={lo}, hi={hi}, count={count}")
    grid = np.geomspace(lo, hi, count)
    if integer:
        grid = np.unique(np.round(grid).astype(int))
    return grid


def estimate_powers(
    theta: float,
    n_tests: int,
    trials: int,
    metrics: Sequence[MetricKind],
    base: ExperimentConfig | None = None,
    *,
    seed: int | None = None,
    cell: tuple[int, int] = (0, 0),
    sidedness: Sidedness = Sidedness.TWO_SIDED,
    ci_level: float = 0.90,
) -> dict[MetricKind, PowerPoint]:
    """Rejection frequencies of several metrics over shared simulated batches.

    Runs ``trials`` independent batches of ``n_tests`` noisy A/A tests and
    applies every requested metric's z-test to each batch, so the comparison
    across metrics is paired. The random stream depends only on
    (seed, cell), never on which metrics are evaluated. Reports that cannot
    be formed (zero standard error) count as non-rejections and are tallied
    in ``degenerate``.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    base = base if base is not None else ExperimentConfig()
    metrics = tuple(MetricKind(m) for m in metrics)
    cfg = base.with_(theta=float(theta), n_tests=int(n_tests))
    if seed is None:
        seed = cfg.seed
    rng = rng_substream(seed, *cell)
    rejections = {m: 0 for m in metrics}
    degenerate = {m: 0 for m in metrics}
    for _ in range(trials):
        batch = run_aa_batch(cfg, rng)
        for m in metrics:
            try:
                report = metric_report(m, batch, cfg.alpha, sidedness, ci_level)
            except ZeroStandardErrorError:
                degenerate[m] += 1
            else:
                rejections[m] += report.reject
    return {
        m: PowerPoint(
            theta=float(theta),
            n_tests=int(n_tests),
            power=rejections[m] / trials,
            trials=trials,
            metric=m,
            rejections=rejections[m],
            degenerate=degenerate[m],
        )
        for m in metrics
    }


def estimate_power(
    theta: float,
    n_tests: int,
    trials: int,
    metric: MetricKind,
    base: ExperimentConfig | None = None,
    *,
    seed: int | None = None,
    cell: tuple[int, int] = (0, 0),
    sidedness: Sidedness = Sidedness.TWO_SIDED,
    ci_level: float = 0.90,
) -> PowerPoint:
    """Rejection frequency of a single metric; see ``estimate_powers``."""
    return estimate_powers(
        theta, n_tests, trials, (metric,), base,
        seed=seed, cell=cell, sidedness=sidedness, ci_level=ci_level,
    )[MetricKind(metric)]


def _sweep_cell(args) -> dict:
    (theta, n, trials, metrics, base, seed, theta_idx, n_idx, sidedness, ci_level) = args
    try:
        return estimate_powers(
            theta, n, trials, metrics, base,
            seed=seed, cell=(theta_idx, n_idx), sidedness=sidedness, ci_level=ci_level,
        )
    except (ValueError, ArithmeticError) as e:
        raise RuntimeError(f"sweep cell theta={theta}, n_tests={n} failed: {e}") from e


def run_sweep(
    thetas: Iterable[float],
    n_grid: Iterable[int],
    trials: int = DEFAULT_TRIALS,
    metrics: Sequence[MetricKind] = ALL_METRICS,
    base: ExperimentConfig | None = None,
    *,
    seed: int | None = None,
    workers: int = 1,
    sidedness: Sidedness = Sidedness.TWO_SIDED,
    ci_level: float = 0.90,
) -> list[PowerCurve]:
    """Power curves for every (theta, metric) over the full (theta, n) grid.

    Each (theta, n) cell runs on its own substream keyed by the theta index
    and the ascending rank of n, so the curves are bit-identical for any
    ``workers`` count, any execution order, and any ordering of ``n_grid``.
    Returns one curve per (theta, metric), thetas in input order, metrics in
    input order, points ascending in n.
    """
    thetas = [float(t) for t in thetas]
    ns = [int(n) for n in n_grid]
    metrics = tuple(MetricKind(m) for m in metrics)
    if not thetas or not ns or not metrics:
        raise ValueError("thetas, n_grid, and metrics must all be non-empty")
    if len(set(ns)) != len(ns):
        raise ValueError(f"n_grid values must be distinct, got {ns}")
    base = base if base is not None else ExperimentConfig()
    if seed is None:
        seed = base.seed

    ns = sorted(ns)
    tasks = [
        (theta, n, trials, metrics, base, seed, ti, ni, sidedness, ci_level)
        for ti, theta in enumerate(thetas)
        for ni, n in enumerate(ns)
    ]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            cell_results = list(pool.map(_sweep_cell, tasks))
    else:
        cell_results = [_sweep_cell(t) for t in tasks]

    curves = []
    per_theta = len(ns)
    for ti, theta in enumerate(thetas):
        cells = cell_results[ti * per_theta : (ti + 1) * per_theta]
        for m in metrics:
            curves.append(PowerCurve(theta=theta, metric=m, points=tuple(c[m] for c in cells)))
    return curves


def _adjusted_powers(curve: PowerCurve, interp: str) -> np.ndarray:
    if interp not in INTERP_MODES:
        raise ValueError(f"interp must be one of {INTERP_MODES}, got {interp!r}")
    if interp == ISOTONIC:
        return isotonic_regression(curve.powers).x
    return curve.powers


def sample_complexity(
    curve: PowerCurve,
    target_power: float,
    interp: str = FIRST_CROSSING,
) -> SampleComplexityResult:
    """Invert a power curve at ``target_power`` by linear interpolation in n.

    With the default first-crossing rule, the first grid segment whose upper
    point reaches the target is interpolated linearly in the (power, n)
    plane. ``interp="isotonic"`` first smooths the curve with a
    pool-adjacent-violators fit (power curves are monotone in expectation but
    Monte Carlo estimates wiggle), then applies the same rule. Returns
    NOT_REACHED (``n_required=None``) when no grid point attains the target.
    """
    if not 0.0 < target_power < 1.0:
        raise ValueError(f"target_power must be in (0, 1), got {target_power}")
    if not curve.points:
        raise ValueError("cannot invert an empty power curve")
    ns = curve.n_values
    ps = _adjusted_powers(curve, interp)
    hit = np.nonzero(ps >= target_power)[0]
    if hit.size == 0:
        return SampleComplexityResult(curve.metric, curve.theta, target_power, None, False)
    k = int(hit[0])
    if k == 0 or ps[k] == target_power:
        return SampleComplexityResult(
            curve.metric, curve.theta, target_power, float(ns[k]), False
        )
    frac = (target_power - ps[k - 1]) / (ps[k] - ps[k - 1])
    n_req = ns[k - 1] + frac * (ns[k] - ns[k - 1])
    return SampleComplexityResult(curve.metric, curve.theta, target_power, float(n_req), True)


def relative_efficiency(
    curve_1: PowerCurve,
    curve_2: PowerCurve,
    target_power: float,
    interp: str = FIRST_CROSSING,
) -> EfficiencyEntry:
    """e12 = N2 / N1 from the two curves' sample complexities at ``target_power``."""
    if curve_1.theta != curve_2.theta:
        raise ValueError(
            f"curves must share theta, got {curve_1.theta} and {curve_2.theta}"
        )
    n1 = sample_complexity(curve_1, target_power, interp).n_required
    n2 = sample_complexity(curve_2, target_power, interp).n_required
    e12 = None if n1 is None or n2 is None else n2 / n1
    return EfficiencyEntry(curve_1.metric, curve_2.metric, curve_1.theta, target_power, e12)


def complexity_table(
    curves: Sequence[PowerCurve],
    target_powers: Sequence[float] = DEFAULT_TARGET_POWERS,
    interp: str = FIRST_CROSSING,
) -> list[SampleComplexityResult]:
    """Sample complexity of every curve at every target power, in input order."""
    return [sample_complexity(c, tp, interp) for c in curves for tp in target_powers]


def efficiency_table(
    curves: Sequence[PowerCurve],
    target_powers: Sequence[float] = DEFAULT_TARGET_POWERS,
    interp: str = FIRST_CROSSING,
) -> list[EfficiencyEntry]:
    """Pairwise relative efficiencies per theta, over all ordered metric pairs."""
    by_theta: dict[float, list[PowerCurve]] = {}
    for c in curves:
        by_theta.setdefault(c.theta, []).append(c)
    entries = []
    for theta, group in by_theta.items():
        for c1 in group:
            for c2 in group:
                if c1.metric == c2.metric:
                    continue
                for tp in target_powers:
                    entries.append(relative_efficiency(c1, c2, tp, interp))
    return entries
