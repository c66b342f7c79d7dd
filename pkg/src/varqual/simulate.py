"""A/A-test simulation with multiplicative noise on variance estimates.

Two generation modes produce batches of t-statistics:

- ``full``: draw every sample of both groups from the source population and
  compute each t-statistic from scratch (faithful but expensive),
- ``fast``: draw each t-statistic directly from its standard-normal null
  approximation (about group_size times cheaper, statistically equivalent
  for large groups).

In both modes each variance estimate is then multiplied by an independent
lognormal factor xi with E[xi] = 1, scaling the t-statistic to t / sqrt(xi).
The noise level ``theta`` parameterizes the lognormal as
exp(theta * Z - theta^2 / 2); theta = 0 gives xi = 1 exactly.

All randomness flows through ``rng_substream``, a counter-based Philox
generator keyed by (seed, stream ids), so any partition of work across
processes reproduces the sequential results bit for bit.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Union

import numpy as np

from varqual.metrics import apply_variance_noise, welch_t_rows

FULL = "full"
FAST = "fast"

# Tests simulated per slab in full mode, bounds peak memory at ~2 * slab * S doubles.
_SLAB = 2048


@dataclass(frozen=True)
class Uniform:
    """Uniform population on [lo, hi)."""

    lo: float = 5.0
    hi: float = 6.0

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"uniform needs lo < hi, got [{self.lo}, {self.hi})")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.uniform(self.lo, self.hi, size)

    def as_dict(self) -> dict:
        return {"kind": "uniform", "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class Normal:
    """Normal population with the given mean and standard deviation."""

    mean: float = 0.0
    sd: float = 1.0

    def __post_init__(self):
        if not self.sd > 0:
            raise ValueError(f"normal needs sd > 0, got {self.sd}")

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.normal(self.mean, self.sd, size)

    def as_dict(self) -> dict:
        return {"kind": "normal", "mean": self.mean, "sd": self.sd}


SourceDistribution = Union[Uniform, Normal]


def source_from_dict(d: dict) -> SourceDistribution:
    kind = d.get("kind")
    if kind == "uniform":
        return Uniform(float(d["lo"]), float(d["hi"]))
    if kind == "normal":
        return Normal(float(d["mean"]), float(d["sd"]))
    raise ValueError(f"unknown source distribution kind: {kind!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    """One simulation cell: population, group size, noise level, batch size.

    ``theta`` is the lognormal noise level (0 means clean A/A tests),
    ``n_tests`` the number of t-statistics per batch, ``group_size`` the
    per-arm sample count in full mode.
    """

    theta: float = 0.0
    n_tests: int = 1000
    group_size: int = 1000
    source: SourceDistribution = Uniform(5.0, 6.0)
    alpha: float = 0.1
    mode: str = FULL
    seed: int = 0

    def __post_init__(self):
        if self.theta < 0:
            raise ValueError(f"theta must be >= 0, got {self.theta}")
        if self.n_tests < 1:
            raise ValueError(f"n_tests must be >= 1, got {self.n_tests}")
        if self.group_size < 2:
            raise ValueError(f"group_size must be >= 2, got {self.group_size}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.mode not in (FULL, FAST):
            raise ValueError(f"mode must be '{FULL}' or '{FAST}', got {self.mode!r}")

    def with_(self, **kwargs) -> "ExperimentConfig":
        return replace(self, **kwargs)


def rng_substream(seed: int, *stream_ids: int) -> np.random.Generator:
    """Independent, reproducible random stream for (seed, stream_ids).

    Same arguments always give the same stream; distinct stream ids give
    statistically independent streams. Built on the counter-based Philox
    bit generator so substreams need no sequential skipping. This is the
    sole entry point for randomness in the package.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(i) for i in stream_ids))
    return np.random.Generator(np.random.Philox(ss))


def sample_noise(theta: float, size, rng: np.random.Generator) -> np.ndarray:
    """Draw multiplicative variance-noise factors xi = exp(theta*Z - theta^2/2).

    The factors are lognormal with unit mean for every theta; theta = 0
    yields exactly 1.0 (the draw is still consumed, keeping streams aligned
    across noise levels).
    """
    if theta < 0:
        raise ValueError(f"theta must be >= 0, got {theta}")
    z = rng.standard_normal(size)
    return np.exp(theta * z - 0.5 * theta * theta)


def run_aa_batch_full(config: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    """Batch of noisy A/A t-statistics from per-sample simulation.

    For each of ``config.n_tests`` tests, draws ``group_size`` samples per arm
    from the source, forms the two-sample t-statistic, then applies one noise
    factor to its variance estimate. Returns the t-statistics in generation
    order.
    """
    n, s = config.n_tests, config.group_size
    t = np.empty(n, dtype=np.float64)
    for start in range(0, n, _SLAB):
        m = min(_SLAB, n - start)
        control = config.source.sample(rng, (m, s))
        test = config.source.sample(rng, (m, s))
        t[start : start + m] = welch_t_rows(control, test)
    xi = sample_noise(config.theta, n, rng)
    return apply_variance_noise(t, xi)


def run_aa_batch_fast(config: ExperimentConfig, rng: np.random.Generator) -> np.ndarray:
    """Batch of noisy A/A t-statistics drawn from the null approximation.

    Skips per-sample simulation: each clean t-statistic is a standard-normal
    draw, then noise is applied exactly as in full mode.
    """
    z = rng.standard_normal(config.n_tests)
    xi = sample_noise(config.theta, config.n_tests, rng)
    return apply_variance_noise(z, xi)


def run_aa_batch(config: ExperimentConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """Generate one batch in the mode selected by ``config.mode``.

    When ``rng`` is omitted, a fresh root substream for ``config.seed`` is used.
    """
    if rng is None:
        rng = rng_substream(config.seed)
    if config.mode == FAST:
        return run_aa_batch_fast(config, rng)
    return run_aa_batch_full(config, rng)
