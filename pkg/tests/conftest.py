"""Shared test oracles, implemented independently of the package internals."""

import math

import mpmath
import numpy as np
import pytest
from scipy.integrate import quad
from scipy.special import ndtr

mpmath.mp.dps = 30

# Phi^-1(0.95): the |t| threshold of a two-sided 90% confidence interval.
Z_STAR_90 = 1.6448536269514722


def mp_normal_cdf(x: float) -> float:
    """Standard normal CDF via mpmath (high-precision reference)."""
    return float(0.5 * mpmath.erfc(-mpmath.mpf(x) / mpmath.sqrt(2)))


def fpr_quadrature(theta: float, z_star: float = Z_STAR_90) -> float:
    """Population false positive rate E[2 Phi(-z* sqrt(xi))] by 1-D quadrature.

    xi = exp(theta Z - theta^2/2) with Z standard normal, so the expectation
    is an integral against the standard normal density — no simulation and no
    use of the package's own samplers or CDF.
    """

    def integrand(z: float) -> float:
        s = math.exp(0.5 * (theta * z - 0.5 * theta * theta))
        return 2.0 * ndtr(-z_star * s) * math.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    value, err = quad(integrand, -12.0, 12.0, limit=200)
    assert err < 1e-8
    return value


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
