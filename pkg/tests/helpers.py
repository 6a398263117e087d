"""Shared generators for the test suite."""

import numpy as np

from copartial import close


def random_composition(rng, n, d, spread=0.7, names=None):
    """Lognormal composition with a well-conditioned log covariance."""
    mix = np.eye(d) + 0.4 * rng.normal(size=(d, d))
    logs = rng.normal(scale=spread, size=(n, d)) @ mix
    return close(np.exp(logs), names)


def exact_cov_logs(cov, n, rng):
    """Centered (n, d) matrix whose sample covariance (ddof=1) is exactly cov.

    Columns live in the orthogonal complement of the all-ones vector, so
    they are exactly mean-free; the Cholesky factor then pins the sample
    covariance to ``cov`` up to floating-point rounding.
    """
    cov = np.asarray(cov, dtype=float)
    d = cov.shape[0]
    if n <= d + 1:
        raise ValueError("need n > d + 1 samples")
    base = rng.normal(size=(n, d))
    base -= base.mean(axis=0)
    q, _ = np.linalg.qr(base)
    return np.sqrt(n - 1) * q @ np.linalg.cholesky(cov).T


def composition_with_exact_log_cov(cov, n, rng, names=None):
    """Composition whose log data have sample covariance exactly ``cov``."""
    return close(np.exp(exact_cov_logs(cov, n, rng)), names)
