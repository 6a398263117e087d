"""The three compositional covariance specifications and the clr pseudoinverse.

A composition's second-order structure can be written three equivalent ways:
the alr covariance ``Sigma`` ((D-1) x (D-1), full rank on non-degenerate
data), the clr covariance ``Gamma`` (D x D, singular with row sums zero) and
the variation matrix of pairwise log-ratio variances.  Every partial
statistic downstream flows from the pseudoinverse of ``Gamma``, which this
module computes by the exact identity

    pinv(Gamma) = F^T Sigma^{-1} F

with ``Sigma`` referenced to the last part (any other reference gives the
same matrix after permutation; an eigendecomposition route is provided as an
independent cross-check).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .composition import (
    alr_transform,
    clr_transform,
    f_matrix,
    h_inverse,
)
from .errors import (
    CopartialError,
    DegenerateData,
    DimensionMismatch,
    DimensionTooSmall,
    IndexOutOfRange,
    LambdaOutOfRange,
    SingularCovariance,
)

__all__ = [
    "AlrCovariance",
    "ClrCovariance",
    "ClrPseudoInverse",
    "VariationMatrix",
    "estimate_sigma",
    "estimate_gamma",
    "sigma_from_gamma",
    "gamma_from_sigma",
    "pseudo_inverse",
    "pseudo_inverse_eig",
    "variation_matrix",
    "shrink",
    "ensure_nondegenerate",
]

# Inversion refuses to proceed below this reciprocal condition number.
RCOND_FLOOR = 1e-12

# Log-ratio variance below this is treated as "constant" when screening for
# degenerate inputs (ratio constant to ~1e-12 relative).
CONSTANT_VAR_FLOOR = 1e-24


@dataclass(frozen=True)
class AlrCovariance:
    """Sample covariance of alr coordinates for one reference part.

    ``ddof`` records the estimator divisor: 1 for N-1 (default), 0 for N.
    """

    sigma: np.ndarray
    ref_part: int
    ddof: int = 1

    @property
    def n_parts(self):
        return self.sigma.shape[0] + 1


@dataclass(frozen=True)
class ClrCovariance:
    """Sample covariance of clr coordinates (D x D, rows sum to zero)."""

    gamma: np.ndarray
    ddof: int = 1

    @property
    def n_parts(self):
        return self.gamma.shape[0]

    @property
    def total_variance(self):
        return float(np.trace(self.gamma))


@dataclass(frozen=True)
class ClrPseudoInverse:
    """Pseudoinverse of a clr covariance plus the route that produced it."""

    gamma_pinv: np.ndarray
    source: str

    @property
    def n_parts(self):
        return self.gamma_pinv.shape[0]


@dataclass(frozen=True)
class VariationMatrix:
    """Pairwise log-ratio variances; symmetric with a zero diagonal."""

    tau: np.ndarray

    @property
    def n_parts(self):
        return self.tau.shape[0]


def _validate_ddof(ddof):
    if ddof not in (0, 1):
        raise CopartialError(
            f"divisor flag must be 1 (N-1) or 0 (N), got {ddof!r}"
        )


def _sample_cov(values, ddof):
    n = values.shape[0]
    centered = values - values.mean(axis=0)
    return centered.T @ centered / (n - ddof)


def _require_samples(X, n_min=3):
    if X.n_samples < n_min:
        raise DimensionTooSmall(
            f"covariance estimation needs at least {n_min} samples, "
            f"got {X.n_samples}"
        )


def estimate_sigma(X, d, ddof=1):
    """Sample covariance of the alr-transformed rows (divisor N-ddof).

    Identical rows yield the zero matrix; degeneracy is screened at the
    pipeline level (see :func:`ensure_nondegenerate`), not here.
    """
    _validate_ddof(ddof)
    _require_samples(X)
    y = alr_transform(X, d)
    return AlrCovariance(_sample_cov(y.values, ddof), int(d), ddof)


def estimate_gamma(X, ddof=1):
    """Sample covariance of the clr-transformed rows (divisor N-ddof)."""
    _validate_ddof(ddof)
    _require_samples(X)
    z = clr_transform(X)
    return ClrCovariance(_sample_cov(z.values, ddof), ddof)


def _order_for_reference(d, n_parts):
    """Part order placing reference ``d`` last, others in original order."""
    if not 0 <= d < n_parts:
        raise IndexOutOfRange(f"reference index {d} outside 0..{n_parts - 1}")
    return [i for i in range(n_parts) if i != d] + [d]


def sigma_from_gamma(gamma_cov, d):
    """Convert a clr covariance to the alr covariance for reference ``d``.

    Applies ``Sigma = F Gamma F^T`` after conjugating by the permutation
    that moves the reference part to the last slot.
    """
    gamma = np.asarray(gamma_cov.gamma, dtype=float)
    n_parts = gamma.shape[0]
    if gamma.shape != (n_parts, n_parts):
        raise DimensionMismatch("gamma must be square")
    order = _order_for_reference(d, n_parts)
    g_perm = gamma[np.ix_(order, order)]
    f = f_matrix(n_parts)
    return AlrCovariance(f @ g_perm @ f.T, int(d), gamma_cov.ddof)


def gamma_from_sigma(sigma_cov):
    """Convert an alr covariance back to the clr covariance.

    Uses the right inverse of ``F``: ``Gamma = F^T H^{-1} Sigma H^{-1} F``,
    then undoes the reference permutation.  The round trip through
    :func:`sigma_from_gamma` is the identity on matrices with zero row sums.
    """
    sigma = np.asarray(sigma_cov.sigma, dtype=float)
    k = sigma.shape[0]
    if sigma.shape != (k, k):
        raise DimensionMismatch("sigma must be square")
    n_parts = k + 1
    hinv = h_inverse(n_parts)
    f = f_matrix(n_parts)
    g_perm = f.T @ hinv @ sigma @ hinv @ f
    order = _order_for_reference(sigma_cov.ref_part, n_parts)
    gamma = np.empty_like(g_perm)
    gamma[np.ix_(order, order)] = g_perm
    return ClrCovariance(gamma, sigma_cov.ddof)


def _spd_inverse(matrix):
    """Invert a symmetric positive definite matrix via Cholesky.

    Returns the symmetrized inverse.  Raises :class:`SingularCovariance`
    when factorization fails or the reciprocal condition number falls below
    ``RCOND_FLOOR``.
    """
    matrix = np.asarray(matrix, dtype=float)
    eigvals = np.linalg.eigvalsh(matrix)
    lo, hi = eigvals[0], eigvals[-1]
    rcond = lo / hi if hi > 0 else 0.0
    if not np.isfinite(rcond) or rcond < RCOND_FLOOR:
        raise SingularCovariance("covariance is numerically singular", rcond)
    try:
        cho = scipy.linalg.cho_factor(matrix, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise SingularCovariance(str(exc), rcond) from exc
    inv = scipy.linalg.cho_solve(
        cho, np.eye(matrix.shape[0]), check_finite=False
    )
    return (inv + inv.T) / 2.0


def pseudo_inverse(cov, shrinkage=0.0):
    """Pseudoinverse of the clr covariance via the alr-inverse identity.

    Accepts either a :class:`ClrCovariance` (converted to the alr covariance
    for the last part) or an :class:`AlrCovariance` directly.  With
    ``shrinkage`` > 0 the alr covariance is shrunk toward its diagonal
    before inversion, which guarantees invertibility on positive-diagonal
    input.
    """
    if isinstance(cov, ClrCovariance):
        sigma_cov = sigma_from_gamma(cov, cov.n_parts - 1)
    elif isinstance(cov, AlrCovariance):
        sigma_cov = cov
    else:
        raise DimensionMismatch(
            "pseudo_inverse expects a ClrCovariance or AlrCovariance"
        )
    if shrinkage:
        sigma_cov = shrink(sigma_cov, shrinkage)
    n_parts = sigma_cov.n_parts
    sigma_inv = _spd_inverse(sigma_cov.sigma)
    f = f_matrix(n_parts)
    gp_perm = f.T @ sigma_inv @ f
    order = _order_for_reference(sigma_cov.ref_part, n_parts)
    gp = np.empty_like(gp_perm)
    gp[np.ix_(order, order)] = gp_perm
    gp = (gp + gp.T) / 2.0
    label = f"alr-inverse(ref={sigma_cov.ref_part})"
    if shrinkage:
        label += f", shrinkage={shrinkage}"
    return ClrPseudoInverse(gp, label)


def pseudo_inverse_eig(gamma_cov, rel_tol=1e-10):
    """Moore-Penrose pseudoinverse via eigendecomposition.

    Independent cross-check of :func:`pseudo_inverse`: eigenvalues below
    ``rel_tol`` times the largest are treated as the structural zero.
    """
    gamma = np.asarray(gamma_cov.gamma, dtype=float)
    eigvals, eigvecs = np.linalg.eigh(gamma)
    cutoff = rel_tol * np.max(np.abs(eigvals))
    inv_vals = np.where(np.abs(eigvals) > cutoff, 1.0 / eigvals, 0.0)
    gp = (eigvecs * inv_vals) @ eigvecs.T
    return ClrPseudoInverse((gp + gp.T) / 2.0, "eigendecomposition")


def variation_matrix(X, ddof=1):
    """Pairwise log-ratio variances tau_ij = var(log(x_i / x_j)).

    Computed directly from the per-pair definition (the identity
    ``tau_ij = gamma_ii + gamma_jj - 2 gamma_ij`` serves as a cross-check in
    the test suite, not as the implementation).
    """
    _validate_ddof(ddof)
    _require_samples(X)
    logs = X.log_values()
    d = X.n_parts
    tau = np.zeros((d, d))
    for i in range(d):
        for j in range(i + 1, d):
            tau[i, j] = tau[j, i] = np.var(
                logs[:, i] - logs[:, j], ddof=ddof
            )
    return VariationMatrix(tau)


def shrink(sigma_cov, lam):
    """Shrink an alr covariance toward its diagonal.

    Returns ``(1 - lam) * Sigma + lam * diag(Sigma)``; ``lam = 0`` is the
    identity, ``lam = 1`` keeps only the diagonal.
    """
    if not 0.0 <= lam <= 1.0:
        raise LambdaOutOfRange(f"shrinkage must lie in [0, 1], got {lam!r}")
    sigma = np.asarray(sigma_cov.sigma, dtype=float)
    shrunk = (1.0 - lam) * sigma + lam * np.diag(np.diag(sigma))
    return AlrCovariance(shrunk, sigma_cov.ref_part, sigma_cov.ddof)


def ensure_nondegenerate(X):
    """Raise :class:`DegenerateData` when the data carry constant log-ratios.

    Two screens are applied: a clr column with (numerically) zero variance
    means a part is proportional to the geometric mean; a zero off-diagonal
    variation-matrix entry means two parts are proportional to each other.
    Either breaks covariance inversion in a way shrinkage cannot repair
    meaningfully, so it is reported as a data problem rather than a
    numerical one.
    """
    z = clr_transform(X)
    col_var = z.values.var(axis=0)
    flat = np.nonzero(col_var <= CONSTANT_VAR_FLOOR)[0]
    if flat.size:
        label = X.names[flat[0]]
        raise DegenerateData(
            f"part {label!r} has a constant clr log-ratio (no variation)"
        )
    tau = variation_matrix(X).tau
    d = X.n_parts
    off = tau + np.eye(d)  # mask the structural zero diagonal
    if np.min(off) <= CONSTANT_VAR_FLOOR:
        i, j = np.argwhere(off <= CONSTANT_VAR_FLOOR)[0]
        raise DegenerateData(
            f"parts {X.names[i]!r} and {X.names[j]!r} are proportional "
            "(zero log-ratio variance)"
        )
