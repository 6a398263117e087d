"""Least-squares predictors, residuals, partial variances and correlations.

The central facts implemented here: the residual of a part's log-ratio,
after adjusting for the remaining variables, does not depend on which of the
controlled variables (or their geometric mean) serves as a reference; and
both partial variances and partial correlations drop out of the clr
covariance's pseudoinverse,

    var(part j | rest) = 1 / pinv(Gamma)_jj,
    corr(part i, part j | rest) = -pinv(Gamma)_ij
                                  / sqrt(pinv(Gamma)_ii pinv(Gamma)_jj).

Explicit residual regression is kept alongside the pseudoinverse shortcut as
an independent route; the test suite holds the two against each other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .composition import clr_transform
from .covariance import (
    AlrCovariance,
    ClrCovariance,
    ClrPseudoInverse,
    _spd_inverse,
    estimate_gamma,
    estimate_sigma,
    pseudo_inverse,
    shrink,
)
from .errors import (
    CopartialError,
    DimensionMismatch,
    DimensionTooSmall,
    InadmissibleReference,
    InvalidSubset,
    NonPositiveDiagonal,
    SingularExplanatory,
    ZeroVariance,
)

__all__ = [
    "LlspResult",
    "PartialAssociation",
    "NormalizationCheck",
    "llsp",
    "residual_of_part",
    "clr_residual_matrix",
    "partial_variances",
    "partial_correlations",
    "r_squared_alr",
    "r_squared_clr",
    "scaled_inverse_partial_corr",
    "normalization_equivalence_check",
    "partial_association",
]

# Relative eigenvalue floor below which an explanatory covariance counts as
# singular for the plain (non-pseudoinverse) regression path.
LLSP_RCOND_FLOOR = 1e-12


@dataclass(frozen=True)
class LlspResult:
    """A linear least-squares prediction split into predictor and residual.

    ``predictor_values + residual_values`` reproduces the target exactly;
    the residual is orthogonal to every centered explanatory column.
    """

    coefficients: np.ndarray
    predictor_values: np.ndarray
    residual_values: np.ndarray
    target: object = None
    explanatory: object = None


@dataclass(frozen=True)
class PartialAssociation:
    """Partial statistics of a composition, derived from pinv(Gamma).

    ``r2_alr`` is present only when an alr reference was requested; its
    entry at the reference part is NaN.
    """

    partial_variance: np.ndarray
    partial_corr: np.ndarray
    r2_clr: np.ndarray
    total_variance: float
    r2_alr: np.ndarray = None
    alr_ref: int = None


@dataclass(frozen=True)
class NormalizationCheck:
    """Comparison of normalization-based and compositional partial correlation."""

    opened_r: float
    compositional_r: float

    @property
    def discrepancy(self):
        return abs(self.opened_r - self.compositional_r)


def _explanatory_values(explanatory):
    values = getattr(explanatory, "values", explanatory)
    return np.asarray(values, dtype=float)


def llsp(target, explanatory, allow_singular=False):
    """Linear least-squares predictor of ``target`` from ``explanatory``.

    Parameters
    ----------
    target : array_like of shape (n_samples,)
    explanatory : LogRatioMatrix or array_like of shape (n_samples, k)
        ``k = 0`` is allowed; the predictor is then the target mean.
    allow_singular : bool
        Project via the pseudoinverse when the explanatory covariance is
        singular (needed for clr explanatory sets, whose columns sum to
        zero) instead of raising :class:`SingularExplanatory`.

    Notes
    -----
    Centering is handled internally; coefficients refer to centered
    variables and the predictor includes the target mean, so that
    predictor + residual equals the raw target exactly.
    """
    t = np.asarray(target, dtype=float)
    e = _explanatory_values(explanatory)
    if e.ndim != 2 or t.ndim != 1 or e.shape[0] != t.shape[0]:
        raise DimensionMismatch(
            "target must be (n,) and explanatory (n, k) with matching n"
        )
    t_mean = t.mean()
    tc = t - t_mean
    if e.shape[1] == 0:
        predictor = np.full_like(t, t_mean)
        return LlspResult(np.zeros(0), predictor, t - predictor)
    ec = e - e.mean(axis=0)
    normal = ec.T @ ec
    cross = ec.T @ tc
    eigvals = np.linalg.eigvalsh(normal)
    rcond = eigvals[0] / eigvals[-1] if eigvals[-1] > 0 else 0.0
    if rcond < LLSP_RCOND_FLOOR:
        if not allow_singular:
            raise SingularExplanatory(
                "explanatory covariance is singular; "
                "pass allow_singular=True to project via the pseudoinverse"
            )
        coefficients = np.linalg.pinv(normal) @ cross
    else:
        coefficients = np.linalg.solve(normal, cross)
    predictor = t_mean + ec @ coefficients
    return LlspResult(coefficients, predictor, t - predictor)


def _validate_parts(X, j, control):
    d = X.n_parts
    control = tuple(sorted({int(c) for c in control}))
    if not control:
        raise InvalidSubset("control set must be non-empty")
    if any(not 0 <= c < d for c in control):
        raise InvalidSubset(f"control indices must lie in 0..{d - 1}")
    if j in control:
        raise InvalidSubset(f"part {j} cannot control for itself")
    if not 0 <= j < d:
        raise InvalidSubset(f"part index {j} outside 0..{d - 1}")
    return control


def residual_of_part(X, j, control, reference="gmean",
                     check_all_references=False):
    """Residual of part ``j``'s log-ratio after adjusting for ``control``.

    ``reference`` selects the denominator of the ratios: a part index from
    ``control``, or ``"gmean"`` for the geometric mean over the control
    set.  The returned residual is the same (to floating-point precision)
    for every admissible choice; a reference outside the controlled
    variables is rejected with :class:`InadmissibleReference` because the
    invariance breaks exactly there.

    With ``check_all_references=True`` every admissible reference is
    evaluated and their agreement asserted (debug mode; tolerance 1e-10).
    """
    control = _validate_parts(X, j, control)
    logs = X.log_values()

    def _residual(ref):
        if ref == "gmean":
            gmean_log = logs[:, list(control)].mean(axis=1)
            target = logs[:, j] - gmean_log
            explan = logs[:, list(control)] - gmean_log[:, None]
            return llsp(target, explan, allow_singular=True).residual_values
        if ref not in control:
            raise InadmissibleReference(
                f"reference part {ref} is not among the controlled "
                f"variables {control}"
            )
        target = logs[:, j] - logs[:, ref]
        others = [c for c in control if c != ref]
        explan = logs[:, others] - logs[:, [ref]]
        return llsp(target, explan).residual_values

    result = _residual(reference)
    if check_all_references:
        candidates = [_residual("gmean")] + [_residual(k) for k in control]
        spread = max(
            np.max(np.abs(c - candidates[0])) for c in candidates[1:]
        ) if len(candidates) > 1 else 0.0
        if spread > 1e-10:
            raise AssertionError(
                f"residual differs across admissible references by {spread:.3e}"
            )
    return result


def clr_residual_matrix(X, gamma_pinv=None, shrinkage=0.0):
    """All D full-control residuals as an N x D matrix.

    Column ``j`` is the residual of part ``j`` adjusting for all other
    parts, computed through the pseudoinverse identity
    ``residual_j = Z pinv(Gamma) e_j / pinv(Gamma)_jj`` with ``Z`` the
    column-centered clr data.
    """
    if gamma_pinv is None:
        gamma_pinv = pseudo_inverse(estimate_gamma(X), shrinkage=shrinkage)
    gp = _pinv_values(gamma_pinv)
    diag = np.diag(gp)
    if np.any(diag <= 0):
        raise NonPositiveDiagonal(
            "pseudoinverse diagonal must be positive"
        )
    z = clr_transform(X).values
    z = z - z.mean(axis=0)
    return (z @ gp) / diag


def _pinv_values(gamma_pinv):
    if isinstance(gamma_pinv, ClrPseudoInverse):
        return gamma_pinv.gamma_pinv
    return np.asarray(gamma_pinv, dtype=float)


def partial_variances(gamma_pinv):
    """Partial variance of each part: the reciprocal pseudoinverse diagonal."""
    gp = _pinv_values(gamma_pinv)
    diag = np.diag(gp)
    if np.any(diag <= 0):
        raise NonPositiveDiagonal(
            "pseudoinverse diagonal must be positive; "
            "the covariance inversion is numerically broken"
        )
    return 1.0 / diag


def partial_correlations(gamma_pinv):
    """Partial correlation matrix: negated, rescaled pseudoinverse.

    Off-diagonal entries are ``-gp_ij / sqrt(gp_ii gp_jj)``; the diagonal
    is set to one by correlation-matrix convention.
    """
    gp = _pinv_values(gamma_pinv)
    diag = np.diag(gp)
    if np.any(diag <= 0):
        raise NonPositiveDiagonal(
            "pseudoinverse diagonal must be positive; "
            "the covariance inversion is numerically broken"
        )
    scale = np.sqrt(diag)
    corr = -gp / np.outer(scale, scale)
    corr = np.clip((corr + corr.T) / 2.0, -1.0, 1.0)
    np.fill_diagonal(corr, 1.0)
    return corr


def r_squared_alr(sigma_cov, sigma_inv=None):
    """Explained-variance fraction per alr coordinate.

    ``R^2_j = 1 - 1 / (sigma_jj sigma^{-1}_jj)``; one value per non-reference
    part, aligned with the alr column order.
    """
    sigma = np.asarray(sigma_cov.sigma, dtype=float)
    diag = np.diag(sigma)
    if np.any(diag <= 0):
        raise ZeroVariance("an alr coordinate has zero variance")
    if sigma_inv is None:
        sigma_inv = _spd_inverse(sigma)
    return 1.0 - 1.0 / (diag * np.diag(sigma_inv))


def r_squared_clr(gamma_cov, gamma_pinv=None, variant="paper"):
    """Explained-variance fraction per clr coordinate.

    Two variants are available.  ``"paper"`` evaluates
    ``1 - 1 / (gamma_jj gp_jj)``, pairing the clr variance with the partial
    variance directly.  ``"corrected"`` carries the exact factor
    ``((D-1)/D)^2`` that links the variance of ``log(x_j / g(x))`` to that
    of ``log(x_j / g(x_without_j))``, whose residual variance is
    ``1 / gp_jj``; on independent log parts it returns 0 where the plain
    variant goes negative.  Which zero-order variance the ratio should use
    is genuinely ambiguous, so both are exposed and the default stays with
    the plain formula.
    """
    if variant not in ("paper", "corrected"):
        raise CopartialError(f"unknown r-squared variant {variant!r}")
    gamma = np.asarray(gamma_cov.gamma, dtype=float)
    diag = np.diag(gamma)
    if np.any(diag <= 0):
        raise ZeroVariance("a clr coordinate has zero variance")
    if gamma_pinv is None:
        gamma_pinv = pseudo_inverse(gamma_cov)
    gp_diag = np.diag(_pinv_values(gamma_pinv))
    product = diag * gp_diag
    if variant == "paper":
        return 1.0 - 1.0 / product
    d = gamma.shape[0]
    factor = ((d - 1) / d) ** 2
    return 1.0 - factor / product


def scaled_inverse_partial_corr(cov):
    """Partial correlations via the unit-diagonal (correlation) form.

    For an :class:`AlrCovariance` the classical computation applies: scale
    to unit diagonal, invert, rescale the inverse to unit diagonal and flip
    off-diagonal signs.  The result is (D-1) x (D-1) and coincides with the
    corresponding block of :func:`partial_correlations`.

    For a :class:`ClrCovariance` the analogous D x D route requires care:
    diagonal scaling moves the null space of the singular matrix, so the
    Moore-Penrose pseudoinverse of the correlation form does *not*
    reproduce the partial correlations.  The pseudo-inversion used here is
    the one consistent with the scaling (the congruence image of
    pinv(Gamma)), under which the rescaled result coincides with
    :func:`partial_correlations` exactly.
    """
    if isinstance(cov, AlrCovariance):
        sigma = np.asarray(cov.sigma, dtype=float)
        diag = np.diag(sigma)
        if np.any(diag <= 0):
            raise ZeroVariance("an alr coordinate has zero variance")
        scale = np.sqrt(diag)
        corr_form = sigma / np.outer(scale, scale)
        inv = _spd_inverse(corr_form)
        inv_scale = np.sqrt(np.diag(inv))
        out = -inv / np.outer(inv_scale, inv_scale)
        np.fill_diagonal(out, 1.0)
        return out
    if isinstance(cov, ClrCovariance):
        gamma = np.asarray(cov.gamma, dtype=float)
        diag = np.diag(gamma)
        if np.any(diag <= 0):
            raise ZeroVariance("a clr coordinate has zero variance")
        scale = np.sqrt(diag)
        corr_form = gamma / np.outer(scale, scale)
        # Scaling-consistent pseudoinversion: undo the congruence, apply the
        # alr-inverse pseudoinverse, and map back.
        unscaled = ClrCovariance(
            corr_form * np.outer(scale, scale), cov.ddof
        )
        gp = pseudo_inverse(unscaled).gamma_pinv
        m = np.outer(scale, scale) * gp
        m_scale = np.sqrt(np.diag(m))
        out = -m / np.outer(m_scale, m_scale)
        np.fill_diagonal(out, 1.0)
        return out
    raise DimensionMismatch(
        "scaled_inverse_partial_corr expects AlrCovariance or ClrCovariance"
    )


def normalization_equivalence_check(X, normalizing, pair, control):
    """Compare normalization-based and compositional partial correlations.

    The "opened" route treats ``log(x / g(x_normalizing))`` as ordinary
    (non-compositional) data and computes the partial correlation of the
    ``pair`` columns given the ``control`` columns by plain regression.
    The compositional route correlates :func:`residual_of_part` residuals
    with the geometric-mean reference over ``control``.

    The two agree (to numerical precision) whenever the normalizing set is
    contained in the controlled variables; otherwise the discrepancy is
    typically large.  Both values are returned, never asserted.
    """
    i, j = (int(p) for p in pair)
    if i == j:
        raise InvalidSubset("pair must name two distinct parts")
    normalizing = tuple(sorted({int(u) for u in normalizing}))
    if not normalizing:
        raise InvalidSubset("normalizing set must be non-empty")
    if any(not 0 <= u < X.n_parts for u in normalizing):
        raise InvalidSubset("normalizing indices outside the part range")
    control = _validate_parts(X, i, control)
    if j in control:
        raise InvalidSubset("control set must exclude the pair under test")

    logs = X.log_values()
    norm_log = logs[:, list(normalizing)].mean(axis=1)
    opened = logs - norm_log[:, None]
    cols = list(control)
    res_i = llsp(opened[:, i], opened[:, cols],
                 allow_singular=True).residual_values
    res_j = llsp(opened[:, j], opened[:, cols],
                 allow_singular=True).residual_values
    opened_r = float(np.corrcoef(res_i, res_j)[0, 1])

    comp_i = residual_of_part(X, i, control, "gmean")
    comp_j = residual_of_part(X, j, control, "gmean")
    compositional_r = float(np.corrcoef(comp_i, comp_j)[0, 1])
    return NormalizationCheck(opened_r, compositional_r)


def partial_association(X, alr_ref=None, r2_variant="paper", ddof=1,
                        shrinkage=0.0):
    """Full partial-statistics bundle for a composition.

    Computes the clr covariance once, its pseudoinverse, and from those the
    partial variances, the partial correlation matrix, the clr R-squared
    vector and (when ``alr_ref`` is given) the alr R-squared vector with
    NaN at the reference part.
    """
    if X.n_parts < 3:
        raise DimensionTooSmall(
            "partial correlations require at least 3 parts"
        )
    gamma_cov = estimate_gamma(X, ddof=ddof)
    gamma_pinv = pseudo_inverse(gamma_cov, shrinkage=shrinkage)
    r2_alr = None
    if alr_ref is not None:
        sigma_cov = estimate_sigma(X, alr_ref, ddof=ddof)
        if shrinkage:
            sigma_cov = shrink(sigma_cov, shrinkage)
        per_coord = r_squared_alr(sigma_cov)
        r2_alr = np.full(X.n_parts, np.nan)
        targets = [t for t in range(X.n_parts) if t != alr_ref]
        r2_alr[targets] = per_coord
    return PartialAssociation(
        partial_variance=partial_variances(gamma_pinv),
        partial_corr=partial_correlations(gamma_pinv),
        r2_clr=r_squared_clr(gamma_cov, gamma_pinv, variant=r2_variant),
        total_variance=gamma_cov.total_variance,
        r2_alr=r2_alr,
        alr_ref=alr_ref,
    )
