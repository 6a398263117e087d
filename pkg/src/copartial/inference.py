"""Permutation-based plug-in FDR estimates and q-values for partial correlations.

The null distribution is generated by independently permuting the samples
within each column of the data matrix, re-running the covariance pipeline,
and collecting the randomized partial correlations.  For a cutoff ``C`` on
a fixed grid, the FDR estimate divides the average number of randomized
pairs at or beyond the cutoff by the number of observed pairs at or beyond
it; the q-value of an observed correlation is the minimum FDR over cutoffs
at or below it, evaluated separately per tail.  Counting uses closed
inequalities (>= C, <= -C) and the averaging happens count-first: summed
integer counts over replicates divided once, never per-replicate ratios.

Everything is deterministic given the seed: replicate ``b`` draws from a
Philox generator keyed by ``(seed, b)``, so results do not depend on
execution order or chunking.  Results are reproducible within one backend;
the compiled and NumPy kernels see identical permutations but may differ in
the last floating-point ulp of the randomized statistics.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ._backend import resolve_backend
from ._kernels import cutoff_grid, exceedance_counts
from .composition import close
from .covariance import estimate_gamma, pseudo_inverse
from .errors import CopartialError, DimensionTooSmall, SingularCovariance
from .partial import clr_residual_matrix, partial_correlations

__all__ = [
    "PermutationConfig",
    "FdrCurves",
    "PairQValue",
    "QValueTable",
    "permute_dataset",
    "fdr_curve",
    "q_values",
    "run_inference",
]

# Warn when more than this fraction of replicates fail.
FAILURE_WARN_FRACTION = 0.01


@dataclass(frozen=True)
class PermutationConfig:
    """Settings of the permutation test.

    ``mode`` selects what gets permuted: ``"columns"`` (default) permutes
    the raw data columns and re-runs the full pipeline per replicate;
    ``"residuals"`` permutes the columns of the observed full-control
    residual matrix and correlates them directly, a deliberately less
    severe variant kept behind this flag.
    """

    n_randomizations: int = 10000
    cutoff_step: float = 0.001
    seed: int = 0
    mode: str = "columns"
    shrinkage: float = 0.0

    def __post_init__(self):
        if self.n_randomizations < 1:
            raise CopartialError("n_randomizations must be at least 1")
        if not 0.0 < self.cutoff_step <= 1.0:
            raise CopartialError("cutoff_step must lie in (0, 1]")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise CopartialError("seed must be an unsigned 64-bit integer")
        if self.mode not in ("columns", "residuals"):
            raise CopartialError(
                f"mode must be 'columns' or 'residuals', got {self.mode!r}"
            )
        if not 0.0 <= self.shrinkage <= 1.0:
            raise CopartialError("shrinkage must lie in [0, 1]")


@dataclass(frozen=True)
class FdrCurves:
    """Per-tail FDR-versus-cutoff curves plus the counts behind them.

    ``fdr_pos[k]`` estimates the FDR at cutoff ``cutoffs[k]`` on the
    positive tail (NaN where no observed pair reaches the cutoff);
    ``fdr_neg`` mirrors it for values <= -cutoff.
    """

    cutoffs: np.ndarray
    fdr_pos: np.ndarray
    fdr_neg: np.ndarray
    obs_pos: np.ndarray
    obs_neg: np.ndarray
    rand_pos_mean: np.ndarray
    rand_neg_mean: np.ndarray
    n_replicates: int


@dataclass(frozen=True)
class PairQValue:
    """One unordered pair's observed partial correlation and q-value."""

    i: int
    j: int
    name_i: str
    name_j: str
    r: float
    q: float
    tail: str


@dataclass(frozen=True)
class QValueTable:
    """All pairs' q-values plus the curves and settings that produced them."""

    pairs: tuple
    curves: FdrCurves
    partial_corr: np.ndarray
    names: tuple
    n_randomizations: int
    n_failed: int
    seed: int
    mode: str
    shrinkage: float
    backend: str

    def q_matrix(self):
        """Symmetric matrix of q-values with NaN on the diagonal."""
        d = len(self.names)
        out = np.full((d, d), np.nan)
        for p in self.pairs:
            out[p.i, p.j] = out[p.j, p.i] = p.q
        return out


def permute_dataset(X, rng):
    """Permute the samples within each column independently, then re-close.

    Column multisets are preserved; row closure is destroyed by the
    independent permutations and restored by re-closing, which leaves every
    log-ratio covariance unchanged (per-row scaling invariance).
    """
    permuted = rng.permuted(X.values, axis=0)
    return close(permuted, X.names)


def _curves_from_counts(obs_pos, obs_neg, rand_pos_sum, rand_neg_sum,
                        cutoffs, n_replicates):
    with np.errstate(divide="ignore", invalid="ignore"):
        fdr_pos = np.where(
            obs_pos > 0, rand_pos_sum / (n_replicates * obs_pos), np.nan
        )
        fdr_neg = np.where(
            obs_neg > 0, rand_neg_sum / (n_replicates * obs_neg), np.nan
        )
    return FdrCurves(
        cutoffs=cutoffs,
        fdr_pos=fdr_pos,
        fdr_neg=fdr_neg,
        obs_pos=obs_pos.astype(np.int64),
        obs_neg=obs_neg.astype(np.int64),
        rand_pos_mean=rand_pos_sum / n_replicates,
        rand_neg_mean=rand_neg_sum / n_replicates,
        n_replicates=n_replicates,
    )


def fdr_curve(observed_r, randomized_r, step):
    """FDR-versus-cutoff curves from observed and randomized pair values.

    Parameters
    ----------
    observed_r : array_like, shape (n_pairs,)
    randomized_r : array_like, shape (n_replicates, n_pairs)
    step : float
        Cutoff grid spacing; the grid is {step, 2 step, ..., <= 1}.
    """
    observed_r = np.atleast_1d(np.asarray(observed_r, dtype=float))
    randomized_r = np.atleast_2d(np.asarray(randomized_r, dtype=float))
    if observed_r.size == 0:
        raise CopartialError("need at least one observed pair")
    cutoffs = cutoff_grid(step)
    obs_pos, obs_neg = exceedance_counts(observed_r, cutoffs)
    k = cutoffs.shape[0]
    rand_pos = np.zeros(k, dtype=np.int64)
    rand_neg = np.zeros(k, dtype=np.int64)
    for row in randomized_r:
        pos, neg = exceedance_counts(row, cutoffs)
        rand_pos += pos
        rand_neg += neg
    return _curves_from_counts(
        obs_pos, obs_neg, rand_pos, rand_neg, cutoffs,
        randomized_r.shape[0],
    )


def _q_for_value(r, curves):
    """Minimum FDR over cutoffs at or below |r| on r's tail, capped at 1."""
    if r >= 0:
        fdr = curves.fdr_pos
        rank = int(np.searchsorted(curves.cutoffs, r, side="right"))
    else:
        fdr = curves.fdr_neg
        rank = int(np.searchsorted(curves.cutoffs, -r, side="right"))
    if rank == 0:
        return 1.0
    window = fdr[:rank]
    finite = window[~np.isnan(window)]
    if finite.size == 0:
        return 1.0
    return float(min(1.0, finite.min()))


def q_values(curves, observed_r):
    """Q-value for each observed pair value against the given curves."""
    observed_r = np.atleast_1d(np.asarray(observed_r, dtype=float))
    return np.array([_q_for_value(r, curves) for r in observed_r])


def run_inference(X, config=None, backend="auto"):
    """Permutation q-values for every pair of parts.

    The observed partial correlations come from the pseudoinverse pipeline
    (with the configured shrinkage); the null replicates permute either the
    data columns or the residual columns, per ``config.mode``.  Replicates
    whose covariance cannot be inverted are recorded and excluded, with a
    warning when they exceed 1% of the total.
    """
    if config is None:
        config = PermutationConfig()
    if X.n_parts < 3:
        raise DimensionTooSmall(
            "partial correlations require at least 3 parts"
        )
    backend_name, kernel = resolve_backend(backend)

    gamma_cov = estimate_gamma(X)
    gamma_pinv = pseudo_inverse(gamma_cov, shrinkage=config.shrinkage)
    r_matrix = partial_correlations(gamma_pinv)
    iu = np.triu_indices(X.n_parts, k=1)
    observed = r_matrix[iu]

    if config.mode == "columns":
        base = X.log_values()
        pipeline = "partial"
    else:
        base = clr_residual_matrix(X, gamma_pinv)
        pipeline = "correlation"

    cutoffs = cutoff_grid(config.cutoff_step)
    rand_pos, rand_neg, n_failed = kernel.replicate_counts(
        base, config.n_randomizations, config.seed, cutoffs,
        shrinkage=config.shrinkage, pipeline=pipeline,
    )
    n_effective = config.n_randomizations - n_failed
    if n_effective == 0:
        raise SingularCovariance(
            "every permutation replicate failed to invert"
        )
    if n_failed > FAILURE_WARN_FRACTION * config.n_randomizations:
        warnings.warn(
            f"{n_failed} of {config.n_randomizations} permutation "
            "replicates failed and were excluded",
            RuntimeWarning,
            stacklevel=2,
        )

    obs_pos, obs_neg = exceedance_counts(observed, cutoffs)
    curves = _curves_from_counts(
        obs_pos, obs_neg, rand_pos, rand_neg, cutoffs, n_effective
    )
    qs = q_values(curves, observed)
    pairs = tuple(
        PairQValue(
            i=int(i),
            j=int(j),
            name_i=X.names[i],
            name_j=X.names[j],
            r=float(r),
            q=float(q),
            tail="positive" if r >= 0 else "negative",
        )
        for i, j, r, q in zip(iu[0], iu[1], observed, qs)
    )
    return QValueTable(
        pairs=pairs,
        curves=curves,
        partial_corr=r_matrix,
        names=X.names,
        n_randomizations=config.n_randomizations,
        n_failed=int(n_failed),
        seed=config.seed,
        mode=config.mode,
        shrinkage=config.shrinkage,
        backend=backend_name,
    )
