"""Pure-NumPy replicate kernel for the permutation null distribution.

This is the fallback backend; ``copartial._speedups`` implements the same
contract in C.  Both backends draw their permutations from the identical
NumPy Philox stream (keyed per replicate), so for a given seed they visit
the same permuted data sets; only the floating-point arithmetic of the
small-matrix pipeline differs, at the last-ulp level.

A replicate fails (and is excluded from the counts) when the shrunk
covariance cannot be Cholesky-factorized or the resulting precision
diagonal is not positive.  Near-singular replicates that still factorize
are counted; the strict condition-number policy applies only to the
observed-data pipeline.
"""

from __future__ import annotations

import numpy as np
import scipy.linalg

__all__ = [
    "child_generator",
    "cutoff_grid",
    "exceedance_counts",
    "permuted_replicates",
    "replicate_counts",
]


def child_generator(seed, replicate):
    """Philox generator for one replicate: key = seed * 2**64 + replicate.

    The counter-based keying makes every replicate's stream independent of
    execution order, so aggregation over replicates is schedule-free.
    """
    key = (int(seed) << 64) | int(replicate)
    return np.random.Generator(np.random.Philox(key=key))


def permuted_replicates(base, n_randomizations, seed):
    """Yield each replicate's column-permuted copy of ``base``.

    Bit-identical to ``child_generator(seed, b).permuted(base, axis=0)``
    for b in range(n_randomizations), but reuses one Philox instance and
    resets its key/counter state per replicate, which roughly halves the
    per-replicate overhead.
    """
    bit_gen = np.random.Philox(key=0)
    template = bit_gen.state
    gen = np.random.Generator(bit_gen)
    seed = int(seed)
    for b in range(n_randomizations):
        state = dict(template)
        state["state"] = {
            "counter": np.zeros(4, dtype=np.uint64),
            "key": np.array([b, seed], dtype=np.uint64),
        }
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        bit_gen.state = state
        yield gen.permuted(base, axis=0)


def cutoff_grid(step):
    """The cutoff grid {step, 2 step, ..., <= 1}."""
    n_cutoffs = int(np.floor(1.0 / step + 1e-9))
    return step * np.arange(1, n_cutoffs + 1)


def exceedance_counts(values, cutoffs):
    """Closed-tail exceedance counts of ``values`` over the cutoff grid.

    Returns ``(pos, neg)`` where ``pos[k]`` counts values >= cutoffs[k] and
    ``neg[k]`` counts values <= -cutoffs[k].  Comparisons are closed, which
    is also how the compiled backend counts.
    """
    k = cutoffs.shape[0]
    pos_rank = np.searchsorted(cutoffs, values, side="right")
    neg_rank = np.searchsorted(cutoffs, -values, side="right")
    pos_hist = np.bincount(pos_rank, minlength=k + 1)
    neg_hist = np.bincount(neg_rank, minlength=k + 1)
    pos = np.cumsum(pos_hist[::-1])[::-1][1:].astype(np.int64)
    neg = np.cumsum(neg_hist[::-1])[::-1][1:].astype(np.int64)
    return pos, neg


def _partial_corr_values(permuted, shrinkage, triu):
    """Upper-triangle partial correlations of one permuted log matrix.

    Pipeline: alr against the last column, column centering, covariance
    with divisor N-1 (the divisor cancels in correlations), optional
    diagonal shrinkage, Cholesky inversion, conjugation to the clr
    pseudoinverse, rescaling.  Returns None when the replicate fails.
    """
    n, d = permuted.shape
    y = permuted[:, :-1] - permuted[:, -1:]
    y = y - y.mean(axis=0)
    s = y.T @ y / (n - 1)
    if shrinkage:
        s = (1.0 - shrinkage) * s + shrinkage * np.diag(np.diag(s))
    try:
        cho = scipy.linalg.cho_factor(s, lower=True, check_finite=False)
    except scipy.linalg.LinAlgError:
        return None
    si = scipy.linalg.cho_solve(cho, np.eye(d - 1), check_finite=False)
    row_sums = si.sum(axis=0)
    gp = np.empty((d, d))
    gp[: d - 1, : d - 1] = si
    gp[: d - 1, d - 1] = -row_sums
    gp[d - 1, : d - 1] = -row_sums
    gp[d - 1, d - 1] = row_sums.sum()
    diag = np.diag(gp)
    if diag.min() <= 0:
        return None
    scale = np.sqrt(diag)
    corr = -gp / np.outer(scale, scale)
    return corr[triu]


def _plain_corr_values(permuted, triu):
    """Upper-triangle Pearson correlations of one permuted matrix."""
    c = permuted - permuted.mean(axis=0)
    s = c.T @ c
    diag = np.diag(s)
    if diag.min() <= 0:
        return None
    scale = np.sqrt(diag)
    corr = s / np.outer(scale, scale)
    return corr[triu]


def replicate_counts(base, n_randomizations, seed, cutoffs, shrinkage=0.0,
                     pipeline="partial"):
    """Summed exceedance counts over permutation replicates.

    Parameters
    ----------
    base : ndarray of shape (n_samples, n_parts)
        Log data for the ``"partial"`` pipeline, or a residual matrix for
        the ``"correlation"`` pipeline.  Each replicate permutes every
        column independently.
    n_randomizations : int
    seed : int
        Parent seed; replicate ``b`` uses :func:`child_generator`.
    cutoffs : ndarray
        Ascending cutoff grid from :func:`cutoff_grid`.
    shrinkage : float
        Diagonal shrinkage applied per replicate (``"partial"`` only).
    pipeline : str
        ``"partial"`` or ``"correlation"``.

    Returns
    -------
    (pos_sum, neg_sum, n_failed)
        Integer count vectors summed over successful replicates, and the
        number of failed replicates.
    """
    base = np.ascontiguousarray(base, dtype=float)
    d = base.shape[1]
    triu = np.triu_indices(d, k=1)
    k = cutoffs.shape[0]
    pos_sum = np.zeros(k, dtype=np.int64)
    neg_sum = np.zeros(k, dtype=np.int64)
    n_failed = 0
    for permuted in permuted_replicates(base, n_randomizations, seed):
        if pipeline == "partial":
            values = _partial_corr_values(permuted, shrinkage, triu)
        else:
            values = _plain_corr_values(permuted, triu)
        if values is None:
            n_failed += 1
            continue
        pos, neg = exceedance_counts(values, cutoffs)
        pos_sum += pos
        neg_sum += neg
    return pos_sum, neg_sum, n_failed
