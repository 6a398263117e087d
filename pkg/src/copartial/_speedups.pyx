# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled replicate kernel for the permutation null distribution.

Same contract as ``copartial._kernels.replicate_counts``; the permutations
come from the identical per-replicate NumPy Philox streams, and only the
small-matrix pipeline (alr covariance, Cholesky inversion, pseudoinverse
conjugation, exceedance counting) runs in C, via LAPACK's dpotrf/dpotri.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from libc.stdlib cimport free, malloc
from scipy.linalg.cython_lapack cimport dpotrf, dpotri

from ._kernels import permuted_replicates

cnp.import_array()


cdef inline int _upper_bound(const double* grid, int k, double v) noexcept nogil:
    # count of grid entries <= v; matches np.searchsorted(side="right")
    cdef int lo = 0, hi = k, mid
    while lo < hi:
        mid = (lo + hi) // 2
        if grid[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef int _partial_replicate(const double* lp, int n, int d, double lam,
                            double* y, double* s, double* rowsum,
                            double* scale, double* rvals) noexcept nogil:
    """Partial correlations of one permuted log matrix; 0 on success."""
    cdef int k = d - 1
    cdef int i, a, b, idx, info
    cdef double v, acc, mean, total, gij
    cdef char uplo = b'U'  # F-order upper == C-order lower

    # alr against the last column, then center columns
    for a in range(k):
        mean = 0.0
        for i in range(n):
            v = lp[i * d + a] - lp[i * d + k]
            y[i * k + a] = v
            mean += v
        mean /= n
        for i in range(n):
            y[i * k + a] -= mean

    # covariance with divisor n-1 (cancels in correlations)
    for a in range(k):
        for b in range(a, k):
            acc = 0.0
            for i in range(n):
                acc += y[i * k + a] * y[i * k + b]
            v = acc / (n - 1)
            s[a * k + b] = v
            s[b * k + a] = v

    if lam > 0.0:
        for a in range(k):
            for b in range(k):
                if a != b:
                    s[a * k + b] *= 1.0 - lam

    info = 0
    dpotrf(&uplo, &k, s, &k, &info)
    if info != 0:
        return -1
    dpotri(&uplo, &k, s, &k, &info)
    if info != 0:
        return -1
    # the inverse sits in the C-order lower triangle; mirror it
    for a in range(k):
        for b in range(a + 1, k):
            s[a * k + b] = s[b * k + a]

    # clr pseudoinverse diag/off-diag via F conjugation
    total = 0.0
    for a in range(k):
        acc = 0.0
        for b in range(k):
            acc += s[a * k + b]
        rowsum[a] = acc
        total += acc
    for a in range(k):
        if s[a * k + a] <= 0.0:
            return -1
        scale[a] = sqrt(s[a * k + a])
    if total <= 0.0:
        return -1
    scale[k] = sqrt(total)

    idx = 0
    for a in range(d):
        for b in range(a + 1, d):
            if b < k:
                gij = s[a * k + b]
            else:
                gij = -rowsum[a]
            rvals[idx] = -gij / (scale[a] * scale[b])
            idx += 1
    return 0


cdef int _corr_replicate(const double* rp, int n, int d,
                         double* y, double* s, double* scale,
                         double* rvals) noexcept nogil:
    """Plain Pearson correlations of one permuted matrix; 0 on success."""
    cdef int i, a, b, idx
    cdef double v, acc, mean

    for a in range(d):
        mean = 0.0
        for i in range(n):
            mean += rp[i * d + a]
        mean /= n
        for i in range(n):
            y[i * d + a] = rp[i * d + a] - mean

    for a in range(d):
        for b in range(a, d):
            acc = 0.0
            for i in range(n):
                acc += y[i * d + a] * y[i * d + b]
            s[a * d + b] = acc
            s[b * d + a] = acc

    for a in range(d):
        if s[a * d + a] <= 0.0:
            return -1
        scale[a] = sqrt(s[a * d + a])

    idx = 0
    for a in range(d):
        for b in range(a + 1, d):
            rvals[idx] = s[a * d + b] / (scale[a] * scale[b])
            idx += 1
    return 0


def _process_chunk(double[:, :, ::1] buf, double lam, double[::1] grid,
                   int partial_flag, long long[::1] pos_hist,
                   long long[::1] neg_hist):
    """Accumulate exceedance histograms over one chunk of permuted matrices."""
    cdef int m = buf.shape[0]
    cdef int n = buf.shape[1]
    cdef int d = buf.shape[2]
    cdef int kc = grid.shape[0]
    cdef int n_pairs = d * (d - 1) // 2
    cdef int rep, t, status
    cdef int failed = 0
    cdef double v

    cdef double* y = <double*> malloc(n * d * sizeof(double))
    cdef double* s = <double*> malloc(d * d * sizeof(double))
    cdef double* rowsum = <double*> malloc(d * sizeof(double))
    cdef double* scale = <double*> malloc(d * sizeof(double))
    cdef double* rvals = <double*> malloc(n_pairs * sizeof(double))
    if y == NULL or s == NULL or rowsum == NULL or scale == NULL or rvals == NULL:
        free(y); free(s); free(rowsum); free(scale); free(rvals)
        raise MemoryError("replicate scratch allocation failed")

    try:
        with nogil:
            for rep in range(m):
                if partial_flag:
                    status = _partial_replicate(
                        &buf[rep, 0, 0], n, d, lam, y, s, rowsum, scale, rvals
                    )
                else:
                    status = _corr_replicate(
                        &buf[rep, 0, 0], n, d, y, s, scale, rvals
                    )
                if status != 0:
                    failed += 1
                    continue
                for t in range(n_pairs):
                    v = rvals[t]
                    pos_hist[_upper_bound(&grid[0], kc, v)] += 1
                    neg_hist[_upper_bound(&grid[0], kc, -v)] += 1
    finally:
        free(y); free(s); free(rowsum); free(scale); free(rvals)
    return failed


def replicate_counts(base, n_randomizations, seed, cutoffs, shrinkage=0.0,
                     pipeline="partial", chunk_size=256):
    """Summed exceedance counts over permutation replicates (compiled).

    See ``copartial._kernels.replicate_counts`` for the contract.
    """
    base = np.ascontiguousarray(base, dtype=np.float64)
    cutoffs = np.ascontiguousarray(cutoffs, dtype=np.float64)
    n, d = base.shape
    kc = cutoffs.shape[0]
    pos_hist = np.zeros(kc + 1, dtype=np.int64)
    neg_hist = np.zeros(kc + 1, dtype=np.int64)
    partial_flag = 1 if pipeline == "partial" else 0
    n_failed = 0
    chunk = int(min(chunk_size, max(n_randomizations, 1)))
    buf = np.empty((chunk, n, d), dtype=np.float64)
    stream = permuted_replicates(base, n_randomizations, seed)
    done = 0
    while done < n_randomizations:
        m = min(chunk, n_randomizations - done)
        for i in range(m):
            buf[i] = next(stream)
        n_failed += _process_chunk(
            buf[:m], float(shrinkage), cutoffs, partial_flag,
            pos_hist, neg_hist,
        )
        done += m
    pos = np.cumsum(pos_hist[::-1])[::-1][1:]
    neg = np.cumsum(neg_hist[::-1])[::-1][1:]
    return pos, neg, int(n_failed)
