"""Compositions, closure, log-ratio transforms and the structural matrices.

A composition is a vector of strictly positive parts carrying only relative
information; closure rescales each sample to sum to one.  Two log-ratio
transforms are provided:

- ``alr``: log of each part against one designated reference part, giving
  D-1 coordinates,
- ``clr``: log of each part against the geometric mean over a reference set,
  giving coordinates that sum to zero when the set covers all targets.

A "sub-clr" variant allows the geometric-mean reference to run over a set
that does not contain the target part, which the partial-association layer
needs when a part is referenced by the geometric mean of all *other* parts.

The module also builds the small integer-defined matrices that tie the two
transforms together: ``F`` maps clr to alr coordinates, ``H = F F^T``,
``G = I - J/D`` is the centering projection, ``P`` permutes parts, and
``Q = F P F^T H^{-1}`` realizes a part permutation on alr coordinates.
All are constructed exactly from their definitions, never estimated.

Indices are 0-based throughout.  Logarithms are natural.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    CopartialError,
    DimensionMismatch,
    DimensionTooSmall,
    EmptyIndexSet,
    IncompatibleReference,
    IndexOutOfRange,
    MissingPermutation,
    NonPositiveEntry,
)

__all__ = [
    "CompositionMatrix",
    "ReferenceSpec",
    "LogRatioMatrix",
    "StructuralMatrix",
    "close",
    "alr_transform",
    "clr_transform",
    "change_reference",
    "build_structural",
    "f_matrix",
    "h_matrix",
    "h_inverse",
    "g_matrix",
    "permutation_matrix",
    "q_matrix",
]

# Absolute tolerance on row sums of a closed composition.
ROW_SUM_ATOL = 1e-12


def _readonly(arr):
    arr = np.asarray(arr, dtype=float)
    arr.setflags(write=False)
    return arr


def _default_names(n_parts):
    return tuple(f"x{j + 1}" for j in range(n_parts))


@dataclass(frozen=True)
class ReferenceSpec:
    """Identifies the reference of a log-ratio transform.

    ``kind`` is one of ``"alr"`` (single reference part), ``"clr"``
    (geometric mean over ``reference``, targeting exactly that set) or
    ``"subclr"`` (geometric mean over ``reference`` with an independent
    target set, possibly disjoint from it).  ``targets`` lists, in column
    order, the parts described by the transformed matrix.
    """

    kind: str
    reference: tuple
    targets: tuple

    @staticmethod
    def alr(d, n_parts):
        if not 0 <= d < n_parts:
            raise IndexOutOfRange(
                f"alr reference index {d} outside 0..{n_parts - 1}"
            )
        targets = tuple(i for i in range(n_parts) if i != d)
        return ReferenceSpec("alr", (int(d),), targets)

    @staticmethod
    def clr(parts):
        parts = tuple(sorted({int(p) for p in parts}))
        if not parts:
            raise EmptyIndexSet("clr reference set must be non-empty")
        return ReferenceSpec("clr", parts, parts)

    @staticmethod
    def subclr(parts, targets):
        parts = tuple(sorted({int(p) for p in parts}))
        if not parts:
            raise EmptyIndexSet("sub-clr reference set must be non-empty")
        targets = tuple(int(t) for t in targets)
        if not targets:
            raise EmptyIndexSet("sub-clr target set must be non-empty")
        return ReferenceSpec("subclr", parts, targets)

    @property
    def max_index(self):
        return max(max(self.reference), max(self.targets))


@dataclass(frozen=True)
class CompositionMatrix:
    """An N x D closed data table of strictly positive parts.

    Rows are samples, columns are parts; every row sums to one.  Build
    instances through :func:`close`, which validates and normalizes raw
    positive data.  Values are stored read-only; all operations treat the
    matrix as immutable.
    """

    values: np.ndarray
    names: tuple = None

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 2:
            raise DimensionTooSmall("composition data must be a 2-d table")
        n, d = values.shape
        if d < 2:
            raise DimensionTooSmall(f"need at least 2 parts, got {d}")
        if n < 2:
            raise DimensionTooSmall(f"need at least 2 samples, got {n}")
        _check_positive(values, self.names)
        sums = values.sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > ROW_SUM_ATOL:
            raise CopartialError(
                "rows are not closed to sum 1; construct via close()"
            )
        names = self.names if self.names is not None else _default_names(d)
        if len(names) != d:
            raise DimensionMismatch(f"{len(names)} names for {d} parts")
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(self, "names", tuple(str(s) for s in names))

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def n_parts(self):
        return self.values.shape[1]

    def log_values(self):
        """Natural log of the closed table (N x D)."""
        return np.log(self.values)


@dataclass(frozen=True)
class LogRatioMatrix:
    """An N x k matrix of log-ratio coordinates tagged with its reference.

    ``names`` holds all D part labels of the composition the matrix was
    derived from; ``part_labels`` gives the labels of the k columns.
    """

    values: np.ndarray
    reference: ReferenceSpec
    names: tuple

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        object.__setattr__(self, "names", tuple(self.names))
        if self.values.shape[1] != len(self.reference.targets):
            raise DimensionMismatch(
                "column count does not match the reference's target set"
            )
        if self.reference.max_index >= len(self.names):
            raise IndexOutOfRange("reference indices exceed the part count")

    @property
    def n_samples(self):
        return self.values.shape[0]

    @property
    def n_parts(self):
        return len(self.names)

    @property
    def part_labels(self):
        return tuple(self.names[t] for t in self.reference.targets)


@dataclass(frozen=True)
class StructuralMatrix:
    """One of the exact constant matrices F, H, G, P or Q."""

    role: str
    values: np.ndarray
    dim: int

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))


def _check_positive(values, names=None):
    if np.all(values > 0):
        return
    bad = ~(values > 0)  # catches <= 0 and NaN
    i, j = np.argwhere(bad)[0]
    label = None
    if names is not None and j < len(names):
        label = names[j]
    raise NonPositiveEntry(int(i), int(j), values[i, j], label)


def close(raw, names=None):
    """Close raw positive data to row sums of one.

    Parameters
    ----------
    raw : array_like of shape (n_samples, n_parts)
        Strictly positive values; each row is rescaled by its sum.
    names : sequence of str, optional
        Part labels; defaults to ``x1..xD``.

    Returns
    -------
    CompositionMatrix

    Raises
    ------
    NonPositiveEntry
        On any entry <= 0 (the zero-handling policy lives with the caller).
    DimensionTooSmall
        If fewer than 2 samples or 2 parts are supplied.
    """
    arr = np.asarray(raw, dtype=float)
    if arr.ndim != 2:
        raise DimensionTooSmall("raw data must be a 2-d table")
    n, d = arr.shape
    if d < 2 or n < 2:
        raise DimensionTooSmall(
            f"need at least 2 samples and 2 parts, got {n} x {d}"
        )
    _check_positive(arr, names)
    closed = arr / arr.sum(axis=1, keepdims=True)
    return CompositionMatrix(closed, names)


def alr_transform(X, d):
    """Additive log-ratio transform with reference part ``d``.

    Column order is the original part order with the reference column
    removed; the reference identity is carried by the returned matrix's
    :class:`ReferenceSpec` rather than by position.
    """
    ref = ReferenceSpec.alr(d, X.n_parts)
    logs = X.log_values()
    cols = list(ref.targets)
    values = logs[:, cols] - logs[:, [d]]
    return LogRatioMatrix(values, ref, X.names)


def clr_transform(X, parts=None, targets=None):
    """Centered log-ratio transform against the geometric mean over ``parts``.

    With ``parts=None`` the full clr is computed (rows sum to zero).  With an
    explicit subset, columns cover exactly that subset unless ``targets``
    names a different set of parts (sub-clr), in which case each target may
    lie outside the reference set.
    """
    if parts is None:
        parts = range(X.n_parts)
    parts = tuple(sorted({int(p) for p in parts}))
    if not parts:
        raise EmptyIndexSet("clr reference set must be non-empty")
    if targets is None:
        ref = ReferenceSpec.clr(parts)
    else:
        ref = ReferenceSpec.subclr(parts, targets)
    if ref.max_index >= X.n_parts:
        raise IndexOutOfRange("index set exceeds the part count")
    logs = X.log_values()
    gmean_log = logs[:, list(parts)].mean(axis=1, keepdims=True)
    values = logs[:, list(ref.targets)] - gmean_log
    return LogRatioMatrix(values, ref, X.names)


def _log_profile(Y):
    """Per-row log profile (N x D), determined up to a row constant.

    Only sources carrying information on all D parts qualify: an alr
    transform (the reference column is implicitly zero) or a full clr.
    """
    d = Y.n_parts
    ref = Y.reference
    profile = np.zeros((Y.n_samples, d))
    if ref.kind == "alr":
        profile[:, list(ref.targets)] = Y.values
        return profile
    if ref.kind == "clr" and ref.targets == tuple(range(d)):
        return np.array(Y.values)
    raise IncompatibleReference(
        "reference change requires a source covering all parts "
        "(alr or full clr)"
    )


def change_reference(Y, new_ref):
    """Re-express log-ratio coordinates under a different reference.

    The operation is exact algebra: the per-row log profile is recovered up
    to an additive constant (which every log-ratio annihilates) and the new
    reference is applied to it.  An alr-to-clr change is thereby identical
    to multiplying rows by ``F^T H^{-1}``, and clr-to-alr to multiplying by
    ``F``.
    """
    if new_ref.max_index >= Y.n_parts:
        raise IncompatibleReference(
            "target reference indexes parts beyond the source composition"
        )
    profile = _log_profile(Y)
    if new_ref.kind == "alr":
        d = new_ref.reference[0]
        values = profile[:, list(new_ref.targets)] - profile[:, [d]]
    else:
        gmean_log = profile[:, list(new_ref.reference)].mean(
            axis=1, keepdims=True
        )
        values = profile[:, list(new_ref.targets)] - gmean_log
    return LogRatioMatrix(values, new_ref, Y.names)


# ---------------------------------------------------------------------------
# Structural matrices
# ---------------------------------------------------------------------------


def f_matrix(d):
    """The (D-1) x D matrix [I_{D-1}, -1] mapping clr to alr coordinates."""
    if d < 2:
        raise DimensionTooSmall("F requires D >= 2")
    out = np.hstack([np.eye(d - 1), -np.ones((d - 1, 1))])
    return out


def h_matrix(d):
    """H = F F^T = I_{D-1} + J, the (D-1) x (D-1) units-plus-identity matrix."""
    if d < 2:
        raise DimensionTooSmall("H requires D >= 2")
    return np.eye(d - 1) + np.ones((d - 1, d - 1))


def h_inverse(d):
    """Closed-form H^{-1} = I_{D-1} - J/D."""
    if d < 2:
        raise DimensionTooSmall("H requires D >= 2")
    return np.eye(d - 1) - np.ones((d - 1, d - 1)) / d


def g_matrix(d):
    """G = I_D - J/D, the centering projection; G = F^T H^{-1} F."""
    if d < 2:
        raise DimensionTooSmall("G requires D >= 2")
    return np.eye(d) - np.ones((d, d)) / d


def _validate_order(order, d):
    order = np.asarray(order, dtype=int)
    if order.shape != (d,) or sorted(order.tolist()) != list(range(d)):
        raise MissingPermutation(
            f"permutation must reorder exactly 0..{d - 1}"
        )
    return order


def permutation_matrix(order):
    """Permutation matrix P with (P x)[a] = x[order[a]]."""
    order = np.asarray(order, dtype=int)
    d = order.shape[0]
    order = _validate_order(order, d)
    p = np.zeros((d, d))
    p[np.arange(d), order] = 1.0
    return p


def q_matrix(order):
    """Q = F P F^T H^{-1}, realizing a part permutation on alr coordinates."""
    order = np.asarray(order, dtype=int)
    d = order.shape[0]
    f = f_matrix(d)
    p = permutation_matrix(order)
    return f @ p @ f.T @ h_inverse(d)


_ROLES = {"F", "H", "G", "P", "Q"}


def build_structural(role, d, permutation=None):
    """Build one of the structural matrices exactly from its definition.

    Parameters
    ----------
    role : str
        One of ``F``, ``H``, ``G``, ``P`` or ``Q`` (``Q_P`` is accepted as
        an alias for ``Q``).
    d : int
        Number of parts.
    permutation : sequence of int, optional
        Required for roles ``P`` and ``Q``: the new part order, as indices
        into the original order.
    """
    role = "Q" if role == "Q_P" else role
    if role not in _ROLES:
        raise CopartialError(f"unknown structural role {role!r}")
    if role in ("P", "Q"):
        if permutation is None:
            raise MissingPermutation(f"role {role} requires a permutation")
        order = _validate_order(permutation, d)
        values = permutation_matrix(order) if role == "P" else q_matrix(order)
    else:
        builder = {"F": f_matrix, "H": h_matrix, "G": g_matrix}[role]
        values = builder(d)
    return StructuralMatrix(role, values, d)
