"""Reference-free partial variances and correlations for compositional data.

The pipeline: close strictly positive data to compositions, estimate the
clr covariance, pseudo-invert it through the alr-inverse identity, and read
partial variances off the reciprocal diagonal and partial correlations off
the negated rescaled off-diagonals.  A permutation test turns the observed
partial correlations into plug-in FDR q-values.

The permutation hot loop runs on a compiled kernel when the extension is
built and falls back to pure NumPy otherwise; see
``copartial._backend.available_backends``.
"""

from ._backend import available_backends
from .composition import (
    CompositionMatrix,
    LogRatioMatrix,
    ReferenceSpec,
    StructuralMatrix,
    alr_transform,
    build_structural,
    change_reference,
    close,
    clr_transform,
)
from .covariance import (
    AlrCovariance,
    ClrCovariance,
    ClrPseudoInverse,
    VariationMatrix,
    ensure_nondegenerate,
    estimate_gamma,
    estimate_sigma,
    gamma_from_sigma,
    pseudo_inverse,
    pseudo_inverse_eig,
    shrink,
    sigma_from_gamma,
    variation_matrix,
)
from .errors import CopartialError
from .inference import (
    PermutationConfig,
    QValueTable,
    fdr_curve,
    permute_dataset,
    q_values,
    run_inference,
)
from .partial import (
    LlspResult,
    PartialAssociation,
    clr_residual_matrix,
    llsp,
    normalization_equivalence_check,
    partial_association,
    partial_correlations,
    partial_variances,
    r_squared_alr,
    r_squared_clr,
    residual_of_part,
    scaled_inverse_partial_corr,
)
from .report import AnalysisConfig, Report, analyze, ingest_csv
from .selfcheck import run_selfcheck

__version__ = "0.1.0"

__all__ = [
    "AlrCovariance",
    "AnalysisConfig",
    "ClrCovariance",
    "ClrPseudoInverse",
    "CompositionMatrix",
    "CopartialError",
    "LlspResult",
    "LogRatioMatrix",
    "PartialAssociation",
    "PermutationConfig",
    "QValueTable",
    "ReferenceSpec",
    "Report",
    "StructuralMatrix",
    "VariationMatrix",
    "alr_transform",
    "analyze",
    "available_backends",
    "build_structural",
    "change_reference",
    "close",
    "clr_residual_matrix",
    "clr_transform",
    "ensure_nondegenerate",
    "estimate_gamma",
    "estimate_sigma",
    "fdr_curve",
    "gamma_from_sigma",
    "ingest_csv",
    "llsp",
    "normalization_equivalence_check",
    "partial_association",
    "partial_correlations",
    "partial_variances",
    "permute_dataset",
    "pseudo_inverse",
    "pseudo_inverse_eig",
    "q_values",
    "r_squared_alr",
    "r_squared_clr",
    "residual_of_part",
    "run_inference",
    "run_selfcheck",
    "scaled_inverse_partial_corr",
    "shrink",
    "sigma_from_gamma",
    "variation_matrix",
]
