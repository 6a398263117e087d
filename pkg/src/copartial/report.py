"""CSV ingestion, the end-to-end analysis pipeline and report rendering.

``analyze`` turns a CSV of compositions into two tables: per-part summary
quantities (average weight, partial variance and clr variance as
percentages of total variance, explained-variance fractions, optionally
log-ratio variance and R-squared against a chosen reference part) and the
top pairs by absolute partial correlation with their permutation q-values.
All percentage columns share the same denominator, the trace of the clr
covariance.

Text output rounds to two significant figures; JSON and CSV carry full
precision and round-trip exactly.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .composition import close
from .covariance import (
    ensure_nondegenerate,
    estimate_gamma,
    estimate_sigma,
    pseudo_inverse,
    shrink,
    variation_matrix,
)
from .errors import (
    CopartialError,
    DimensionTooSmall,
    DuplicateHeader,
    NonPositiveEntry,
    ParseError,
)
from .inference import PermutationConfig, run_inference
from .partial import (
    partial_correlations,
    partial_variances,
    r_squared_alr,
    r_squared_clr,
)

__all__ = [
    "AnalysisConfig",
    "Table1Row",
    "Table2Row",
    "Report",
    "ingest_csv",
    "analyze",
    "render_text",
    "render_json",
    "render_csv",
]


@dataclass(frozen=True)
class AnalysisConfig:
    """Everything `analyze` needs besides the data itself."""

    input_path: str
    columns: tuple = None
    pseudocount: float = 0.0
    ref_label: str = None
    ddof: int = 1
    shrinkage: float = 0.0
    permutations: PermutationConfig = field(default_factory=PermutationConfig)
    output_format: str = "text"
    top_k: int = 5
    r2_variant: str = "paper"
    weight_mean: str = "arithmetic"
    out_prefix: str = None
    backend: str = "auto"

    def __post_init__(self):
        if self.output_format not in ("text", "json", "csv"):
            raise CopartialError(
                f"format must be text, json or csv, got {self.output_format!r}"
            )
        if self.r2_variant not in ("paper", "corrected"):
            raise CopartialError(
                f"r2 variant must be paper or corrected, got {self.r2_variant!r}"
            )
        if self.weight_mean not in ("arithmetic", "geometric"):
            raise CopartialError(
                "weight mean must be arithmetic or geometric"
            )
        if self.pseudocount < 0:
            raise CopartialError("pseudocount must be >= 0")
        if self.top_k < 1:
            raise CopartialError("top_k must be >= 1")


@dataclass(frozen=True)
class Table1Row:
    """One part's summary line (percent units except the weight column)."""

    label: str
    avg_weight: float
    res_var_pct: float
    var_pct: float
    r2_mean_pct: float
    var_ref_pct: float = None
    r2_ref_pct: float = None


@dataclass(frozen=True)
class Table2Row:
    """One pair's partial correlation and q-value."""

    name_i: str
    name_j: str
    partial_correlation: float
    q_value: float


@dataclass(frozen=True)
class Report:
    table1: tuple
    table2: tuple
    metadata: dict
    partial_corr_matrix: np.ndarray
    q_matrix: np.ndarray
    names: tuple


def _parse_csv(path, columns=None):
    """Parse a CSV of labeled numeric columns into (values, names)."""
    with open(path, "r", encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError(1, 1, "empty file") from None
        header = [h.strip() for h in header]
        seen = set()
        for label in header:
            if label in seen:
                raise DuplicateHeader(
                    f"duplicate column label {label!r} in header"
                )
            seen.add(label)
        if columns is not None:
            missing = [c for c in columns if c not in header]
            if missing:
                raise ParseError(
                    1, 1, f"requested columns not in header: {missing}"
                )
            keep = [header.index(c) for c in columns]
        else:
            keep = list(range(len(header)))
        rows = []
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise ParseError(
                    line_no, len(row) + 1,
                    f"expected {len(header)} fields, found {len(row)}",
                )
            parsed = []
            for col in keep:
                cell = row[col].strip()
                try:
                    parsed.append(float(cell))
                except ValueError:
                    raise ParseError(
                        line_no, col + 1, f"not a number: {cell!r}"
                    ) from None
            rows.append(parsed)
    if not rows:
        raise ParseError(2, 1, "no data rows")
    names = [header[c] for c in keep]
    return np.array(rows, dtype=float), tuple(names)


def ingest_csv(path, config=None):
    """Read a CSV, apply the zero policy, and close the rows.

    With a positive ``pseudocount`` in the config, that constant is added to
    every cell before closure (an off-paper convenience; the default policy
    rejects non-positive cells with :class:`NonPositiveEntry`).
    """
    columns = config.columns if config is not None else None
    pseudocount = config.pseudocount if config is not None else 0.0
    values, names = _parse_csv(path, columns)
    if pseudocount > 0:
        values = values + pseudocount
    return close(values, names)


def analyze(config):
    """Run the full pipeline on a CSV and assemble the report.

    Table 1 is sorted by R-squared (geometric-mean reference) descending,
    Table 2 by absolute partial correlation descending, truncated to the
    configured number of pairs.
    """
    try:
        values, names = _parse_csv(config.input_path, config.columns)
    except CopartialError as exc:
        exc.args = (f"{config.input_path}: {exc}",)
        raise
    if config.pseudocount > 0:
        values = values + config.pseudocount
    try:
        X = close(values, names)
    except NonPositiveEntry as exc:
        raise NonPositiveEntry(
            exc.row, exc.col, exc.value,
            f"{names[exc.col]} in {config.input_path}",
        ) from exc
    if X.n_parts < 3:
        raise DimensionTooSmall("the analysis needs at least 3 parts")
    ensure_nondegenerate(X)

    ref_index = None
    if config.ref_label is not None:
        if config.ref_label not in X.names:
            raise CopartialError(
                f"reference label {config.ref_label!r} not in header "
                f"{list(X.names)}"
            )
        ref_index = X.names.index(config.ref_label)

    gamma_cov = estimate_gamma(X, ddof=config.ddof)
    gamma_pinv = pseudo_inverse(gamma_cov, shrinkage=config.shrinkage)
    total = gamma_cov.total_variance
    pvar = partial_variances(gamma_pinv)
    pcorr = partial_correlations(gamma_pinv)
    r2_paper = r_squared_clr(gamma_cov, gamma_pinv, variant="paper")
    r2_corrected = r_squared_clr(gamma_cov, gamma_pinv, variant="corrected")
    r2_mean = r2_paper if config.r2_variant == "paper" else r2_corrected

    if config.weight_mean == "arithmetic":
        avg_weight = values.mean(axis=0)
    else:
        avg_weight = np.exp(np.log(values).mean(axis=0))

    tau = None
    r2_ref = None
    if ref_index is not None:
        tau = variation_matrix(X, ddof=config.ddof).tau
        sigma_cov = estimate_sigma(X, ref_index, ddof=config.ddof)
        if config.shrinkage:
            sigma_cov = shrink(sigma_cov, config.shrinkage)
        per_coord = r_squared_alr(sigma_cov)
        r2_ref = np.full(X.n_parts, np.nan)
        targets = [t for t in range(X.n_parts) if t != ref_index]
        r2_ref[targets] = per_coord

    inference_config = replace(
        config.permutations, shrinkage=config.shrinkage
    )
    qtable = run_inference(X, inference_config, backend=config.backend)

    rows = []
    for j in range(X.n_parts):
        var_ref_pct = r2_ref_pct = None
        if ref_index is not None and j != ref_index:
            var_ref_pct = 100.0 * tau[j, ref_index] / total
            r2_ref_pct = 100.0 * r2_ref[j]
        rows.append(
            Table1Row(
                label=X.names[j],
                avg_weight=float(avg_weight[j]),
                res_var_pct=float(100.0 * pvar[j] / total),
                var_pct=float(100.0 * gamma_cov.gamma[j, j] / total),
                r2_mean_pct=float(100.0 * r2_mean[j]),
                var_ref_pct=var_ref_pct,
                r2_ref_pct=r2_ref_pct,
            )
        )
    rows.sort(key=lambda r: r.r2_mean_pct, reverse=True)

    pairs = sorted(
        qtable.pairs, key=lambda p: abs(p.r), reverse=True
    )[: config.top_k]
    table2 = tuple(
        Table2Row(p.name_i, p.name_j, p.r, p.q) for p in pairs
    )

    metadata = {
        "input": config.input_path,
        "n_samples": X.n_samples,
        "n_parts": X.n_parts,
        "divisor": "n-1" if config.ddof == 1 else "n",
        "total_variance": total,
        "seed": config.permutations.seed,
        "n_randomizations": config.permutations.n_randomizations,
        "cutoff_step": config.permutations.cutoff_step,
        "permute_mode": config.permutations.mode,
        "n_failed_replicates": qtable.n_failed,
        "shrinkage": config.shrinkage,
        "backend": qtable.backend,
        "r2_variant": config.r2_variant,
        "r2_variant_max_gap": float(
            np.max(np.abs(r2_paper - r2_corrected))
        ),
        "weight_mean": config.weight_mean,
        "reference": config.ref_label,
        "pseudocount": config.pseudocount,
    }
    return Report(
        table1=tuple(rows),
        table2=table2,
        metadata=metadata,
        partial_corr_matrix=pcorr,
        q_matrix=qtable.q_matrix(),
        names=X.names,
    )


def _fmt(value, zero_floor=None):
    if value is None:
        return "-"
    if isinstance(value, float) and math.isnan(value):
        return "-"
    if zero_floor is not None and value == 0:
        # zero randomized exceedances: report the resolution, not a hard zero
        return f"<{zero_floor:.0e}"
    return f"{value:.2g}"


TABLE1_HEADER = (
    "part", "avg_weight", "res_var_pct", "var_pct", "r2_mean_pct",
    "var_ref_pct", "r2_ref_pct",
)
TABLE2_HEADER = ("variable_1", "variable_2", "partial_correlation", "q_value")


def render_text(report):
    """Human-readable report, two significant figures like the tables it mimics."""
    meta = report.metadata
    has_ref = meta["reference"] is not None
    lines = [
        f"copartial report: {meta['input']}",
        f"N={meta['n_samples']} D={meta['n_parts']} divisor={meta['divisor']}"
        f" seed={meta['seed']} B={meta['n_randomizations']}"
        f" shrinkage={meta['shrinkage']} r2={meta['r2_variant']}"
        f" backend={meta['backend']}",
        "",
        "table 1: per-part quantities (percent of total variance)",
    ]
    header = ["part", "av.weight", "res.var/tot", "var/tot(mean)", "R2(mean)"]
    if has_ref:
        ref = meta["reference"]
        header += [f"var/tot({ref})", f"R2({ref})"]
    widths = [14, 10, 12, 14, 9, 14, 9]
    lines.append("  " + "".join(
        h.ljust(w) for h, w in zip(header, widths)
    ).rstrip())
    for row in report.table1:
        cells = [
            row.label,
            _fmt(row.avg_weight),
            _fmt(row.res_var_pct),
            _fmt(row.var_pct),
            _fmt(row.r2_mean_pct),
        ]
        if has_ref:
            cells += [_fmt(row.var_ref_pct), _fmt(row.r2_ref_pct)]
        lines.append("  " + "".join(
            c.ljust(w) for c, w in zip(cells, widths)
        ).rstrip())
    lines += ["", f"table 2: top {len(report.table2)} pairs by |partial correlation|"]
    lines.append("  " + "".join(
        h.ljust(w) for h, w in zip(
            ["variable 1", "variable 2", "partial corr", "q-value"],
            [14, 14, 14, 10],
        )
    ).rstrip())
    q_floor = 1.0 / max(meta["n_randomizations"], 1)
    for row in report.table2:
        lines.append("  " + "".join(
            c.ljust(w) for c, w in zip(
                [row.name_i, row.name_j,
                 _fmt(row.partial_correlation),
                 _fmt(row.q_value, zero_floor=q_floor)],
                [14, 14, 14, 10],
            )
        ).rstrip())
    return "\n".join(lines) + "\n"


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, np.ndarray):
        return [_json_safe(v) for v in value.tolist()]
    if isinstance(value, (np.floating, np.integer)):
        return _json_safe(value.item())
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def render_json(report):
    """One JSON object carrying the full-precision report."""
    payload = {
        "metadata": _json_safe(report.metadata),
        "table1": [
            dict(zip(TABLE1_HEADER, _json_safe([
                row.label, row.avg_weight, row.res_var_pct, row.var_pct,
                row.r2_mean_pct, row.var_ref_pct, row.r2_ref_pct,
            ])))
            for row in report.table1
        ],
        "table2": [
            dict(zip(TABLE2_HEADER, _json_safe([
                row.name_i, row.name_j, row.partial_correlation, row.q_value,
            ])))
            for row in report.table2
        ],
        "parts": list(report.names),
        "partial_corr_matrix": _json_safe(report.partial_corr_matrix),
        "q_matrix": _json_safe(report.q_matrix),
    }
    return json.dumps(payload, indent=2, allow_nan=False) + "\n"


def render_csv(report, prefix):
    """Write ``<prefix>_table1.csv`` and ``<prefix>_table2.csv``; full precision."""
    paths = (f"{prefix}_table1.csv", f"{prefix}_table2.csv")
    with open(paths[0], "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TABLE1_HEADER)
        for row in report.table1:
            writer.writerow([
                row.label,
                repr(row.avg_weight),
                repr(row.res_var_pct),
                repr(row.var_pct),
                repr(row.r2_mean_pct),
                "" if row.var_ref_pct is None else repr(row.var_ref_pct),
                "" if row.r2_ref_pct is None else repr(row.r2_ref_pct),
            ])
    with open(paths[1], "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(TABLE2_HEADER)
        for row in report.table2:
            writer.writerow([
                row.name_i,
                row.name_j,
                repr(row.partial_correlation),
                repr(row.q_value),
            ])
    return paths
