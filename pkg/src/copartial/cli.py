"""Command-line interface: ``copartial analyze`` and ``copartial selfcheck``.

Exit codes: 0 success, 2 usage errors (argparse), 3 ingestion errors,
4 numerical errors, 5 selfcheck failure.
"""

from __future__ import annotations

import argparse
import sys

from ._backend import available_backends
from .errors import (
    CopartialError,
    DuplicateHeader,
    NonPositiveEntry,
    ParseError,
)
from .inference import PermutationConfig
from .report import AnalysisConfig, analyze, render_csv, render_json, render_text
from .selfcheck import run_selfcheck

EXIT_OK = 0
EXIT_INGEST = 3
EXIT_NUMERIC = 4
EXIT_SELFCHECK = 5

_INGEST_ERRORS = (ParseError, DuplicateHeader, NonPositiveEntry,
                  FileNotFoundError)

# analyze options that may also appear in a key=value config file;
# command-line flags override file entries.
_ANALYZE_DEFAULTS = {
    "ref": None,
    "permutations": 10000,
    "seed": 0,
    "step": 0.001,
    "shrinkage": 0.0,
    "r2_variant": "paper",
    "permute_mode": "columns",
    "format": "text",
    "top_k": 5,
    "pseudocount": 0.0,
    "divisor": "n-1",
    "columns": None,
    "out": None,
    "backend": "auto",
    "weight_mean": "arithmetic",
}


def _read_config_file(path):
    values = {}
    with open(path, "r", encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise CopartialError(
                    f"{path}:{line_no}: expected key=value, got {line!r}"
                )
            key, _, value = line.partition("=")
            key = key.strip().replace("-", "_")
            if key not in _ANALYZE_DEFAULTS:
                raise CopartialError(
                    f"{path}:{line_no}: unknown option {key!r}"
                )
            values[key] = value.strip()
    return values


def _coerce(key, value):
    if value is None or not isinstance(value, str):
        return value
    kind = type(_ANALYZE_DEFAULTS[key]) if _ANALYZE_DEFAULTS[key] is not None else str
    if key in ("permutations", "seed", "top_k"):
        return int(value)
    if key in ("step", "shrinkage", "pseudocount"):
        return float(value)
    if key == "columns":
        return tuple(c.strip() for c in value.split(","))
    return kind(value)


def _merged_options(args):
    options = dict(_ANALYZE_DEFAULTS)
    if args.config:
        for key, value in _read_config_file(args.config).items():
            options[key] = _coerce(key, value)
    for key in _ANALYZE_DEFAULTS:
        flag_value = getattr(args, key)
        if flag_value is not None:
            options[key] = _coerce(key, flag_value)
    return options


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="copartial",
        description=(
            "Reference-free partial variances and partial correlations "
            "for compositional data, with permutation q-values."
        ),
        epilog="exit codes: 0 ok, 2 usage, 3 ingestion, 4 numerical, "
               "5 selfcheck failure",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    an = sub.add_parser(
        "analyze",
        help="analyze a CSV of compositions",
        description="Run the pipeline on a CSV (header row of part labels, "
                    "one sample per row, strictly positive numeric cells).",
    )
    an.add_argument("input", help="path to the CSV file")
    an.add_argument("--config", help="key=value file; flags take precedence")
    an.add_argument("--ref", help="part label for the reference columns of table 1")
    an.add_argument("--permutations", type=int, help="randomizations B (default 10000)")
    an.add_argument("--seed", type=int, help="RNG seed (default 0)")
    an.add_argument("--step", type=float, help="FDR cutoff grid step (default 0.001)")
    an.add_argument("--shrinkage", type=float,
                    help="diagonal shrinkage intensity in [0,1] (default 0)")
    an.add_argument("--r2-variant", dest="r2_variant",
                    choices=["paper", "corrected"],
                    help="clr R-squared formula variant (default paper)")
    an.add_argument("--permute-mode", dest="permute_mode",
                    choices=["columns", "residuals"],
                    help="what the null permutes (default columns)")
    an.add_argument("--format", choices=["text", "json", "csv"],
                    help="output format (default text)")
    an.add_argument("--top-k", dest="top_k", type=int,
                    help="pairs shown in table 2 (default 5)")
    an.add_argument("--pseudocount", type=float,
                    help="add this to every cell before closure "
                         "(off-paper zero policy; default 0 = reject zeros)")
    an.add_argument("--divisor", choices=["n-1", "n"],
                    help="covariance divisor (default n-1)")
    an.add_argument("--columns", help="comma-separated column subset")
    an.add_argument("--out", help="output path prefix for --format csv")
    an.add_argument("--backend", choices=["auto"] + available_backends(),
                    help="replicate kernel (default auto)")
    an.add_argument("--weight-mean", dest="weight_mean",
                    choices=["arithmetic", "geometric"],
                    help="average-weight column flavor (default arithmetic)")

    sc = sub.add_parser(
        "selfcheck",
        help="run the numerical invariant suite on synthetic data",
    )
    sc.add_argument("--n-samples", type=int, default=100)
    sc.add_argument("--n-parts", type=int, default=5)
    sc.add_argument("--seed", type=int, default=20260808)
    sc.add_argument("--permutations", type=int, default=20,
                    help="random permutations per permutation identity")
    sc.add_argument("--corrupt", choices=["gamma-symmetry"],
                    help="negative control: break an invariant on purpose")
    return parser


def _run_analyze(args):
    options = _merged_options(args)
    permutations = PermutationConfig(
        n_randomizations=options["permutations"],
        cutoff_step=options["step"],
        seed=options["seed"],
        mode=options["permute_mode"],
        shrinkage=options["shrinkage"],
    )
    config = AnalysisConfig(
        input_path=args.input,
        columns=options["columns"],
        pseudocount=options["pseudocount"],
        ref_label=options["ref"],
        ddof=1 if options["divisor"] == "n-1" else 0,
        shrinkage=options["shrinkage"],
        permutations=permutations,
        output_format=options["format"],
        top_k=options["top_k"],
        r2_variant=options["r2_variant"],
        weight_mean=options["weight_mean"],
        out_prefix=options["out"],
        backend=options["backend"],
    )
    report = analyze(config)
    if config.output_format == "text":
        sys.stdout.write(render_text(report))
    elif config.output_format == "json":
        sys.stdout.write(render_json(report))
    else:
        prefix = config.out_prefix
        if prefix is None:
            prefix = args.input.rsplit(".", 1)[0] + "_report"
        paths = render_csv(report, prefix)
        sys.stdout.write("\n".join(paths) + "\n")
    return EXIT_OK


def _run_selfcheck(args):
    report = run_selfcheck(
        n_samples=args.n_samples,
        n_parts=args.n_parts,
        seed=args.seed,
        n_perms=args.permutations,
        corrupt=args.corrupt,
    )
    sys.stdout.write(report.render() + "\n")
    return EXIT_OK if report.passed else EXIT_SELFCHECK


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "analyze":
            return _run_analyze(args)
        return _run_selfcheck(args)
    except _INGEST_ERRORS as exc:
        print(f"copartial: ingestion error: {exc}", file=sys.stderr)
        return EXIT_INGEST
    except CopartialError as exc:
        print(f"copartial: error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
