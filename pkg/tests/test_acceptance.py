"""Acceptance suite: one test per criterion, each printing a PASS line.

Criteria 8 and 9 need the externally sourced glass table (see
``data/glass/README.md``) and are skipped when it is absent; the rest run
on synthetic data and double as the CI gate.
"""

import math
import os
import time

import numpy as np
import pytest

from copartial import (
    ClrCovariance,
    PermutationConfig,
    close,
    estimate_gamma,
    estimate_sigma,
    ingest_csv,
    llsp,
    normalization_equivalence_check,
    partial_correlations,
    partial_variances,
    pseudo_inverse,
    pseudo_inverse_eig,
    r_squared_clr,
    residual_of_part,
    run_inference,
)
from copartial.composition import g_matrix, permutation_matrix
from helpers import random_composition

_DURATIONS = {}

GLASS_PATH = os.environ.get(
    "COPARTIAL_GLASS_CSV", os.path.join("data", "glass", "roman_glass.csv")
)
HAS_GLASS = os.path.exists(GLASS_PATH)
needs_glass = pytest.mark.skipif(
    not HAS_GLASS,
    reason="external glass CSV not present (see data/glass/README.md)",
)

# published per-part reference values for the glass data, in percent and
# rounded to two significant figures: label -> (res.var/tot, var/tot(mean),
# R2(mean))
TABLE1_PRINTED = {
    "SiO2": (0.86, 7.7, 89),
    "Al2O3": (0.37, 2.5, 85),
    "Na2O": (0.75, 3.6, 79),
    "Fe2O3": (1.5, 5.9, 75),
    "MgO": (3.4, 6.4, 46),
    "CaO": (1.2, 1.9, 39),
    "TiO2": (3.5, 4.9, 29),
    "MnO": (21, 29, 26),
    "Sb": (22, 28, 23),
    "P2O5": (4.3, 5.3, 19),
    "K2O": (3.6, 4.2, 15),
}

# published top-pair reference values for the glass data:
# pair -> (partial correlation, q-value tolerance band at B=10,000)
TABLE2_PRINTED = [
    ({"Fe2O3", "Al2O3"}, 0.73, (0.01, 0.05)),
    ({"Al2O3", "SiO2"}, 0.72, (0.01, 0.05)),
    ({"Fe2O3", "SiO2"}, -0.66, None),  # zero randomized exceedances
    ({"Na2O", "CaO"}, 0.60, (0.14, 0.22)),
    ({"MgO", "Fe2O3"}, 0.43, (0.40, 0.52)),
]


def _timed(key):
    class _Timer:
        def __enter__(self):
            self.t0 = time.perf_counter()
            return self

        def __exit__(self, *exc):
            _DURATIONS[key] = time.perf_counter() - self.t0
            return False

    return _Timer()


def _report(criterion, detail):
    print(f"ACCEPTANCE {criterion}: PASS ({detail})")


def test_criterion_1_pseudoinverse_identity():
    with _timed(1):
        rng = np.random.default_rng(101)
        worst_refs = 0.0
        worst_eig = 0.0
        t0 = time.perf_counter()
        for d in range(3, 9):
            X = close(np.exp(rng.normal(size=(50, d))))
            mats = [
                pseudo_inverse(estimate_sigma(X, ref)).gamma_pinv
                for ref in range(d)
            ]
            for a in range(d):
                for b in range(a + 1, d):
                    worst_refs = max(
                        worst_refs, np.max(np.abs(mats[a] - mats[b]))
                    )
            eig = pseudo_inverse_eig(estimate_gamma(X)).gamma_pinv
            worst_eig = max(worst_eig, np.max(np.abs(mats[0] - eig)))
        elapsed = time.perf_counter() - t0
        assert worst_refs <= 1e-9
        assert worst_eig <= 1e-8
        assert elapsed < 1.0
    _report(1, f"ref spread {worst_refs:.2e}, eig gap {worst_eig:.2e}, "
               f"{elapsed:.2f}s")


def test_criterion_2_reference_free_residuals():
    with _timed(2):
        rng = np.random.default_rng(202)
        X = random_composition(rng, 40, 4)
        residuals = [
            residual_of_part(X, 0, [2, 3], ref) for ref in (3, 2, "gmean")
        ]
        spread_res = max(
            np.max(np.abs(r - residuals[0])) for r in residuals[1:]
        )
        assert spread_res <= 1e-10

        logs = X.log_values()
        control = (logs[:, 2] - logs[:, 3])[:, None]
        gmean = (logs[:, 2] + logs[:, 3]) / 2

        def pc(t0, t1):
            r0 = llsp(t0, control).residual_values
            r1 = llsp(t1, control).residual_values
            return np.corrcoef(r0, r1)[0, 1]

        chain = [
            pc(logs[:, 0] - logs[:, 3], logs[:, 1] - logs[:, 3]),
            pc(logs[:, 0] - logs[:, 2], logs[:, 1] - logs[:, 2]),
            pc(logs[:, 0] - gmean, logs[:, 1] - gmean),
            pc(logs[:, 0] - logs[:, 2], logs[:, 1] - logs[:, 3]),
        ]
        spread_chain = max(abs(v - chain[0]) for v in chain[1:])
        assert spread_chain <= 1e-10
    _report(2, f"residual spread {spread_res:.2e}, "
               f"chain spread {spread_chain:.2e}")


def test_criterion_3_oracle_equivalence():
    with _timed(3):
        rng = np.random.default_rng(303)
        X = random_composition(rng, 100, 5)
        gp = pseudo_inverse(estimate_gamma(X))
        pcorr = partial_correlations(gp)
        pvar = partial_variances(gp)
        worst_corr = 0.0
        worst_var = 0.0
        for i in range(5):
            res_i = residual_of_part(X, i, [c for c in range(5) if c != i])
            worst_var = max(
                worst_var, abs(np.var(res_i, ddof=1) - pvar[i])
            )
            for j in range(i + 1, 5):
                control = [c for c in range(5) if c not in (i, j)]
                ri = residual_of_part(X, i, control)
                rj = residual_of_part(X, j, control)
                worst_corr = max(
                    worst_corr,
                    abs(np.corrcoef(ri, rj)[0, 1] - pcorr[i, j]),
                )
        assert worst_corr <= 1e-8
        assert worst_var <= 1e-8
    _report(3, f"corr gap {worst_corr:.2e}, var gap {worst_var:.2e}")


def test_criterion_4_analytic_fixture():
    with _timed(4):
        worst_corr = 0.0
        worst_var = 0.0
        for d in (3, 4, 6):
            for s2 in (0.5, 1.0, 2.7):
                gp = pseudo_inverse(ClrCovariance(s2 * g_matrix(d)))
                pcorr = partial_correlations(gp)
                off = pcorr[~np.eye(d, dtype=bool)]
                worst_corr = max(
                    worst_corr, np.max(np.abs(off - 1.0 / (d - 1)))
                )
                pvar = partial_variances(gp)
                worst_var = max(
                    worst_var,
                    np.max(np.abs(pvar - s2 * d / (d - 1))),
                )
        assert worst_corr <= 1e-12
        assert worst_var <= 1e-12
    _report(4, f"corr gap {worst_corr:.2e}, var gap {worst_var:.2e}")


def test_criterion_5_permutation_equivariance():
    with _timed(5):
        rng = np.random.default_rng(505)
        X = random_composition(rng, 50, 6)
        gp = pseudo_inverse(estimate_gamma(X)).gamma_pinv
        worst = 0.0
        for _ in range(20):
            order = rng.permutation(6)
            p = permutation_matrix(order)
            xp = close(X.values[:, order])
            gp_p = pseudo_inverse(estimate_gamma(xp)).gamma_pinv
            worst = max(worst, np.max(np.abs(p @ gp @ p.T - gp_p)))
        assert worst <= 1e-9
    _report(5, f"max deviation {worst:.2e}")


def test_criterion_6_normalization_equivalence():
    with _timed(6):
        rng = np.random.default_rng(606)
        X = random_composition(rng, 60, 5)
        check = normalization_equivalence_check(
            X, normalizing=[3, 4], pair=(0, 1), control=[2, 3, 4]
        )
        assert check.discrepancy <= 1e-10
    _report(6, f"discrepancy {check.discrepancy:.2e}")


def test_criterion_7_scale_invariance():
    with _timed(7):
        rng = np.random.default_rng(707)
        X = random_composition(rng, 50, 5)
        gp = pseudo_inverse(estimate_gamma(X))
        factors = rng.uniform(0.1, 10.0, size=50)
        x_scaled = close(X.values * factors[:, None])
        gp_scaled = pseudo_inverse(estimate_gamma(x_scaled))
        worst = max(
            np.max(np.abs(partial_variances(gp_scaled)
                          - partial_variances(gp))),
            np.max(np.abs(partial_correlations(gp_scaled)
                          - partial_correlations(gp))),
        )
        assert worst <= 1e-12
    _report(7, f"max change {worst:.2e}")


def _printed_unit(printed):
    return 10.0 ** (math.floor(math.log10(abs(printed))) - 1)


def _glass_composition():
    X = ingest_csv(GLASS_PATH)
    missing = [k for k in TABLE1_PRINTED if k not in X.names]
    if missing:
        pytest.skip(f"glass CSV lacks expected columns: {missing}")
    return X


@needs_glass
def test_criterion_8_table1_reproduction():
    X = _glass_composition()
    results = {}
    for ddof in (1, 0):
        gamma = estimate_gamma(X, ddof=ddof)
        gp = pseudo_inverse(gamma)
        total = gamma.total_variance
        pvar = 100 * partial_variances(gp) / total
        var = 100 * np.diag(gamma.gamma) / total
        r2 = {
            variant: 100 * r_squared_clr(gamma, gp, variant=variant)
            for variant in ("paper", "corrected")
        }
        for variant in ("paper", "corrected"):
            mismatches = []
            for label, printed in TABLE1_PRINTED.items():
                j = X.names.index(label)
                computed = (pvar[j], var[j], r2[variant][j])
                bad = [
                    f"{label}/{col}: computed {c:.3g} vs printed {p}"
                    for col, c, p in zip(
                        ("res.var", "var", "R2"), computed, printed
                    )
                    if abs(c - p) > 0.5 * _printed_unit(p)
                ]
                mismatches.extend(bad)
            results[(ddof, variant)] = mismatches
    best = min(results, key=lambda k: len(results[k]))
    mismatched_parts = {
        m.split("/")[0] for m in results[best]
    }
    n_matched = len(TABLE1_PRINTED) - len(mismatched_parts)
    detail = (
        f"divisor={'n-1' if best[0] == 1 else 'n'}, variant={best[1]}, "
        f"{n_matched}/11 parts matched"
    )
    if results[best]:
        detail += f"; mismatches: {results[best]}"
    assert n_matched >= 9, detail
    _report(8, detail)


@needs_glass
def test_criterion_9_table2_reproduction():
    X = _glass_composition()
    config = PermutationConfig(n_randomizations=10_000, cutoff_step=0.001,
                               seed=1)
    t0 = time.perf_counter()
    table = run_inference(X, config)
    elapsed = time.perf_counter() - t0
    assert elapsed < 60.0

    top5 = sorted(table.pairs, key=lambda p: abs(p.r), reverse=True)[:5]
    found = {frozenset((p.name_i, p.name_j)): p for p in top5}
    details = []
    for names, printed_r, q_band in TABLE2_PRINTED:
        key = frozenset(names)
        assert key in found, f"pair {names} not among the top five"
        pair = found[key]
        assert abs(pair.r - printed_r) <= 0.01, (
            f"{names}: r {pair.r:.3f} vs printed {printed_r}"
        )
        if q_band is None:
            assert pair.q < 1e-4, f"{names}: q {pair.q} not < 1e-4"
            details.append(f"{'-'.join(names)} q<1e-4")
        else:
            lo, hi = q_band
            assert lo <= pair.q <= hi, (
                f"{names}: q {pair.q:.3f} outside [{lo}, {hi}]"
            )
            details.append(f"{'-'.join(names)} q={pair.q:.3f}")
    _report(9, f"B=10000 in {elapsed:.1f}s; " + "; ".join(details))


def test_criterion_10_planted_dependence_and_budget():
    with _timed(10):
        rng = np.random.default_rng(1010)
        n = 200
        logs = rng.normal(size=(n, 6))
        logs[:, 1] = logs[:, 0] + 0.35 * rng.normal(size=n)
        X = close(np.exp(logs))
        config = PermutationConfig(n_randomizations=1000, cutoff_step=0.01,
                                   seed=10)
        table = run_inference(X, config)
        # the planted pair attains the smallest q (ties at q=0 are a real
        # property of the per-tail plug-in estimator) and is the clear
        # strongest association
        best = min(table.pairs, key=lambda p: (p.q, -abs(p.r)))
        assert (best.i, best.j) == (0, 1)
        planted = next(p for p in table.pairs if (p.i, p.j) == (0, 1))
        assert planted.q == min(p.q for p in table.pairs)
        strongest = max(table.pairs, key=lambda p: abs(p.r))
        assert (strongest.i, strongest.j) == (0, 1)
        others = min(
            p.q for p in table.pairs if (p.i, p.j) != (0, 1)
        )

    synthetic_total = sum(
        _DURATIONS.get(k, 0.0) for k in (1, 2, 3, 4, 5, 6, 7, 10)
    )
    assert synthetic_total < 120.0
    _report(10, f"planted q={planted.q:.4f} vs next {others:.4f}; "
                f"criteria 1-7 + simulation took {synthetic_total:.1f}s")
