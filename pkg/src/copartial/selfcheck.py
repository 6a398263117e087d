"""Numerical self-check: every structural identity run on synthetic data.

Each check evaluates one exact identity of the pipeline on seeded synthetic
compositions and reports its maximum deviation against a fixed tolerance.
The CLI exposes this as ``copartial selfcheck``; a nonzero exit status means
at least one identity failed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .composition import (
    ReferenceSpec,
    alr_transform,
    change_reference,
    close,
    clr_transform,
    f_matrix,
    g_matrix,
    h_inverse,
    h_matrix,
    permutation_matrix,
)
from .covariance import (
    estimate_gamma,
    estimate_sigma,
    pseudo_inverse,
    pseudo_inverse_eig,
    sigma_from_gamma,
    variation_matrix,
)
from .partial import (
    partial_correlations,
    partial_variances,
    residual_of_part,
    scaled_inverse_partial_corr,
    normalization_equivalence_check,
)

__all__ = ["CheckResult", "SelfcheckReport", "run_selfcheck"]


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_deviation: float
    tolerance: float

    @property
    def passed(self):
        return self.max_deviation <= self.tolerance


@dataclass(frozen=True)
class SelfcheckReport:
    checks: tuple
    n_samples: int
    n_parts: int
    seed: int

    @property
    def passed(self):
        return all(c.passed for c in self.checks)

    def render(self):
        lines = [
            f"selfcheck: N={self.n_samples} D={self.n_parts} seed={self.seed}"
        ]
        for c in self.checks:
            status = "pass" if c.passed else "FAIL"
            lines.append(
                f"  [{status}] {c.name}: max deviation {c.max_deviation:.3e}"
                f" (tol {c.tolerance:.1e})"
            )
        lines.append("selfcheck " + ("passed" if self.passed else "FAILED"))
        return "\n".join(lines)


def _random_composition(rng, n, d, names=None):
    # near-identity mixing keeps the log covariance well-conditioned
    mix = np.eye(d) + 0.4 * rng.normal(size=(d, d))
    logs = rng.normal(scale=0.7, size=(n, d)) @ mix
    return close(np.exp(logs), names)


def _maxabs(a, b=None):
    a = np.asarray(a)
    if b is not None:
        a = a - np.asarray(b)
    return float(np.max(np.abs(a)))


def _structural_checks(rng, n_perms):
    dev_fg = dev_gg = dev_g = dev_h = dev_pgp = 0.0
    for d in range(3, 11):
        f = f_matrix(d)
        g = g_matrix(d)
        h = h_matrix(d)
        dev_fg = max(dev_fg, _maxabs(f @ g, f))
        dev_gg = max(dev_gg, _maxabs(g @ g, g))
        dev_g = max(dev_g, _maxabs(f.T @ h_inverse(d) @ f, g))
        dev_h = max(dev_h, _maxabs(f @ f.T, h))
        for _ in range(n_perms):
            p = permutation_matrix(rng.permutation(d))
            dev_pgp = max(dev_pgp, _maxabs(p @ g @ p.T, g))
    return [
        CheckResult("F G = F", dev_fg, 1e-12),
        CheckResult("G^2 = G", dev_gg, 1e-12),
        CheckResult("G = F^T H^-1 F", dev_g, 1e-12),
        CheckResult("H = F F^T", dev_h, 1e-12),
        CheckResult("P G P^T = G", dev_pgp, 1e-12),
    ]


def _transform_checks(rng, n, d):
    X = _random_composition(rng, n, d)
    z = clr_transform(X)
    y = alr_transform(X, d - 1)
    f = f_matrix(d)
    checks = [
        CheckResult("clr rows sum to 0", _maxabs(z.values.sum(axis=1)), 1e-10),
        CheckResult("Y = F Z", _maxabs(z.values @ f.T, y.values), 1e-12),
        CheckResult(
            "Z = F^T H^-1 Y",
            _maxabs(y.values @ (f.T @ h_inverse(d)).T, z.values),
            1e-12,
        ),
    ]
    # exact rescaling between full-clr and leave-one-out references
    dev = 0.0
    logs = X.log_values()
    for j in range(d):
        others = [i for i in range(d) if i != j]
        zj_full = logs[:, j] - logs.mean(axis=1)
        zj_loo = logs[:, j] - logs[:, others].mean(axis=1)
        dev = max(dev, _maxabs(zj_full, (d - 1) / d * zj_loo))
    checks.append(
        CheckResult("clr(j) = (D-1)/D clr(j | without j)", dev, 1e-12)
    )
    # round trip through a reference change
    back = change_reference(
        change_reference(z, ReferenceSpec.alr(d - 1, d)),
        ReferenceSpec.clr(range(d)),
    )
    checks.append(
        CheckResult("clr -> alr -> clr round trip",
                    _maxabs(back.values, z.values), 1e-12)
    )
    return checks


def _covariance_checks(rng, n, d, n_perms):
    X = _random_composition(rng, n, d)
    gamma_cov = estimate_gamma(X)
    gamma = gamma_cov.gamma
    gp_default = pseudo_inverse(gamma_cov).gamma_pinv

    dev_ref = 0.0
    for ref in range(d):
        gp_ref = pseudo_inverse(estimate_sigma(X, ref)).gamma_pinv
        dev_ref = max(dev_ref, _maxabs(gp_ref, gp_default))

    gp_eig = pseudo_inverse_eig(gamma_cov).gamma_pinv
    sigma_last = estimate_sigma(X, d - 1)
    sigma_inv = np.linalg.inv(sigma_last.sigma)
    dev_coincide = max(
        _maxabs(np.diag(gp_default)[: d - 1], np.diag(sigma_inv)),
        _maxabs(gp_default[: d - 1, : d - 1], sigma_inv),
    )

    dev_sigma = _maxabs(
        sigma_from_gamma(gamma_cov, d - 1).sigma, sigma_last.sigma
    )

    tau = variation_matrix(X).tau
    gamma_diag = np.diag(gamma)
    tau_identity = gamma_diag[:, None] + gamma_diag[None, :] - 2 * gamma

    dev_perm = 0.0
    for _ in range(n_perms):
        order = rng.permutation(d)
        p = permutation_matrix(order)
        xp = close(X.values[:, order], [X.names[o] for o in order])
        gp_p = pseudo_inverse(estimate_gamma(xp)).gamma_pinv
        dev_perm = max(dev_perm, _maxabs(p @ gp_default @ p.T, gp_p))

    return [
        CheckResult("pinv(Gamma) reference-independent", dev_ref, 1e-9),
        CheckResult("alr route = eigendecomposition route",
                    _maxabs(gp_default, gp_eig), 1e-8),
        CheckResult("pinv diag/off-diag coincide with inv(Sigma)",
                    dev_coincide, 1e-10),
        CheckResult("Gamma pinv(Gamma) = G",
                    _maxabs(gamma @ gp_default, g_matrix(d)), 1e-8),
        CheckResult("Sigma = F Gamma F^T (estimator consistency)",
                    dev_sigma, 1e-12),
        CheckResult("tau_ij = gamma_ii + gamma_jj - 2 gamma_ij",
                    _maxabs(tau, tau_identity), 1e-10),
        CheckResult("P pinv(Gamma) P^T = pinv(Gamma_P)", dev_perm, 1e-9),
    ]


def _partial_checks(rng, n, d):
    X = _random_composition(rng, n, d)
    gamma_cov = estimate_gamma(X)
    gp = pseudo_inverse(gamma_cov)
    pvar = partial_variances(gp)
    pcorr = partial_correlations(gp)

    dev_res = 0.0
    for j in range(d):
        control = [i for i in range(d) if i != j]
        res_g = residual_of_part(X, j, control, "gmean")
        res_k = residual_of_part(X, j, control, control[0])
        dev_res = max(dev_res, _maxabs(res_g, res_k))

    dev_pvar = 0.0
    dev_pcorr = 0.0
    for i in range(d):
        control_i = [c for c in range(d) if c != i]
        res = residual_of_part(X, i, control_i, "gmean")
        dev_pvar = max(dev_pvar, abs(np.var(res, ddof=1) - pvar[i]))
        for j in range(i + 1, d):
            control = [c for c in range(d) if c not in (i, j)]
            ri = residual_of_part(X, i, control, "gmean")
            rj = residual_of_part(X, j, control, "gmean")
            dev_pcorr = max(
                dev_pcorr, abs(np.corrcoef(ri, rj)[0, 1] - pcorr[i, j])
            )

    dev_scaled = max(
        _maxabs(scaled_inverse_partial_corr(gamma_cov), pcorr),
        _maxabs(
            scaled_inverse_partial_corr(estimate_sigma(X, d - 1)),
            pcorr[: d - 1, : d - 1],
        ),
    )

    scales = rng.uniform(0.2, 5.0, size=X.n_samples)
    x_scaled = close(X.values * scales[:, None], X.names)
    gp_scaled = pseudo_inverse(estimate_gamma(x_scaled))
    dev_scale_inv = max(
        _maxabs(partial_variances(gp_scaled), pvar),
        _maxabs(partial_correlations(gp_scaled), pcorr),
    )

    check = normalization_equivalence_check(
        X, normalizing=[d - 2, d - 1], pair=(0, 1),
        control=list(range(2, d)),
    )

    return [
        CheckResult("residual reference-independence", dev_res, 1e-10),
        CheckResult("1/pinv_jj = explicit residual variance", dev_pvar, 1e-8),
        CheckResult("pinv partial corr = residual regression corr",
                    dev_pcorr, 1e-8),
        CheckResult("scaled-inverse route = partial correlations",
                    dev_scaled, 1e-10),
        CheckResult("per-sample rescaling changes nothing",
                    dev_scale_inv, 1e-12),
        CheckResult("normalization equivalence (U in control)",
                    check.discrepancy, 1e-10),
    ]


def run_selfcheck(n_samples=100, n_parts=5, seed=20260808, n_perms=20,
                  corrupt=None):
    """Run every invariant suite on seeded synthetic data.

    ``corrupt="gamma-symmetry"`` deliberately breaks the symmetry of an
    estimated clr covariance before checking it, as a negative control that
    the checker actually detects violations.
    """
    rng = np.random.default_rng(seed)
    checks = []
    checks += _structural_checks(rng, n_perms)
    checks += _transform_checks(rng, n_samples, n_parts)
    checks += _covariance_checks(rng, n_samples, n_parts, n_perms)
    checks += _partial_checks(rng, n_samples, n_parts)

    X = _random_composition(rng, n_samples, n_parts)
    gamma = estimate_gamma(X).gamma.copy()
    if corrupt == "gamma-symmetry":
        gamma[0, 1] += 1e-3
    checks.append(
        CheckResult("Gamma symmetric", _maxabs(gamma, gamma.T), 1e-12)
    )
    checks.append(
        CheckResult("Gamma rows sum to 0",
                    _maxabs(gamma.sum(axis=1)), 1e-10)
    )
    rel = np.abs(np.linalg.eigvalsh(gamma))
    rel = np.sort(rel / rel.max())
    one_zero = rel[0] if (rel[0] < 1e-10 and rel[1] > 1e-10) else 1.0
    checks.append(
        CheckResult("Gamma has exactly one zero eigenvalue",
                    float(one_zero), 1e-10)
    )
    return SelfcheckReport(
        checks=tuple(checks),
        n_samples=n_samples,
        n_parts=n_parts,
        seed=seed,
    )
