import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import copartial._kernels as _kernels
from copartial import (
    PermutationConfig,
    close,
    fdr_curve,
    permute_dataset,
    q_values,
    run_inference,
)
from copartial._kernels import child_generator, cutoff_grid, exceedance_counts
from copartial.errors import CopartialError
from helpers import random_composition


class _IdentityRng:
    """Stand-in generator whose column permutation is the identity."""

    def permuted(self, x, axis=0):
        return np.array(x)


# ---------------------------------------------------------------------------
# permute_dataset
# ---------------------------------------------------------------------------


def test_permute_identity_returns_input(rng):
    X = random_composition(rng, 10, 4)
    out = permute_dataset(X, _IdentityRng())
    np.testing.assert_allclose(out.values, X.values, atol=1e-15)


def test_permute_preserves_column_multisets(rng):
    # before re-closure each column is a permutation of the original; the
    # output is that matrix re-closed (same stream replayed to verify both)
    X = random_composition(rng, 20, 5)
    out = permute_dataset(X, child_generator(55, 0))
    permuted_raw = child_generator(55, 0).permuted(X.values, axis=0)
    for j in range(5):
        np.testing.assert_array_equal(
            np.sort(permuted_raw[:, j]), np.sort(X.values[:, j])
        )
    expected = permuted_raw / permuted_raw.sum(axis=1, keepdims=True)
    np.testing.assert_allclose(out.values, expected, atol=1e-15)
    np.testing.assert_allclose(out.values.sum(axis=1), 1.0, atol=1e-12)


def test_permute_deterministic_with_fixed_key(rng):
    X = random_composition(rng, 15, 4)
    a = permute_dataset(X, child_generator(123, 0))
    b = permute_dataset(X, child_generator(123, 0))
    np.testing.assert_array_equal(a.values, b.values)
    c = permute_dataset(X, child_generator(123, 1))
    assert not np.array_equal(a.values, c.values)


def test_permuted_log_equals_log_permuted(rng):
    # the kernels permute log data; identical streams make that equal to
    # logging the permuted raw data
    X = random_composition(rng, 20, 5)
    logs = X.log_values()
    a = child_generator(7, 3).permuted(X.values, axis=0)
    b = child_generator(7, 3).permuted(logs, axis=0)
    np.testing.assert_allclose(np.log(a), b, atol=1e-15)


# ---------------------------------------------------------------------------
# exceedance counting and the cutoff grid
# ---------------------------------------------------------------------------


def test_cutoff_grid_covers_unit_interval():
    np.testing.assert_allclose(cutoff_grid(0.5), [0.5, 1.0])
    assert cutoff_grid(0.001).shape == (1000,)
    np.testing.assert_allclose(cutoff_grid(0.3), [0.3, 0.6, 0.9])


def test_exceedance_counting_is_closed():
    cutoffs = cutoff_grid(0.5)
    pos, neg = exceedance_counts(np.array([0.5, -1.0, 0.2]), cutoffs)
    np.testing.assert_array_equal(pos, [1, 0])
    np.testing.assert_array_equal(neg, [1, 1])


# ---------------------------------------------------------------------------
# fdr_curve and q_values
# ---------------------------------------------------------------------------


def test_fdr_hand_fixture():
    # 3 pairs, 2 replicates, grid {0.5, 1.0}; counts enumerated by hand
    observed = np.array([0.7, -0.6, 0.2])
    randomized = np.array([[0.5, -0.1, 0.9], [-0.55, 0.2, 0.0]])
    curves = fdr_curve(observed, randomized, step=0.5)
    np.testing.assert_array_equal(curves.obs_pos, [1, 0])
    np.testing.assert_array_equal(curves.obs_neg, [1, 0])
    np.testing.assert_allclose(curves.rand_pos_mean, [1.0, 0.0])
    np.testing.assert_allclose(curves.rand_neg_mean, [0.5, 0.0])
    np.testing.assert_allclose(curves.fdr_pos[0], 1.0)
    assert np.isnan(curves.fdr_pos[1])
    np.testing.assert_allclose(curves.fdr_neg[0], 0.5)
    assert np.isnan(curves.fdr_neg[1])
    qs = q_values(curves, observed)
    np.testing.assert_allclose(qs, [1.0, 0.5, 1.0])


def test_fdr_zero_randomized_gives_zero():
    observed = np.array([0.9, 0.4, -0.7])
    randomized = np.zeros((5, 3))
    curves = fdr_curve(observed, randomized, step=0.1)
    defined = ~np.isnan(curves.fdr_pos)
    assert defined.any()
    np.testing.assert_array_equal(curves.fdr_pos[defined], 0.0)
    qs = q_values(curves, observed)
    np.testing.assert_allclose(qs[[0, 2]], 0.0)


def test_fdr_randomized_equal_observed_gives_one():
    observed = np.array([0.9, 0.4, -0.7, 0.05])
    curves = fdr_curve(observed, observed[None, :], step=0.1)
    for fdr in (curves.fdr_pos, curves.fdr_neg):
        defined = fdr[~np.isnan(fdr)]
        np.testing.assert_allclose(defined, 1.0)
    np.testing.assert_allclose(q_values(curves, observed), 1.0)


def test_fdr_curve_needs_observed_pairs():
    with pytest.raises(CopartialError):
        fdr_curve(np.array([]), np.zeros((2, 0)), step=0.1)


def test_q_below_grid_is_one():
    observed = np.array([0.9, 0.0005, -0.0005])
    curves = fdr_curve(observed, np.zeros((2, 3)), step=0.001)
    qs = q_values(curves, observed)
    assert qs[1] == 1.0 and qs[2] == 1.0


@given(
    arrays(np.float64, st.integers(3, 12),
           elements=st.floats(-1.0, 1.0)),
)
@settings(max_examples=40, deadline=None)
def test_q_monotone_in_abs_r_per_tail(observed):
    rng = np.random.default_rng(0)
    randomized = np.clip(rng.normal(0, 0.3, size=(20, observed.size)), -1, 1)
    curves = fdr_curve(observed, randomized, step=0.05)
    qs = q_values(curves, observed)
    for tail_sign in (1, -1):
        idx = [i for i, r in enumerate(observed)
               if (r >= 0) == (tail_sign > 0)]
        pairs = sorted(((abs(observed[i]), qs[i]) for i in idx))
        for (r1, q1), (r2, q2) in zip(pairs, pairs[1:]):
            assert q2 <= q1 + 1e-12


# ---------------------------------------------------------------------------
# run_inference
# ---------------------------------------------------------------------------


def test_run_inference_deterministic(rng):
    X = random_composition(rng, 25, 5)
    config = PermutationConfig(n_randomizations=100, cutoff_step=0.02,
                               seed=99)
    a = run_inference(X, config)
    b = run_inference(X, config)
    assert [p.q for p in a.pairs] == [p.q for p in b.pairs]
    assert [p.r for p in a.pairs] == [p.r for p in b.pairs]
    np.testing.assert_array_equal(a.curves.rand_pos_mean,
                                  b.curves.rand_pos_mean)


def test_run_inference_identity_permutations_give_q_one(rng, monkeypatch):
    # with the null forced equal to the observed data, every q is 1
    X = random_composition(rng, 20, 4)
    monkeypatch.setattr(
        _kernels, "permuted_replicates",
        lambda base, n, seed: (np.array(base) for _ in range(n)),
    )
    config = PermutationConfig(n_randomizations=1, cutoff_step=0.01, seed=0)
    table = run_inference(X, config, backend="numpy")
    assert all(p.q == 1.0 for p in table.pairs)


def test_run_inference_q_matrix_and_tails(rng):
    X = random_composition(rng, 30, 5)
    table = run_inference(
        X, PermutationConfig(n_randomizations=50, cutoff_step=0.05, seed=3)
    )
    qm = table.q_matrix()
    assert np.isnan(np.diag(qm)).all()
    for p in table.pairs:
        assert qm[p.i, p.j] == p.q
        assert p.tail == ("positive" if p.r >= 0 else "negative")
        assert 0.0 <= p.q <= 1.0


def test_run_inference_residual_mode(rng):
    X = random_composition(rng, 30, 5)
    config = PermutationConfig(n_randomizations=80, cutoff_step=0.02,
                               seed=17, mode="residuals")
    a = run_inference(X, config)
    b = run_inference(X, config)
    assert a.mode == "residuals"
    assert [p.q for p in a.pairs] == [p.q for p in b.pairs]
    # observed statistics are the same as in column mode
    col = run_inference(
        X, PermutationConfig(n_randomizations=1, cutoff_step=0.02, seed=17)
    )
    np.testing.assert_allclose(
        [p.r for p in a.pairs], [p.r for p in col.pairs], atol=1e-12
    )


def test_run_inference_failure_accounting(rng, monkeypatch):
    X = random_composition(rng, 20, 4)
    real = _kernels.replicate_counts

    def flaky(base, n_rand, seed, cutoffs, shrinkage=0.0,
              pipeline="partial"):
        pos, neg, _ = real(base, n_rand, seed, cutoffs,
                           shrinkage=shrinkage, pipeline=pipeline)
        return pos, neg, n_rand // 2

    monkeypatch.setattr(_kernels, "replicate_counts", flaky)
    config = PermutationConfig(n_randomizations=40, cutoff_step=0.05, seed=1)
    with pytest.warns(RuntimeWarning, match="replicates failed"):
        table = run_inference(X, config, backend="numpy")
    assert table.n_failed == 20
    # the mean divides by the effective replicate count
    assert table.curves.n_replicates == 20


def test_planted_dependence_gets_smallest_q(rng):
    # one strongly coupled pair among independent log parts
    n = 200
    logs = rng.normal(size=(n, 6))
    logs[:, 1] = logs[:, 0] + 0.35 * rng.normal(size=n)
    X = close(np.exp(logs))
    config = PermutationConfig(n_randomizations=1000, cutoff_step=0.01,
                               seed=8)
    table = run_inference(X, config)
    best = min(table.pairs, key=lambda p: (p.q, -abs(p.r)))
    assert (best.i, best.j) == (0, 1)
    strongest = max(table.pairs, key=lambda p: abs(p.r))
    assert (strongest.i, strongest.j) == (0, 1)
    assert best.q < min(
        p.q for p in table.pairs if (p.i, p.j) != (0, 1)
    )


def test_config_validation():
    with pytest.raises(CopartialError):
        PermutationConfig(n_randomizations=0)
    with pytest.raises(CopartialError):
        PermutationConfig(cutoff_step=0.0)
    with pytest.raises(CopartialError):
        PermutationConfig(cutoff_step=1.5)
    with pytest.raises(CopartialError):
        PermutationConfig(seed=-1)
    with pytest.raises(CopartialError):
        PermutationConfig(mode="bootstrap")
    with pytest.raises(CopartialError):
        PermutationConfig(shrinkage=2.0)
