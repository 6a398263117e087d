"""Agreement between the compiled replicate kernel and the NumPy fallback."""

import numpy as np
import pytest

from copartial import (
    PermutationConfig,
    available_backends,
    estimate_gamma,
    partial_correlations,
    permute_dataset,
    pseudo_inverse,
    run_inference,
)
from copartial import _kernels
from copartial._backend import resolve_backend
from copartial._kernels import child_generator, cutoff_grid, permuted_replicates
from copartial.errors import CopartialError
from helpers import random_composition

needs_ext = pytest.mark.skipif(
    "cython" not in available_backends(),
    reason="compiled extension not built",
)


def test_resolve_backend_names():
    name, module = resolve_backend("numpy")
    assert name == "numpy" and module is _kernels
    with pytest.raises(CopartialError):
        resolve_backend("fortran")


def test_replicate_stream_matches_child_generators(rng):
    # the state-reset fast path reproduces the documented per-replicate
    # Philox derivation bit for bit
    base = rng.normal(size=(20, 5))
    seed = 123456789
    fast = list(permuted_replicates(base, 8, seed))
    for b, permuted in enumerate(fast):
        reference = child_generator(seed, b).permuted(base, axis=0)
        np.testing.assert_array_equal(permuted, reference)


@needs_ext
@pytest.mark.parametrize("pipeline", ["partial", "correlation"])
@pytest.mark.parametrize("shrinkage", [0.0, 0.2])
def test_kernels_produce_identical_counts(rng, pipeline, shrinkage):
    from copartial import _speedups

    X = random_composition(rng, 30, 6)
    base = X.log_values()
    cutoffs = cutoff_grid(0.01)
    a = _kernels.replicate_counts(base, 300, 12345, cutoffs,
                                  shrinkage=shrinkage, pipeline=pipeline)
    b = _speedups.replicate_counts(base, 300, 12345, cutoffs,
                                   shrinkage=shrinkage, pipeline=pipeline)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert a[2] == b[2]


@needs_ext
def test_run_inference_matches_across_backends(rng):
    X = random_composition(rng, 25, 5)
    config = PermutationConfig(n_randomizations=200, cutoff_step=0.02,
                               seed=77)
    a = run_inference(X, config, backend="numpy")
    b = run_inference(X, config, backend="cython")
    assert a.backend == "numpy" and b.backend == "cython"
    assert [p.q for p in a.pairs] == [p.q for p in b.pairs]
    np.testing.assert_array_equal(a.curves.obs_pos, b.curves.obs_pos)
    np.testing.assert_array_equal(a.curves.rand_pos_mean,
                                  b.curves.rand_pos_mean)


def test_kernel_replicate_equals_library_pipeline(rng):
    # one replicate of the numpy kernel reproduces the public pipeline:
    # permute -> close -> Gamma -> pinv -> partial correlations
    X = random_composition(rng, 30, 6)
    seed, rep = 9, 4
    Xp = permute_dataset(X, child_generator(seed, rep))
    r_library = partial_correlations(pseudo_inverse(estimate_gamma(Xp)))

    permuted_logs = child_generator(seed, rep).permuted(
        X.log_values(), axis=0
    )
    iu = np.triu_indices(6, k=1)
    r_kernel = _kernels._partial_corr_values(permuted_logs, 0.0, iu)
    np.testing.assert_allclose(r_kernel, r_library[iu], atol=1e-12)


@needs_ext
def test_env_variable_override(rng, monkeypatch):
    monkeypatch.setenv("COPARTIAL_BACKEND", "numpy")
    name, module = resolve_backend("auto")
    assert name == "numpy"
    monkeypatch.delenv("COPARTIAL_BACKEND")
    name, _ = resolve_backend("auto")
    assert name == "cython"
