from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from _helpers import hc_oracle, wls_oracle
from tomadjust.errors import DfExhausted, LeverageOne, RankDeficient
from tomadjust.numkit import HC_FLAVORS, SandwichSpec, hat_matrix, sandwich_variance, sandwich_variances, wls_fit


def _problem(rng, n=25, p=4, weighted=True):
    X = np.column_stack([np.ones(n), rng.standard_normal((n, p - 1))])
    y = X @ rng.standard_normal(p) + rng.standard_normal(n) * (1 + np.abs(X[:, 1]))
    w = rng.uniform(0.5, 4.0, n) if weighted else None
    return y, X, w


def test_coefficients_match_normal_equations(rng):
    y, X, w = _problem(rng)
    fit = wls_fit(y, X, w)
    assert_allclose(fit.coefficients, wls_oracle(y, X, w), rtol=1e-10)
    assert_allclose(fit.residuals, y - X @ fit.coefficients)


def test_unit_weights_are_ols(rng):
    y, X, _ = _problem(rng, weighted=False)
    assert_allclose(wls_fit(y, X).coefficients, np.linalg.lstsq(X, y, rcond=None)[0], rtol=1e-10)


def test_leverages_are_hat_diagonal_and_sum_to_p(rng):
    y, X, w = _problem(rng)
    fit = wls_fit(y, X, w)
    assert_allclose(fit.leverages, np.diag(hat_matrix(X, w)), atol=1e-12)
    assert fit.leverages.sum() == pytest.approx(X.shape[1])
    assert np.all((fit.leverages > 0) & (fit.leverages < 1))


@pytest.mark.parametrize("flavor", HC_FLAVORS)
def test_sandwich_matches_explicit_matrices(rng, flavor):
    y, X, w = _problem(rng)
    d = np.array([0.0, 1.0, -0.5, 0.0])
    fit = wls_fit(y, X, w)
    got = sandwich_variance(fit, X, SandwichSpec(flavor, X.shape[1]), d)
    assert got == pytest.approx(hc_oracle(y, X, w, d, flavor, X.shape[1]), rel=1e-10)


def test_batch_variances_equal_single_calls(rng):
    y, X, w = _problem(rng)
    d = np.eye(4)[1]
    fit = wls_fit(y, X, w)
    batch = sandwich_variances(fit, X, d, 4)
    for fl in HC_FLAVORS:
        assert batch[fl] == pytest.approx(sandwich_variance(fit, X, SandwichSpec(fl, 4), d), rel=1e-13)


def test_hc_ordering(rng):
    y, X, w = _problem(rng)
    v = sandwich_variances(wls_fit(y, X, w), X, np.eye(4)[1], 4)
    assert v["HC0"] <= v["HC2"] <= v["HC3"]
    assert v["HC0"] <= v["HC1"]


def test_rank_deficient_design_raises(rng):
    y, X, w = _problem(rng)
    X = np.column_stack([X, X[:, 1] * 2])
    with pytest.raises(RankDeficient):
        wls_fit(y, X, w)


def test_too_few_rows_raise():
    with pytest.raises(RankDeficient):
        wls_fit(np.ones(2), np.ones((2, 3)))


def test_leverage_one_blocks_hc2_and_hc3():
    # a dummy column isolating the last unit gives it leverage one
    X = np.column_stack([np.ones(6), [0, 0, 0, 0, 0, 1.0], np.arange(6.0)])
    y = np.array([1.0, 2, 0, 3, 1, 5])
    fit = wls_fit(y, X)
    assert fit.leverages[-1] == pytest.approx(1.0)
    for fl in ("HC2", "HC3"):
        with pytest.raises(LeverageOne):
            sandwich_variance(fit, X, SandwichSpec(fl, 3), np.eye(3)[2])
    sandwich_variance(fit, X, SandwichSpec("HC0", 3), np.eye(3)[2])


def test_hc1_without_residual_df_raises(rng):
    y, X, w = _problem(rng, n=6, p=3)
    with pytest.raises(DfExhausted):
        sandwich_variance(wls_fit(y, X, w), X, SandwichSpec("HC1", 6), np.eye(3)[1])


def test_bad_inputs():
    with pytest.raises(ValueError):
        wls_fit(np.ones(3), np.ones((3, 1)), np.array([1.0, 0.0, 1.0]))
    with pytest.raises(ValueError):
        wls_fit(np.ones(3), np.ones((4, 1)))
    with pytest.raises(ValueError):
        SandwichSpec("HC4", 1)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), scale=st.floats(0.1, 100), shift=st.floats(-50, 50))
def test_weight_scaling_and_outcome_shift_invariance(seed, scale, shift):
    rng = np.random.default_rng(seed)
    y, X, w = _problem(rng, n=15, p=3)
    a = wls_fit(y, X, w)
    b = wls_fit(y + shift, X, w * scale)
    assert_allclose(b.coefficients[1:], a.coefficients[1:], rtol=1e-8, atol=1e-8)
    assert_allclose(b.leverages, a.leverages, atol=1e-10)
