import math

import numpy as np
import pytest

from rrglm import BERNOULLI, GAUSSIAN, DataSet, InputError, get_family, hard, soft
from rrglm.families import deviance, mean_matrix, neg_log_likelihood, nll_gradient, rho_upper_bound, scale_factor
from rrglm.oracles import finite_diff_gradcheck


def test_family_lookup():
    assert get_family("gaussian") is GAUSSIAN
    assert get_family("bernoulli") is BERNOULLI
    assert get_family("bernoulli_logit") is BERNOULLI
    with pytest.raises(InputError):
        get_family("poisson")


def test_mean_and_variance():
    t = np.linspace(-30, 30, 101)
    assert np.array_equal(GAUSSIAN.mean(t), t)
    np.testing.assert_allclose(BERNOULLI.mean(t), 1 / (1 + np.exp(-t)), rtol=1e-12)
    v = BERNOULLI.variance(t)
    assert np.all(v >= 0) and np.all(v <= 0.25)
    assert BERNOULLI.max_variance == 0.25


def test_mean_matrix_examples():
    X = np.random.default_rng(0).standard_normal((5, 3))
    assert np.array_equal(mean_matrix("gaussian", X, np.zeros((3, 2))), np.zeros((5, 2)))
    assert np.all(mean_matrix("bernoulli", X, np.zeros((3, 2))) == 0.5)
    assert mean_matrix("bernoulli", np.ones((1, 1)), np.array([[math.log(3)]]))[0, 0] == pytest.approx(0.75)
    B = np.random.default_rng(1).standard_normal((3, 2))
    assert np.array_equal(mean_matrix("gaussian", X, B), X @ B)
    with pytest.raises(InputError):
        mean_matrix("gaussian", X, np.zeros((4, 2)))


def test_nll_examples():
    rng = np.random.default_rng(2)
    X, Y = rng.standard_normal((6, 4)), rng.standard_normal((6, 3))
    assert neg_log_likelihood("gaussian", X, Y, np.zeros((4, 3))) == pytest.approx(0.5 * np.sum(Y**2))
    assert neg_log_likelihood("bernoulli", np.ones((1, 1)), np.ones((1, 1)), np.zeros((1, 1))) == pytest.approx(
        math.log(2)
    )


def test_nll_matches_scalar_loop():
    rng = np.random.default_rng(3)
    X = rng.standard_normal((6, 4))
    B = rng.standard_normal((4, 3))
    Yb = (rng.random((6, 3)) < 0.5).astype(float)
    Yg = rng.standard_normal((6, 3))
    gauss = bern = 0.0
    for i in range(6):
        for k in range(3):
            th = sum(X[i, j] * B[j, k] for j in range(4))
            gauss += 0.5 * (Yg[i, k] - th) ** 2
            bern += math.log1p(math.exp(th)) - Yb[i, k] * th
    assert neg_log_likelihood("gaussian", X, Yg, B) == pytest.approx(gauss, rel=1e-12)
    assert neg_log_likelihood("bernoulli", X, Yb, B) == pytest.approx(bern, rel=1e-12)
    assert deviance("bernoulli", X, Yb, B) == pytest.approx(2 * bern, rel=1e-12)


def test_bernoulli_nll_is_stable_for_large_predictors():
    val = BERNOULLI.nll(np.array([[800.0, -800.0]]), np.array([[1.0, 0.0]]))
    assert math.isfinite(val) and val == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("family", ["gaussian", "bernoulli"])
def test_gradient_finite_differences(family):
    rng = np.random.default_rng(4)
    X = rng.standard_normal((6, 3))
    Y = (rng.random((6, 3)) < 0.5).astype(float)
    data = DataSet.from_predictors(X, Y, family)
    B = rng.standard_normal((4, 3))
    verdict = finite_diff_gradcheck(family, data, B, 1e-5)
    assert verdict.passed, verdict


def test_gaussian_gradient_at_zero():
    rng = np.random.default_rng(5)
    X, Y = rng.standard_normal((6, 4)), rng.standard_normal((6, 3))
    assert np.array_equal(nll_gradient("gaussian", X, Y, np.zeros((4, 3))), -(X.T @ Y))


def test_rho_upper_bound():
    assert rho_upper_bound("gaussian", np.eye(3)) == pytest.approx(1.0)
    assert rho_upper_bound("bernoulli", np.eye(3)) == pytest.approx(0.25)
    assert rho_upper_bound("gaussian", 2 * np.eye(3)) == pytest.approx(4.0)


def test_scale_factor():
    assert scale_factor("gaussian", np.eye(3), soft(1.0)) == 1.0
    assert scale_factor("bernoulli", 2 * np.eye(3), soft(1.0)) == 1.0
    assert scale_factor("bernoulli", 8 * np.eye(3), soft(1.0)) == pytest.approx(8 / (2 * math.sqrt(2)))
    assert scale_factor("gaussian", 3 * np.eye(3), hard(1.0)) == pytest.approx(3.0)
    assert scale_factor("gaussian", 3 * np.eye(3), constrained=True) == pytest.approx(3.0)


def test_dataset_validation():
    X = np.ones((3, 2))
    with pytest.raises(InputError):
        DataSet.from_predictors(X, np.array([[0.0], [1.0], [0.5]]), "bernoulli")
    with pytest.raises(InputError):
        DataSet.from_predictors(X, np.ones((4, 1)), "gaussian")
    with pytest.raises(InputError):
        DataSet.from_predictors(X, np.array([[1.0], [np.nan], [0.0]]), "gaussian")
    d = DataSet.from_predictors(X, np.ones((3, 1)))
    assert d.X.shape == (3, 3) and d.p == 2 and d.m == 1
    assert np.array_equal(d.x0, np.ones(3))
    d2 = DataSet.from_predictors(X, np.ones((3, 1)), intercept=False)
    assert d2.X.shape == (3, 2) and d2.x0 is None


def test_subset_and_with_design():
    rng = np.random.default_rng(6)
    d = DataSet.from_predictors(rng.standard_normal((5, 3)), rng.standard_normal((5, 2)))
    s = d.subset([0, 2])
    assert s.n == 2 and np.array_equal(s.Y, d.Y[[0, 2]])
    w = d.with_design(d.X_slope[:, :1])
    assert w.p == 1 and np.array_equal(w.x0, d.x0)
