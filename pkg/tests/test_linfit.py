import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from superpose import linfit
from superpose.errors import InputError

from oracles import ols, ridge_standardized


def random_problem(rng, n, p):
    X = rng.normal(0, 1, (n, p)) * rng.uniform(0.5, 3, p) + rng.normal(0, 2, p)
    y = X @ rng.normal(0, 2, p) + rng.normal(0, 0.5, n) + 1.0
    return X, y


def test_exact_fit_single_column():
    y = np.array([1.0, 4.0, 2.0, 8.0, 5.0])
    fit = linfit.fit_elastic_net(y[:, None], y, 0, 0)
    assert fit.beta[0] == pytest.approx(1.0, abs=1e-12)
    assert fit.intercept == pytest.approx(0.0, abs=1e-12)
    assert fit.train_rmse == pytest.approx(0.0, abs=1e-12)


def test_full_shrinkage(rng):
    X, y = random_problem(rng, 30, 4)
    fit = linfit.fit_elastic_net(X, y, 1e9, 1e-3)
    assert np.all(fit.beta == 0)
    assert fit.intercept == pytest.approx(y.mean())


def test_ridge_example_20x5(rng):
    X, y = random_problem(rng, 20, 5)
    fit = linfit.fit_elastic_net(X, y, 0.0, 0.3)
    beta, b0 = ridge_standardized(X, y, 0.3)
    np.testing.assert_allclose(fit.beta, beta, atol=1e-6)
    assert fit.intercept == pytest.approx(b0, abs=1e-6)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(10, 50), st.integers(1, 10), st.floats(0.05, 1.0))
def test_ridge_matches_closed_form(seed, n, p, lam2):
    X, y = random_problem(np.random.default_rng(seed), n, p)
    fit = linfit.fit_elastic_net(X, y, 0.0, lam2)
    beta, b0 = ridge_standardized(X, y, lam2)
    np.testing.assert_allclose(fit.beta, beta, atol=1e-6)
    assert abs(fit.intercept - b0) <= 1e-6


def test_ols_matches_normal_equations(rng):
    for _ in range(30):
        p = int(rng.integers(1, 11))
        n = int(rng.integers(max(10, 3 * p), 51))
        X = rng.normal(0, 1, (n, p))
        y = X @ rng.normal(0, 1, p) + rng.normal(0, 0.3, n)
        fit = linfit.fit_elastic_net(X, y, 0.0, 0.0)
        beta, b0 = ols(X, y)
        np.testing.assert_allclose(fit.beta, beta, atol=1e-6)
        assert abs(fit.intercept - b0) <= 1e-6


def test_zero_variance_column_gets_zero(rng):
    X, y = random_problem(rng, 25, 3)
    X[:, 1] = 4.2
    fit = linfit.fit_elastic_net(X, y)
    assert fit.beta[1] == 0.0


def test_all_constant_columns_give_intercept_only(rng):
    X = np.full((10, 2), 3.0)
    y = rng.normal(size=10)
    fit = linfit.fit_elastic_net(X, y)
    assert np.all(fit.beta == 0) and fit.intercept == pytest.approx(y.mean())


def test_non_finite_input_rejected(rng):
    X, y = random_problem(rng, 10, 2)
    X[3, 0] = np.nan
    with pytest.raises(InputError):
        linfit.fit_elastic_net(X, y)


def test_shrinkage_ordering(rng):
    for _ in range(20):
        X, y = random_problem(rng, 40, 6)
        norms = [np.abs(linfit.fit_elastic_net(X, y, l1, 0.01).beta * X.std(0)).sum()
                 for l1 in (0.0, 0.01, 0.1, 0.5, 1.0, 3.0, 10.0)]
        assert all(a >= b - 1e-9 for a, b in zip(norms, norms[1:]))


def test_objective_non_increasing_over_sweeps(rng):
    X, y = random_problem(rng, 40, 6)
    X[:, 1] = X[:, 0] + rng.normal(0, 0.05, 40)
    values = [linfit.objective(X, y, linfit.fit_elastic_net(X, y, 0.05, 0.01, tol=0.0, max_iters=k))
              for k in range(1, 30)]
    assert all(a >= b - 1e-12 for a, b in zip(values, values[1:]))


def test_elastic_net_backends_are_bit_identical(rng):
    from superpose import _fallback
    kernels = pytest.importorskip("superpose._kernels")
    for _ in range(50):
        X, y = random_problem(rng, 30, 7)
        Z = (X - X.mean(0)) / X.std(0)
        G = Z.T @ Z / 30
        c = Z.T @ (y - y.mean()) / 30
        b1, b2 = np.zeros(7), np.zeros(7)
        it1 = _fallback.enet_cd(G, c, 0.01, 0.02, 1e-8, 10000, b1)
        it2 = kernels.enet_cd(G, c, 0.01, 0.02, 1e-8, 10000, b2)
        assert it1 == it2 and np.array_equal(b1, b2)


# -- predict / rmse ------------------------------------------------------------------

def test_predict_examples(rng):
    fit = linfit.LinearFit(np.zeros(3), 2.5, 0, 0, 0)
    np.testing.assert_array_equal(linfit.predict(fit, rng.normal(size=(4, 3))), np.full(4, 2.5))
    y = rng.normal(size=6)
    one = linfit.LinearFit(np.array([1.0]), 0.0, 0, 0, 0)
    np.testing.assert_array_equal(linfit.predict(one, y[:, None]), y)


def test_predict_matches_dot_product(rng):
    X, y = random_problem(rng, 30, 4)
    fit = linfit.fit_elastic_net(X, y)
    want = np.array([sum(b * v for b, v in zip(fit.beta, row)) + fit.intercept for row in X])
    np.testing.assert_allclose(linfit.predict(fit, X), want, atol=1e-12)


def test_predict_dimension_mismatch(rng):
    fit = linfit.LinearFit(np.zeros(3), 0.0, 0, 0, 0)
    with pytest.raises(InputError):
        linfit.predict(fit, np.zeros((2, 2)))


def test_rmse_examples():
    assert linfit.rmse([1, 2], [1, 2]) == 0
    assert linfit.rmse([3, 4], [0, 0]) == pytest.approx(np.sqrt(12.5))
    assert linfit.rmse([-2.5], [0]) == 2.5


# -- cross-validation ------------------------------------------------------------------

def test_cv_exact_column_is_zero(rng):
    y = rng.normal(size=20)
    assert linfit.kfold_cv_rmse(y[:, None], y, 5, 0, 0, rng=rng) == pytest.approx(0, abs=1e-10)


def test_leave_one_out_matches_hand_oracle():
    x = np.array([1.0, 2.0, 3.0, 4.0, 6.0])
    y = np.array([1.2, 1.9, 3.2, 3.8, 6.5])
    folds = np.arange(5)
    got = linfit.kfold_cv_rmse(x[:, None], y, folds=folds, lambda1=0, lambda2=0)
    errs = []
    for i in range(5):
        keep = np.arange(5) != i
        slope, icpt = np.polyfit(x[keep], y[keep], 1)
        errs.append(abs(slope * x[i] + icpt - y[i]))
    assert got == pytest.approx(np.mean(errs), abs=1e-9)


def test_cv_seed_determinism(rng):
    X, y = random_problem(rng, 30, 3)
    a = linfit.kfold_cv_rmse(X, y, rng=np.random.default_rng(4))
    b = linfit.kfold_cv_rmse(X, y, rng=np.random.default_rng(4))
    assert a == b


def test_cv_too_few_rows(rng):
    with pytest.raises(InputError):
        linfit.kfold_cv_rmse(np.ones((3, 1)), np.ones(3), 5, rng=rng)


def test_folds_are_balanced(rng):
    folds = linfit.make_folds(139, 5, rng)
    counts = np.bincount(folds)
    assert counts.sum() == 139 and counts.max() - counts.min() <= 1
