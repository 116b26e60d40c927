import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bregriesz.data import Dataset
from bregriesz.errors import ConfigError, SingularSystemError
from bregriesz.models import (GAUSSIAN_RBF, INDICATOR, POLYNOMIAL, RAW_PLUS_INTERCEPT,
                              BasisSpec, KernelModel, LinearModel, MlpModel, basis_eval,
                              basis_partial, fit_least_squares, model_from_dict,
                              model_param_grad, model_to_dict)


def test_degree_one_polynomial():
    assert np.array_equal(basis_eval(BasisSpec(POLYNOMIAL, 1), np.array([2.0, 3.0])),
                          [1.0, 2.0, 3.0])
    assert np.array_equal(basis_partial(BasisSpec(POLYNOMIAL, 1), np.array([[5.0, -1.0]]), 0),
                          [[0.0, 1.0, 0.0]])


def test_degree_two_partial_of_square():
    assert np.array_equal(basis_partial(BasisSpec(POLYNOMIAL, 2), np.array([[2.0]]), 0),
                          [[0.0, 1.0, 4.0]])


def test_rbf_is_one_at_its_center():
    x = np.array([[0.3, -1.0]])
    assert basis_eval(BasisSpec(GAUSSIAN_RBF, centers=x, bandwidth=1.0), x)[0, 0] == 1.0


def test_indicator_cells():
    basis = BasisSpec(INDICATOR, cells=[{"upper": [0.0]}, {"lower": [0.0]}])
    assert np.array_equal(basis_eval(basis, np.array([[1.5]])), [[0.0, 1.0]])


def test_treatment_split_layout():
    basis = BasisSpec(POLYNOMIAL, 1, treatment_split=True)
    Phi = basis_eval(basis, np.array([[1.0, 2.0], [0.0, 3.0]]))
    assert np.array_equal(Phi, [[1.0, 2.0, 0.0, 0.0], [0.0, 0.0, 1.0, 3.0]])
    assert basis.size(2) == 4


@pytest.mark.parametrize("basis", [
    BasisSpec(POLYNOMIAL, 3),
    BasisSpec(RAW_PLUS_INTERCEPT),
    BasisSpec(GAUSSIAN_RBF, centers=np.array([[0.0, 1.0, 0.5], [1.0, -1.0, 0.0]]),
              bandwidth=0.7),
    BasisSpec(POLYNOMIAL, 2, on_z_only=True),
], ids=["poly3", "raw", "rbf", "poly2-z"])
def test_partials_match_finite_differences(basis):
    x = np.array([[0.4, -0.3, 1.1]])
    for j in range(3):
        h = 1e-6
        up, dn = x.copy(), x.copy()
        up[0, j] += h
        dn[0, j] -= h
        fd = (basis_eval(basis, up) - basis_eval(basis, dn)) / (2 * h)
        assert np.allclose(basis_partial(basis, x, j), fd, rtol=1e-6, atol=1e-8)


def test_linear_model_value_and_gradient():
    basis = BasisSpec(POLYNOMIAL, 1)
    model = LinearModel(basis, [1.0, 0.0, 0.0])
    x = np.array([[0.2, 4.0]])
    assert model(x)[0] == 1.0
    assert np.array_equal(model_param_grad(model, x), basis_eval(basis, x))


def test_zero_mlp_outputs_zero():
    model = MlpModel.zeros(3, (5, 4))
    assert np.all(model.value(np.random.default_rng(0).standard_normal((7, 3))) == 0.0)


def test_mlp_parameter_jacobian():
    rng = np.random.default_rng(1)
    X = rng.standard_normal((6, 3))
    for seed in range(20):
        model = MlpModel.init(3, (5,), seed)
        J = model.jacobian(X)
        theta = model.params
        fd = np.empty_like(J)
        for k in range(theta.size):
            e = np.zeros_like(theta)
            e[k] = 1e-6
            fd[:, k] = (model.with_params(theta + e).value(X)
                        - model.with_params(theta - e).value(X)) / 2e-6
        assert np.linalg.norm(J - fd) <= 1e-4 * max(np.linalg.norm(J), 1.0)


def test_mlp_input_partial():
    model = MlpModel.init(2, (8,), 3)
    X = np.array([[0.3, -0.2]])
    for j in range(2):
        up, dn = X.copy(), X.copy()
        up[0, j] += 1e-6
        dn[0, j] -= 1e-6
        fd = (model.value(up) - model.value(dn)) / 2e-6
        assert model.partial(X, j) == pytest.approx(fd, rel=1e-5)


def test_least_squares_interpolates_two_points():
    data = Dataset(np.array([[1.0], [3.0]]), np.array([2.0, 4.0]))
    model = fit_least_squares(BasisSpec(POLYNOMIAL, 1), data)
    assert np.allclose(model(data.X), data.y, atol=1e-12)


def test_huge_ridge_shrinks_to_zero():
    rng = np.random.default_rng(0)
    data = Dataset(rng.standard_normal((50, 4)), rng.standard_normal(50))
    assert np.linalg.norm(fit_least_squares(BasisSpec(RAW_PLUS_INTERCEPT), data, 1e12).beta) < 1e-6


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_least_squares_matches_pseudoinverse(seed):
    rng = np.random.default_rng(seed)
    data = Dataset(rng.standard_normal((50, 4)), rng.standard_normal(50))
    basis = BasisSpec(RAW_PLUS_INTERCEPT)
    ref = np.linalg.pinv(basis_eval(basis, data.X)) @ data.y
    assert np.allclose(fit_least_squares(basis, data).beta, ref, atol=1e-8)


def test_rank_deficient_needs_ridge():
    data = Dataset(np.ones((5, 1)), np.arange(5.0))
    with pytest.raises(SingularSystemError):
        fit_least_squares(BasisSpec(RAW_PLUS_INTERCEPT), data)
    fit_least_squares(BasisSpec(RAW_PLUS_INTERCEPT), data, ridge=1e-3)


def test_kernel_ridge_fit_and_serialization():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((60, 2))
    data = Dataset(X, np.sin(X[:, 0]))
    model = KernelModel.from_data(X, n_centers=20, seed=0).fit_ridge(data, 1e-4)
    assert np.mean((model(X) - data.y) ** 2) < 0.01
    back = model_from_dict(model_to_dict(model))
    assert np.allclose(back(X), model(X))


def test_model_round_trip():
    for model in (LinearModel(BasisSpec(POLYNOMIAL, 2), np.arange(6.0)),
                  MlpModel.init(2, (3,), 0)):
        X = np.array([[0.1, 0.2], [1.0, -1.0]])
        assert np.allclose(model_from_dict(model_to_dict(model))(X), model(X))


def test_invalid_bases():
    with pytest.raises(ConfigError):
        BasisSpec("Spline")
    with pytest.raises(ConfigError):
        BasisSpec(POLYNOMIAL, -1)
    with pytest.raises(ConfigError):
        BasisSpec(GAUSSIAN_RBF)
    with pytest.raises(ConfigError):
        BasisSpec(INDICATOR)
