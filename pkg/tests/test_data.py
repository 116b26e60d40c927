import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bregriesz.data import (GENERIC, TREATMENT_FIRST, Dataset, gen_covariate_shift,
                            gen_synthetic_ate, read_csv, split_folds, write_csv)
from bregriesz.errors import InvalidSizeError, LayoutError


def test_synthetic_ate_shape_and_binary_treatment():
    data, oracle = gen_synthetic_ate(1, 3000)
    assert data.X.shape == (3000, 4)
    assert data.layout == TREATMENT_FIRST
    assert set(np.unique(data.X[:, 0])) <= {0.0, 1.0}
    assert oracle.theta_true == 5.0


def test_synthetic_ate_is_deterministic():
    a, _ = gen_synthetic_ate(1, 100)
    b, _ = gen_synthetic_ate(1, 100)
    assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)


def test_synthetic_ate_oracle_contrast_is_five():
    data, oracle = gen_synthetic_ate(2, 50000)
    X1, X0 = data.X.copy(), data.X.copy()
    X1[:, 0], X0[:, 0] = 1.0, 0.0
    contrast = oracle.outcome_regression(X1) - oracle.outcome_regression(X0)
    assert abs(contrast.mean() - 5.0) <= 0.1


def test_design_seed_fixes_coefficients_only():
    a, oa = gen_synthetic_ate(1, 50, design_seed=2)
    b, ob = gen_synthetic_ate(7, 50, design_seed=2)
    assert not np.array_equal(a.X, b.X)
    z = np.random.default_rng(0).standard_normal((5, 3))
    assert np.allclose(oa.propensity(z), ob.propensity(z))


def test_synthetic_ate_rejects_tiny_n():
    with pytest.raises(InvalidSizeError):
        gen_synthetic_ate(0, 3)


def test_covariate_shift_sizes():
    data, _ = gen_covariate_shift(1, 500, 500)
    assert data.target is not None and data.target.shape[0] == 500


def test_covariate_shift_without_shift_has_unit_ratio():
    data, oracle = gen_covariate_shift(1, 100, 100, shift=0.0)
    assert np.allclose(oracle.representer(data.X), 1.0)


def test_covariate_shift_ratio_has_unit_mean():
    data, oracle = gen_covariate_shift(3, 10000, 10000)
    assert abs(oracle.representer(data.X).mean() - 1.0) <= 0.05


@pytest.mark.parametrize("n,k,sizes", [(10, 2, [5, 5]), (10, 3, [3, 3, 4])])
def test_split_folds_sizes(n, k, sizes):
    folds = split_folds(n, k, 0)
    assert sorted(len(ev) for _, ev in folds) == sizes


@settings(max_examples=50, deadline=None)
@given(st.integers(2, 60), st.integers(2, 10), st.integers(0, 2**32))
def test_split_folds_partition(n, k, seed):
    k = min(k, n)
    folds = split_folds(n, k, seed)
    evals = np.concatenate([ev for _, ev in folds])
    assert np.array_equal(np.sort(evals), np.arange(n))
    for tr, ev in folds:
        assert np.intersect1d(tr, ev).size == 0 and tr.size + ev.size == n


def test_split_folds_rejects_bad_k():
    with pytest.raises(InvalidSizeError):
        split_folds(5, 6, 0)


def test_csv_round_trip(tmp_path):
    data, _ = gen_synthetic_ate(0, 30)
    path = tmp_path / "d.csv"
    write_csv(data, path)
    back = read_csv(path)
    assert back.layout == TREATMENT_FIRST
    assert np.array_equal(back.X, data.X) and np.array_equal(back.y, data.y)


def test_csv_round_trip_generic_with_target(tmp_path):
    data, _ = gen_covariate_shift(0, 20, 15, dim=2)
    write_csv(data, tmp_path / "s.csv")
    np.savetxt(tmp_path / "t.csv", data.target, delimiter=",")
    back = read_csv(tmp_path / "s.csv", tmp_path / "t.csv")
    assert back.layout == GENERIC
    assert np.allclose(back.target, data.target)


def test_dataset_validation():
    with pytest.raises(LayoutError):
        Dataset(np.array([[0.5, 1.0]]), np.array([1.0]), TREATMENT_FIRST)
    with pytest.raises(InvalidSizeError):
        Dataset(np.ones((3, 2)), np.ones(2))
    data = Dataset(np.ones((3, 2)), np.ones(3))
    with pytest.raises(LayoutError):
        data.treatment
