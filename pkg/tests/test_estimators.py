import numpy as np
import pytest

from bregriesz.data import GENERIC, TREATMENT_FIRST, Dataset, gen_covariate_shift, gen_synthetic_ate
from bregriesz.errors import ConfigError, DegenerateFluctuationError, FoldError
from bregriesz.estimators import (OutcomeConfig, aipw_estimate, crossfit_estimate,
                                  crossfit_estimates, dm_estimate, fit_outcome, ipw_estimate,
                                  neyman_error, reports_to_csv, score_set, tmle_estimate,
                                  tmle_update)
from bregriesz.fit import FitConfig, ModelSpec, OptimizerConfig, fit_riesz
from bregriesz.functionals import Functional
from bregriesz.links import TREATMENT_SIGN, canonical_pair
from bregriesz.losses import LossSpec
from bregriesz.models import POLYNOMIAL, BasisSpec, basis_eval, fit_least_squares

ATE = Functional("ATE")
CS = Functional("CovariateShift")
SPLIT = BasisSpec(POLYNOMIAL, 1, treatment_split=True)
SQ = LossSpec("SQ")
SQ_FIT = FitConfig(SQ, canonical_pair(SQ, TREATMENT_SIGN), ModelSpec(basis=SPLIT))
OUTCOME = OutcomeConfig(basis=BasisSpec(POLYNOMIAL, 2, treatment_split=True))


def zero(X):
    return np.zeros(len(X))


def half_propensity(X):
    return 2 * X[:, 0] - 2 * (1 - X[:, 0])


def test_dm_constant_contrast():
    data, _ = gen_synthetic_ate(0, 50)
    rep = dm_estimate(data, lambda X: 5 * X[:, 0], ATE)
    assert rep.theta == 5.0 and rep.se == 0.0
    assert dm_estimate(data, zero, ATE).theta == 0.0


def test_dm_with_true_regression():
    data, oracle = gen_synthetic_ate(1, 20000)
    assert abs(dm_estimate(data, oracle.outcome_regression, ATE).theta - 5.0) <= 0.1


def test_ipw_hand_example(two_unit_ate):
    assert ipw_estimate(two_unit_ate, half_propensity, ATE).theta == 2.0
    assert ipw_estimate(two_unit_ate, zero, ATE).theta == 0.0


def test_ipw_constant_outcome_balanced_arms():
    X = np.array([[1.0, 0.1], [1.0, 0.2], [0.0, 0.3], [0.0, 0.4]])
    data = Dataset(X, np.full(4, 7.0), TREATMENT_FIRST)
    assert ipw_estimate(data, half_propensity, ATE).theta == 0.0


def test_aipw_reductions():
    data, oracle = gen_synthetic_ate(2, 200)
    exact = Dataset(data.X, oracle.outcome_regression(data.X), TREATMENT_FIRST)
    dm = dm_estimate(exact, oracle.outcome_regression, ATE).theta
    assert aipw_estimate(exact, oracle.representer, oracle.outcome_regression,
                         ATE).theta == pytest.approx(dm, abs=1e-12)
    gamma = fit_least_squares(SPLIT, data)
    assert aipw_estimate(data, zero, gamma, ATE).theta == pytest.approx(
        dm_estimate(data, gamma, ATE).theta, abs=1e-12)


def test_aipw_equals_ipw_for_balanced_fit():
    data, _ = gen_synthetic_ate(3, 500)
    cfg = FitConfig(SQ, canonical_pair(SQ, TREATMENT_SIGN), ModelSpec(basis=SPLIT),
                    optimizer=OptimizerConfig(grad_tol=1e-10))
    fit = fit_riesz(cfg, data, ATE)
    gamma = fit_least_squares(SPLIT, data)
    gap = aipw_estimate(data, fit.model, gamma, ATE).theta - ipw_estimate(data, fit.model,
                                                                          ATE).theta
    assert abs(gap) <= 1e-8


def test_tmle_hand_example():
    data = Dataset(np.zeros((3, 1)), np.array([1.0, 2.0, 3.0]), GENERIC, np.zeros((2, 1)))
    one = lambda X: np.ones(len(X))
    rep = tmle_estimate(data, one, zero, CS)
    assert rep.extra["epsilon"] == pytest.approx(2.0)
    assert rep.theta == pytest.approx(2.0)


def test_tmle_no_update_when_score_is_solved():
    data, oracle = gen_synthetic_ate(0, 100)
    gamma = fit_least_squares(SPLIT, data)
    arms = lambda X: basis_eval(SPLIT, X)[:, 1]  # treated-arm covariate, inside the span
    rep = tmle_estimate(data, arms, gamma, ATE)
    assert abs(rep.extra["epsilon"]) <= 1e-10
    assert rep.theta == pytest.approx(dm_estimate(data, gamma, ATE).theta, abs=1e-8)


@pytest.mark.parametrize("seed", range(5))
def test_tmle_zeroes_weighted_residual(seed):
    data, oracle = gen_synthetic_ate(seed, 300)
    rng = np.random.default_rng(seed)
    coef = rng.standard_normal(4)
    alpha = lambda X: half_propensity(X) * np.exp(0.3 * X[:, 1:] @ coef[1:])
    gamma0 = lambda X: X @ coef
    gamma1, _ = tmle_update(data, alpha, gamma0, ATE)
    resid = alpha(data.X) @ (data.y - gamma1(data.X))
    assert abs(resid) <= 1e-10 * max(1.0, np.abs(alpha(data.X) * data.y).sum())


def test_tmle_degenerate():
    data, _ = gen_synthetic_ate(0, 20)
    with pytest.raises(DegenerateFluctuationError):
        tmle_estimate(data, zero, zero, ATE)


def test_neyman_error_oracle_envelope():
    data, oracle = gen_synthetic_ate(4, 20000)
    corr = oracle.representer(data.X) * (data.y - oracle.outcome_regression(data.X))
    err = neyman_error(data, oracle.representer, oracle.outcome_regression,
                       oracle.outcome_regression, ATE)
    assert err == pytest.approx(corr.mean(), abs=1e-12)
    assert abs(err) <= 3 * corr.std() / np.sqrt(data.n)


def test_neyman_error_noiseless_is_zero():
    data, oracle = gen_synthetic_ate(5, 100)
    exact = Dataset(data.X, oracle.outcome_regression(data.X), TREATMENT_FIRST)
    assert neyman_error(exact, oracle.representer, oracle.outcome_regression,
                        oracle.outcome_regression, ATE) == pytest.approx(0.0, abs=1e-12)


def test_neyman_error_cancels_under_balance():
    base, _ = gen_synthetic_ate(6, 600)
    rng = np.random.default_rng(6)
    rho = rng.standard_normal(SPLIT.size(base.dim))
    gamma0 = lambda X: basis_eval(SPLIT, X) @ rho
    noise = rng.standard_normal(base.n)
    data = Dataset(base.X, gamma0(base.X) + noise, TREATMENT_FIRST)
    cfg = FitConfig(SQ, canonical_pair(SQ, TREATMENT_SIGN), ModelSpec(basis=SPLIT),
                    optimizer=OptimizerConfig(grad_tol=1e-10))
    alpha = fit_riesz(cfg, data, ATE).model
    shift = rng.standard_normal(rho.size)
    gamma_hat = lambda X: gamma0(X) + basis_eval(SPLIT, X) @ shift
    err = neyman_error(data, alpha, gamma_hat, gamma0, ATE)
    assert err == pytest.approx(np.mean(alpha(data.X) * noise), abs=1e-8)


def test_score_set_mean_is_aipw():
    data, _ = gen_synthetic_ate(7, 100)
    gamma = fit_least_squares(SPLIT, data)
    psi = score_set(data, half_propensity, gamma, ATE).psi
    assert psi.mean() == pytest.approx(aipw_estimate(data, half_propensity, gamma, ATE).theta)


def test_crossfit_desk_scale():
    data, _ = gen_synthetic_ate(1, 3000)
    rep = crossfit_estimate(data, SQ_FIT, OUTCOME, ATE, k=2)
    assert np.isfinite(rep.theta) and rep.ci_high - rep.ci_low < 1.0
    again = crossfit_estimate(data, SQ_FIT, OUTCOME, ATE, k=2)
    assert rep == again


def test_crossfit_leave_one_out():
    data, _ = gen_synthetic_ate(2, 20)
    fit = FitConfig(SQ, canonical_pair(SQ, TREATMENT_SIGN),
                    ModelSpec(basis=BasisSpec(POLYNOMIAL, 0, treatment_split=True)))
    out = OutcomeConfig(basis=BasisSpec(POLYNOMIAL, 0, treatment_split=True))
    reps = crossfit_estimates(data, fit, out, ATE, k=20)
    assert all(np.isfinite(r.theta) and np.isfinite(r.se) for r in reps)


def test_crossfit_covariate_shift():
    data, oracle = gen_covariate_shift(0, 2000, 2000, shift=0.2)
    sq1 = LossSpec("SQ", c=1.0)
    fit = FitConfig(sq1, canonical_pair(sq1), ModelSpec(basis=BasisSpec(POLYNOMIAL, 1)))
    out = OutcomeConfig(basis=BasisSpec(POLYNOMIAL, 2))
    rep = crossfit_estimate(data, fit, out, CS, k=2)
    assert rep.covers(oracle.theta_true) or abs(rep.theta - oracle.theta_true) < 0.2


def test_crossfit_wraps_fold_errors():
    data, _ = gen_synthetic_ate(0, 40)

    def broken(train):
        raise RuntimeError("boom")

    with pytest.raises(FoldError) as info:
        crossfit_estimates(data, broken, OUTCOME, ATE, k=2)
    assert info.value.fold == 0


def test_crossfit_needs_two_folds():
    data, _ = gen_synthetic_ate(0, 40)
    with pytest.raises(ConfigError):
        crossfit_estimate(data, SQ_FIT, OUTCOME, ATE, k=1)


@pytest.mark.parametrize("cfg", [OutcomeConfig("kernel", n_centers=30, ridge=1e-3),
                                 OutcomeConfig("mlp", hidden=(8,), ridge=1e-3, max_iters=200)],
                         ids=["kernel", "mlp"])
def test_outcome_learners_fit(cfg):
    data, oracle = gen_synthetic_ate(0, 300)
    gamma = fit_outcome(cfg, data, 0)
    truth = oracle.outcome_regression(data.X)
    assert np.mean((gamma(data.X) - truth) ** 2) < np.var(truth)
    assert OutcomeConfig.from_dict(cfg.to_dict()) == cfg


def test_reports_csv():
    data, _ = gen_synthetic_ate(0, 50)
    text = reports_to_csv([dm_estimate(data, lambda X: 5 * X[:, 0], ATE)])
    assert text.splitlines() == ["method,theta,se,ci_low,ci_high,n,folds",
                                 "DM,5.0,0.0,5.0,5.0,50,1"]
