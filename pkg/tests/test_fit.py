import numpy as np
import pytest

from bregriesz.balancing import balance_residuals
from bregriesz.data import TREATMENT_FIRST, Dataset, gen_covariate_shift, gen_synthetic_ate
from bregriesz.errors import ConfigError, InitializationError
from bregriesz.fit import (FitConfig, ModelSpec, OptimizerConfig, Penalty, empirical_bregman,
                           empirical_bregman_grad, fit_propensity_mle, fit_riesz,
                           nn_corrected_objective, penalized_objective)
from bregriesz.functionals import Functional
from bregriesz.links import RAW, TREATMENT_SIGN, LinkSpec, canonical_pair
from bregriesz.losses import LossSpec
from bregriesz.models import INDICATOR, POLYNOMIAL, BasisSpec, LinearModel

ATE = Functional("ATE")
CS = Functional("CovariateShift")
SQ = LossSpec("SQ")
TREATED = BasisSpec(INDICATOR, cells=[{"lower": [0.5, None]}])


def raw_config(model):
    return FitConfig(SQ, LinkSpec(RAW), model)


def test_constant_representer_objective(two_unit_ate):
    model = LinearModel(BasisSpec(POLYNOMIAL, 0), [1.7])
    assert empirical_bregman(raw_config(model), two_unit_ate, ATE) == pytest.approx(1.7**2)


@pytest.mark.parametrize("beta", [-1.0, 0.5, 2.0, 3.5])
def test_treatment_indicator_objective(two_unit_ate, beta):
    model = LinearModel(TREATED, [beta])
    value = empirical_bregman(raw_config(model), two_unit_ate, ATE)
    assert value == pytest.approx(beta**2 / 2 - 2 * beta)


def test_gradient_vanishes_at_inverse_propensity(two_unit_ate):
    model = LinearModel(TREATED, [2.0])
    assert np.abs(empirical_bregman_grad(raw_config(model), two_unit_ate, ATE)).max() <= 1e-10
    fit = fit_riesz(raw_config(LinearModel(TREATED, [0.0])), two_unit_ate, ATE)
    assert fit.params[0] == pytest.approx(2.0, abs=1e-10)


def test_single_unit_constant_gradient():
    data = Dataset(np.array([[1.0, 0.0]]), np.array([0.0]), TREATMENT_FIRST)
    model = LinearModel(BasisSpec(POLYNOMIAL, 0), [0.8])
    assert empirical_bregman_grad(raw_config(model), data, ATE)[0] == pytest.approx(1.6)


def test_squared_loss_is_lsif_up_to_a_constant():
    data, _ = gen_covariate_shift(0, 50, 40, dim=2)
    basis = BasisSpec(POLYNOMIAL, 1)
    loss = LossSpec("SQ", c=1.0)
    rng = np.random.default_rng(0)

    def lsif(model):
        return -2 * model(data.target).mean() + np.mean(model(data.X) ** 2)

    diffs = []
    for _ in range(5):
        model = LinearModel(basis, rng.standard_normal(3))
        cfg = FitConfig(loss, LinkSpec(RAW), model)
        diffs.append(empirical_bregman(cfg, data, CS) - lsif(model))
    assert np.ptp(diffs) <= 1e-12


def test_general_and_simplified_forms_differ_by_constant():
    data, _ = gen_synthetic_ate(0, 60)
    basis = BasisSpec(POLYNOMIAL, 1)
    rng = np.random.default_rng(1)
    diffs = []
    for _ in range(4):
        model = LinearModel(basis, rng.standard_normal(5))
        cfg = raw_config(model)
        diffs.append(empirical_bregman(cfg, data, ATE, form="general")
                     - empirical_bregman(cfg, data, ATE, form="simplified"))
    assert np.ptp(diffs) <= 1e-10


def _canonical(loss, basis, lam=0.0, order=2, rule=TREATMENT_SIGN, **opt):
    return FitConfig(loss, canonical_pair(loss, rule), ModelSpec(basis=basis),
                     Penalty(order, lam), OptimizerConfig(**opt))


def test_exact_fit_balances():
    data, _ = gen_synthetic_ate(1, 500)
    cfg = _canonical(SQ, BasisSpec(POLYNOMIAL, 1))
    fit = fit_riesz(cfg, data, ATE)
    assert fit.converged
    assert np.abs(balance_residuals(fit, data, ATE).residuals).max() <= 1e-6


def test_lasso_fit_respects_bound():
    data, _ = gen_synthetic_ate(1, 500)
    fit = fit_riesz(_canonical(SQ, BasisSpec(POLYNOMIAL, 1), 0.1, 1), data, ATE)
    assert fit.converged
    assert np.abs(balance_residuals(fit, data, ATE).residuals).max() <= 0.1 + 1e-6


def test_penalized_objective_adds_penalty():
    data, _ = gen_synthetic_ate(1, 100)
    model = LinearModel(BasisSpec(POLYNOMIAL, 1), [0.3, -0.2, 0.1, 0.0, 0.0])
    for order, pen in ((1, 0.6), (2, 0.5 * 0.14)):
        cfg = FitConfig(SQ, LinkSpec(RAW), model, Penalty(order, 1.0))
        assert penalized_objective(cfg, data, ATE) == pytest.approx(
            empirical_bregman(cfg, data, ATE) + pen)


def test_ukl_fit_stays_in_domain():
    data, _ = gen_synthetic_ate(3, 400)
    loss = LossSpec("UKL", c=1.0)
    fit = fit_riesz(_canonical(loss, BasisSpec(POLYNOMIAL, 1, treatment_split=True)), data, ATE)
    alpha = fit.model(data.X)
    d = data.treatment
    assert fit.converged
    assert np.all(alpha[d == 1] > 1) and np.all(alpha[d == 0] < -1)


def test_infeasible_start_raises():
    data, _ = gen_synthetic_ate(0, 50)
    cfg = FitConfig(LossSpec("UKL", c=1.0), LinkSpec(RAW),
                    ModelSpec(basis=BasisSpec(POLYNOMIAL, 1)))
    with pytest.raises(InitializationError):
        fit_riesz(cfg, data, ATE)


def test_mlp_and_kernel_fits_run():
    data, _ = gen_covariate_shift(0, 200, 200, dim=2, shift=0.3)
    sq1 = LossSpec("SQ", c=1.0)
    link = canonical_pair(sq1)
    for spec, pen in ((ModelSpec("mlp", hidden=(8,)), Penalty(2, 1e-3)),
                      (ModelSpec("kernel", n_centers=20), Penalty("rkhs", 1e-2))):
        fit = fit_riesz(FitConfig(sq1, link, spec, pen, OptimizerConfig(max_iters=300)),
                        data, CS)
        alpha = fit.model(data.X)
        assert np.all(np.isfinite(alpha))
        assert abs(alpha.mean() - 1.0) < 0.5


def test_nn_correction_is_inactive_when_component_is_nonnegative():
    data, _ = gen_covariate_shift(1, 100, 100, dim=2, shift=0.0)
    model = LinearModel(BasisSpec(POLYNOMIAL, 1), [1.0, 0.1, -0.1])
    cfg = FitConfig(SQ, canonical_pair(SQ), model, nn_correction=True)
    assert nn_corrected_objective(cfg, data, CS) == pytest.approx(
        empirical_bregman(cfg, data, CS, form="general"), abs=1e-12)
    zero = FitConfig(SQ, canonical_pair(SQ), model, nn_correction=True, nn_constant=0.0)
    assert nn_corrected_objective(zero, data, CS) == pytest.approx(
        empirical_bregman(cfg, data, CS, form="general"), abs=1e-12)


def test_nn_correction_tames_flexible_fit():
    data, _ = gen_covariate_shift(2, 100, 100, dim=1, shift=2.0)
    basis = BasisSpec(POLYNOMIAL, 4)
    # The clamped objective is not smooth, so the corrected fit runs to the cap.
    opt = OptimizerConfig(max_iters=500)
    plain = fit_riesz(FitConfig(SQ, canonical_pair(SQ), ModelSpec(basis=basis),
                                Penalty(2, 1e-6), opt), data, CS)
    corrected = fit_riesz(FitConfig(SQ, canonical_pair(SQ), ModelSpec(basis=basis),
                                    Penalty(2, 1e-6), opt, nn_correction=True,
                                    nn_constant=0.05), data, CS)
    assert corrected.model(data.target).max() < plain.model(data.target).max()


def test_propensity_mle_wraps_inverse_propensity():
    data, oracle = gen_synthetic_ate(0, 2000)
    fit = fit_propensity_mle(BasisSpec(POLYNOMIAL, 2, on_z_only=True), data)
    assert fit.converged
    alpha = fit.model(data.X)
    d = data.treatment
    assert np.all(alpha[d == 1] > 1) and np.all(alpha[d == 0] < -1)


def test_config_round_trip_and_validation():
    cfg = _canonical(LossSpec("UKL", c=1.0), BasisSpec(POLYNOMIAL, 2, on_z_only=True), 0.1, 1)
    assert FitConfig.from_dict(cfg.to_dict()) == cfg
    with pytest.raises(ConfigError):
        Penalty(2, -0.1)
    with pytest.raises(ConfigError):
        FitConfig(SQ, LinkSpec(RAW), ModelSpec("mlp"), Penalty(1, 0.1))
    with pytest.raises(ConfigError):
        FitConfig(SQ, LinkSpec(RAW), ModelSpec(basis=BasisSpec(POLYNOMIAL, 1)),
                  Penalty("rkhs", 0.1))
