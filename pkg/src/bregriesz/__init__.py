"""Riesz representer fitting by Bregman divergence minimization.

The package fits the weighting function of a linear functional (average
treatment effect, average marginal effect, average policy effect, or a
covariate-shift mean) by minimizing an empirical Bregman objective, checks
the covariate-balance conditions of the fit, and feeds the result to
plug-in, weighting, doubly robust and targeted estimators.
"""

from .balancing import (BalanceReport, MatchStructure, balance_residuals,
                        extract_dual_weights, nn_lsif_equivalence, nn_match, nn_matching_ate)
from .data import Dataset, OracleNuisance, gen_covariate_shift, gen_synthetic_ate, read_csv, \
    split_folds, write_csv
from .estimators import (EstimateReport, OutcomeConfig, ScoreSet, aipw_estimate,
                         crossfit_estimate, dm_estimate, ipw_estimate, neyman_error,
                         tmle_estimate)
from .fit import (FitConfig, FitResult, ModelSpec, OptimizerConfig, Penalty, RieszModel,
                  empirical_bregman, fit_propensity_mle, fit_riesz)
from .functionals import Functional, apply_m, evaluation_plan
from .links import LinkSpec, apply_link, canonical_pair
from .losses import LossSpec, bregman_pointwise, eval_dg, eval_g
from .models import BasisSpec, KernelModel, LinearModel, MlpModel

__all__ = [
    "BalanceReport",
    "BasisSpec",
    "Dataset",
    "EstimateReport",
    "FitConfig",
    "FitResult",
    "Functional",
    "KernelModel",
    "LinearModel",
    "LinkSpec",
    "LossSpec",
    "MatchStructure",
    "MlpModel",
    "ModelSpec",
    "OptimizerConfig",
    "OracleNuisance",
    "OutcomeConfig",
    "Penalty",
    "RieszModel",
    "ScoreSet",
    "aipw_estimate",
    "apply_link",
    "apply_m",
    "balance_residuals",
    "bregman_pointwise",
    "canonical_pair",
    "crossfit_estimate",
    "dm_estimate",
    "empirical_bregman",
    "eval_dg",
    "eval_g",
    "evaluation_plan",
    "extract_dual_weights",
    "fit_propensity_mle",
    "fit_riesz",
    "gen_covariate_shift",
    "gen_synthetic_ate",
    "ipw_estimate",
    "neyman_error",
    "nn_lsif_equivalence",
    "nn_match",
    "nn_matching_ate",
    "read_csv",
    "split_folds",
    "tmle_estimate",
    "write_csv",
]

__version__ = "0.1.0"
