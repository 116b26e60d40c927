import numpy as np
import pytest

from bregriesz.verify import (MANIFEST, OracleCheck, check_dual_bruteforce, check_identities,
                              checks_to_csv, dual_feasible)


def test_dual_bruteforce_exact_sq():
    check = check_dual_bruteforce("SQ", 0.0, n=10, seed=0)
    assert check.statistic <= 1e-6


@pytest.mark.parametrize("functional", ["ATE", "CovariateShift"])
def test_dual_bruteforce_penalized_ukl(functional):
    assert check_dual_bruteforce("UKL", 0.05, n=20, seed=3, functional=functional).passed


def test_dual_feasibility_screen():
    # Whole-line losses always match moments; this half-line instance cannot.
    assert dual_feasible("SQ", 20, 0, "CovariateShift")
    assert not dual_feasible("UKL", 20, 0, "CovariateShift")
    assert dual_feasible("UKL", 30, 0, "CovariateShift")


def test_dual_with_slack_constraints_is_unconstrained_minimizer():
    # With a huge budget every constraint is slack: alpha sits at argmin g = C = 0 for SQ.
    check = check_dual_bruteforce("SQ", 1e6, n=10, seed=0, functional="CovariateShift")
    assert check.passed


def test_identities_pass():
    checks = check_identities(1)
    assert [c.name for c in checks] == list(MANIFEST)[2:]
    for c in checks:
        assert c.passed, c


def test_check_csv():
    text = checks_to_csv([OracleCheck("gradient", 1e-9, 1e-6, "x"),
                          OracleCheck("gradient", np.inf, 1e-6, "y")])
    assert text.splitlines()[1:] == ["gradient,x,1e-09,1e-06,true",
                                     "gradient,y,inf,1e-06,false"]
