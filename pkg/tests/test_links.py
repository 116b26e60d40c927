import numpy as np
import pytest

from bregriesz.errors import ConfigError, DomainError, NoCanonicalPairError
from bregriesz.links import (ALWAYS_POSITIVE, ATE_PROPENSITY_LOGIT, EXPONENTIAL, LINEAR_SQ,
                             LOG_BRANCH, POWER_BRANCH, RAW, TREATMENT_SIGN, LinkSpec,
                             apply_link, branch_selector, canonical_pair, is_canonical,
                             link_deriv, link_deriv2)
from bregriesz.losses import LossSpec, eval_dg

from conftest import central_diff

LINKS = [LinkSpec(RAW), LinkSpec(LINEAR_SQ, 1.0), LinkSpec(LOG_BRANCH, 1.0),
         LinkSpec(POWER_BRANCH, 1.0, 0.5), LinkSpec(POWER_BRANCH, 0.0, 2.0),
         LinkSpec(EXPONENTIAL), LinkSpec(ATE_PROPENSITY_LOGIT)]


def test_linear_sq_link_is_half_index_plus_constant():
    assert apply_link(LinkSpec(LINEAR_SQ, 1.0), 1.0, 3.0) == 2.5


def test_logit_link_at_zero_index():
    link = LinkSpec(ATE_PROPENSITY_LOGIT)
    assert apply_link(link, 1.0, 0.0) == 2.0
    assert apply_link(link, 0.0, 0.0) == -2.0


def test_power_branch_value():
    assert apply_link(LinkSpec(POWER_BRANCH, 1.0, 1.0), 1.0, 2.0) == 3.0


def test_constant_derivatives():
    assert np.all(link_deriv(LinkSpec(RAW), 1.0, np.array([-3.0, 0.0, 5.0])) == 1.0)
    assert link_deriv(LinkSpec(LINEAR_SQ), 0.0, 7.0) == 0.5


@pytest.mark.parametrize("link", LINKS, ids=lambda l: f"{l.kind}-{l.c}-{l.delta}")
@pytest.mark.parametrize("xi", [0.0, 1.0])
def test_derivatives_match_finite_differences(link, xi):
    v = 0.7
    fd1 = central_diff(lambda t: apply_link(link, xi, t), v)
    fd2 = central_diff(lambda t: link_deriv(link, xi, t), v)
    assert link_deriv(link, xi, v) == pytest.approx(fd1, rel=1e-6)
    assert link_deriv2(link, xi, v) == pytest.approx(fd2, rel=1e-6, abs=1e-9)


@pytest.mark.parametrize("loss", [LossSpec("SQ", c=1.0), LossSpec("SQ", c=-0.5),
                                  LossSpec("UKL", c=1.0), LossSpec("UKL"),
                                  LossSpec("BP", c=1.0, delta=0.5),
                                  LossSpec("BP", c=0.0, delta=2.0)],
                         ids=lambda s: f"{s.kind}-{s.c}-{s.delta}")
def test_canonical_composition_is_identity(loss):
    link = canonical_pair(loss, TREATMENT_SIGN)
    assert is_canonical(loss, link)
    # The power link is defined only for |v| < k.
    edge = 0.9 * link.k if link.kind == POWER_BRANCH else 1.5
    v = np.linspace(-edge, edge, 31)
    for xi in (0.0, 1.0):
        alpha = apply_link(link, np.full_like(v, xi), v)
        assert np.allclose(eval_dg(loss, alpha), v, atol=1e-10, rtol=0)


def test_canonical_pair_kinds():
    assert canonical_pair(LossSpec("SQ", c=1.0)) == LinkSpec(LINEAR_SQ, 1.0)
    assert canonical_pair(LossSpec("UKL", c=1.0)).kind == LOG_BRANCH
    assert canonical_pair(LossSpec("BP", c=1.0, delta=0.5)).kind == POWER_BRANCH
    for loss in (LossSpec("BKL", c=1.0), LossSpec("PU")):
        with pytest.raises(NoCanonicalPairError):
            canonical_pair(loss)
    assert not is_canonical(LossSpec("SQ"), LinkSpec(RAW))


def test_branch_values_have_the_branch_sign():
    v = np.linspace(-3, 3, 13)
    for link in (LinkSpec(LOG_BRANCH, 1.0), LinkSpec(ATE_PROPENSITY_LOGIT)):
        assert np.all(apply_link(link, np.ones_like(v), v) > 1.0 - 1e-12)
        assert np.all(apply_link(link, np.zeros_like(v), v) < -1.0 + 1e-12)


def test_power_branch_leaves_domain():
    with pytest.raises(DomainError):
        apply_link(LinkSpec(POWER_BRANCH, 0.0, 1.0), 1.0, -2.0)


def test_branch_selector():
    X = np.array([[1.0, 5.0], [0.0, 2.0]])
    assert np.array_equal(branch_selector(LinkSpec(RAW, branch_rule=TREATMENT_SIGN), X), [1, 0])
    assert np.array_equal(branch_selector(LinkSpec(RAW, branch_rule=ALWAYS_POSITIVE), X), [1, 1])


def test_invalid_links():
    with pytest.raises(ConfigError):
        LinkSpec("Nope")
    with pytest.raises(ConfigError):
        LinkSpec(POWER_BRANCH, delta=0.0)
    with pytest.raises(ConfigError):
        LinkSpec(RAW, branch_rule="Sometimes")
