import numpy as np
import pytest

from emlmc.quadrature import DEGREE5, DEGREE8, gauss_collapsed, monomial_error


@pytest.mark.parametrize("rule", [DEGREE5, DEGREE8])
def test_declared_exactness(rule):
    assert rule.weights.min() > 0
    assert abs(rule.weights.sum() - 1) < 1e-15
    assert np.allclose(rule.points.sum(axis=1), 1)
    assert monomial_error(rule) < 1e-14


def test_degree_is_sharp():
    # one degree beyond the declaration is not integrated exactly
    assert monomial_error(DEGREE5, 6) > 1e-6


def test_collapsed_rule_exactness():
    assert monomial_error(gauss_collapsed(6), 10) < 1e-14
