from math import factorial

import numpy as np
import pytest

from steklov_lab.modules.errors import ArgumentError
from steklov_lab.modules.quadrature import edge_rule, triangle_rule

REFERENCE = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def monomial_integral(a, b):
    return factorial(a) * factorial(b) / factorial(a + b + 2)


@pytest.mark.parametrize("order", [1, 2, 3, 5, 8, 10])
def test_triangle_rule_is_exact_to_its_degree(order):
    rule = triangle_rule(order)
    assert rule.degree >= order
    points = rule.barycentric @ REFERENCE
    for a in range(rule.degree + 1):
        for b in range(rule.degree + 1 - a):
            value = 0.5 * rule.weights @ (points[:, 0] ** a * points[:, 1] ** b)
            assert value == pytest.approx(monomial_integral(a, b), rel=1e-10, abs=1e-14)


def test_triangle_weights_sum_to_one():
    for order in (1, 2, 4, 7):
        assert triangle_rule(order).weights.sum() == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("n", [1, 2, 4])
def test_edge_rule_is_exact_to_degree_2n_minus_1(n):
    rule = edge_rule(n)
    for p in range(2 * n):
        assert rule.weights @ rule.points**p == pytest.approx(1.0 / (p + 1), rel=1e-12)


def test_invalid_order():
    with pytest.raises(ArgumentError):
        triangle_rule(0)
