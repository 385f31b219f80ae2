from __future__ import annotations

import math

import numpy as np
import pytest

from structhinf import BasisSet, parse_expr
from structhinf.errors import DomainError, ParseError

from oracles import central_difference


def test_values_match_hand_evaluation():
    basis = BasisSet(("a1", "a2"), ("1", "a1", "sin(a1)", "cos(a2)", "a2"))
    alpha = np.array([0.3, -0.7])
    expected = [1.0, 0.3, math.sin(0.3), math.cos(-0.7), -0.7]
    np.testing.assert_allclose(basis.values(alpha), expected, rtol=1e-15)


def test_jacobian_matches_hand_derivatives():
    basis = BasisSet(("a1", "a2"), ("1", "a1", "sin(a1)", "cos(a2)", "a2"))
    alpha = np.array([0.3, -0.7])
    expected = np.array([
        [0.0, 0.0],
        [1.0, 0.0],
        [math.cos(0.3), 0.0],
        [0.0, -math.sin(-0.7)],
        [0.0, 1.0],
    ])
    np.testing.assert_allclose(basis.jacobian(alpha), expected, rtol=1e-15,
                               atol=1e-16)


def test_arithmetic_and_powers():
    basis = BasisSet(("m1",), ("m1^2", "1/m1", "2*m1 - 3", "(m1 + 1)^3"))
    a = 0.8
    vals = basis.values([a])
    np.testing.assert_allclose(
        vals, [a ** 2, 1 / a, 2 * a - 3, (a + 1) ** 3], rtol=1e-15)
    jac = basis.jacobian([a])
    np.testing.assert_allclose(
        jac[:, 0], [2 * a, -1 / a ** 2, 2.0, 3 * (a + 1) ** 2], rtol=1e-14)


def test_jacobian_against_finite_differences(rng):
    sources = ("a1*a2 + sin(a1*a2)", "exp(a1/2)*cos(a2)", "(a1 - a2)^3",
               "a1^2*a2^2")
    basis = BasisSet(("a1", "a2"), sources)
    for _ in range(25):
        alpha = rng.uniform(-1.5, 1.5, 2)
        jac = basis.jacobian(alpha)
        for l in range(len(basis)):
            fd = central_difference(
                lambda a, l=l: basis.values(a)[l], alpha, h=1e-6)
            np.testing.assert_allclose(jac[l], fd, rtol=1e-6, atol=1e-8)


def test_deps_track_used_parameters():
    basis = BasisSet(("a1", "a2", "a3"), ("a2", "a1 + a3", "1"))
    assert basis.deps[0] == frozenset({1})
    assert basis.deps[1] == frozenset({0, 2})
    assert basis.deps[2] == frozenset()


def test_parse_errors_carry_position():
    with pytest.raises(ParseError):
        parse_expr("a1 +", ("a1",))
    with pytest.raises(ParseError):
        parse_expr("(a1", ("a1",))
    with pytest.raises(ParseError):
        parse_expr("b7", ("a1",))
    with pytest.raises(ParseError):
        parse_expr("a1 $ 2", ("a1",))


def test_division_by_vanishing_denominator_is_rejected():
    basis = BasisSet(("m1",), ("1/m1",))
    with pytest.raises(DomainError):
        basis.check_box([-1.0], [1.0])
    basis.check_box([0.5], [1.0])


def test_interval_certificate_covers_platoon_basis():
    basis = BasisSet(("m1", "m2", "m3"), ("1", "1/m1", "1/m2", "1/m3"))
    basis.check_box([0.5, 0.5, 0.5], [1.0, 1.0, 1.0])
