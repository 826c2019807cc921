import math
import random
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from asep.core import (
    ContourSpec, Permutation, circle, contour_grid, epsilon, f_weight, make_params,
    q_pochhammer, tau_binomial, tau_binomial_product,
)


def test_params_derived_fields():
    p = make_params(0.3)
    assert p.q == pytest.approx(0.7)
    assert p.tau == pytest.approx(3 / 7)
    assert p.gamma == pytest.approx(0.4)
    p0 = make_params(0)
    assert (p0.q, p0.tau, p0.gamma) == (1, 0, 1)
    half = make_params(0.5)
    assert half.tau == 1 and half.gamma == 0


@pytest.mark.parametrize("bad", [-0.1, 1.5])
def test_params_range(bad):
    with pytest.raises(ValueError):
        make_params(bad)


def test_epsilon():
    assert abs(epsilon(1.0, make_params(0.3))) < 1e-15
    assert epsilon(2.0, make_params(0.5)) == pytest.approx(0.25)
    xi = 0.3 + 0.4j
    assert epsilon(xi, make_params(1)) == pytest.approx(1 / xi - 1)
    with pytest.raises(ZeroDivisionError):
        epsilon(0, make_params(0.3))


def test_f_weight_specialisations():
    prm = make_params(0.3)
    z = 0.7 - 0.2j
    assert f_weight(1, z, prm) == pytest.approx(prm.q * (z - 1))
    assert f_weight(z, 1, prm) == pytest.approx(prm.p * (1 - z))
    assert f_weight(z, z, make_params(0.5)) == pytest.approx((z - 1) ** 2 / 2)


def test_f_weight_exact():
    prm = make_params(Fraction(1, 3))
    assert f_weight(Fraction(1, 2), Fraction(2, 5), prm) == Fraction(1, 3) + Fraction(2, 3) * Fraction(1, 5) - Fraction(1, 2)


def test_tau_binomial_examples():
    t = Fraction(2, 7)
    assert tau_binomial(3, 1, t) == 1 + t + t * t
    assert tau_binomial(5, 0, t) == 1
    assert tau_binomial(4, 2, 1) == 6
    assert tau_binomial(3, 5, t) == 0
    assert tau_binomial(3, -1, t) == 0


def test_tau_binomial_symmetry_and_pascal():
    rng = random.Random(1)
    for _ in range(5):
        t = Fraction(rng.randint(-9, 9), rng.randint(1, 9))
        for n in range(11):
            for k in range(n + 1):
                assert tau_binomial(n, k, t) == tau_binomial(n, n - k, t)
                if 1 <= k and n >= 1:
                    assert tau_binomial(n, k, t) == t**k * tau_binomial(n - 1, k, t) + tau_binomial(n - 1, k - 1, t)
                assert tau_binomial_product(n, k, t) == tau_binomial(n, k, t) or t in (1, -1)


def test_q_pochhammer_matches_product():
    direct = np.prod([1 - 0.5 * 0.3**k for k in range(80)])
    assert q_pochhammer(0.5, 0.3) == pytest.approx(direct, rel=1e-15)


def test_contour_grid_residues():
    g = circle(1.0, 16)
    assert abs(g.integrate(1 / g.nodes) - 1) < 1e-14
    assert abs(g.integrate(np.ones(16))) < 1e-14
    spec = ContourSpec(center=0.0, radius=0.8, node_count=32)
    g = contour_grid(spec)
    for x in range(-3, 4):
        for y in range(-3, 4):
            val = g.integrate(g.nodes ** (x - y - 1))
            assert abs(val - (x == y)) < 1e-13


def test_quadrature_exact_for_low_powers():
    m = 24
    g = circle(1.3, m, center=0.0)
    for k in range(-m // 2 + 1, m // 2):
        expect = 1.0 if k == -1 else 0.0
        assert abs(g.integrate(g.nodes**k) - expect) < 1e-13 * max(1, 1.3 ** abs(k))


def test_clockwise_orientation_flips_sign():
    g = circle(0.5, 8, center=1.0, orientation=-1)
    assert g.integrate(1 / (g.nodes - 1)) == pytest.approx(-1)


@settings(max_examples=40, deadline=None)
@given(st.permutations(range(1, 9)), st.permutations(range(1, 9)))
def test_sign_multiplicative(a, b):
    s, p = Permutation(a), Permutation(b)
    assert s.compose(p).sign == s.sign * p.sign


def test_permutation_basics():
    ident = Permutation.identity(4)
    assert ident.is_identity() and ident.sign == 1
    s = Permutation((2, 1, 3))
    assert s.sign == -1
    assert s.inverse().compose(s).is_identity()
    assert len(s.inversions()) == 1
