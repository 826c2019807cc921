from fractions import Fraction as F

import pytest
from hypothesis import assume, given, settings, strategies as st

from asep.identities import (
    PoleError, bareiss_det, check_cauchy_identity, check_id1, check_id2, check_id3, check_simpler,
    check_step_antisymmetrization, check_tau_binomial_recursion, check_tau_binomial_theorem,
    id3_normalization, id3_times_vandermonde_is_polynomial, random_points, verify_all,
)

rationals = st.fractions(min_value=-4, max_value=4, max_denominator=40)
probs = st.fractions(min_value=F(1, 50), max_value=F(49, 50), max_denominator=50)


def test_id1_hand_point():
    assert check_id1(2, [F(1, 2), F(1, 3)], F(1, 3)).equal
    assert check_id1(1, [F(2, 7)], F(1, 5)).equal


def test_simpler_small_cases():
    xi, p = F(3, 5), F(1, 4)
    rep = check_simpler(1, [xi], p)
    assert rep.equal and rep.rhs == 1 / xi - 1
    assert check_simpler(2, [F(2, 3), F(1, 5)], F(1, 4)).equal


def test_id3_two_by_two_is_one():
    rep = check_id3(2, 2, [F(1, 3), F(-2, 5)], F(2, 7))
    assert rep.lhs == 1 and rep.equal
    assert rep.extra["q_power_m_minus_1_holds"]


def test_id3_empty_lower_set():
    rep = check_id3(3, 1, [F(1, 3), F(-2, 5), F(4, 9)], F(2, 7))
    assert rep.lhs == 1 and rep.equal


def test_id3_printed_normalisations_fail_somewhere():
    # |S|=3, m=2 distinguishes the candidate constants
    rep = check_id3(3, 2, [F(1, 3), F(-2, 5), F(4, 9)], F(2, 7))
    assert rep.equal
    assert not rep.extra["plain_holds"] and not rep.extra["q_power_m_minus_1_holds"]


def test_id2_vanishes_when_product_is_one():
    rep = check_id2(2, 2, [F(2, 3), F(3, 2)], F(1, 3))
    assert rep.rhs == 0 and rep.lhs == 0


def test_id2_with_unit_variable():
    assert check_id2(3, 2, [F(1), F(-2, 5), F(4, 9)], F(2, 7)).equal


@settings(max_examples=30, deadline=None)
@given(st.lists(rationals, min_size=3, max_size=3, unique=True), probs, st.integers(1, 4))
def test_id2_id3_random(xi, p, m):
    try:
        assert check_id3(3, m, xi, p).equal
        assert check_id2(3, m, xi, p).equal
    except PoleError:
        assume(False)


@settings(max_examples=30, deadline=None)
@given(st.lists(rationals, min_size=3, max_size=3), probs)
def test_cauchy_random(xi, p):
    try:
        assert check_cauchy_identity(3, xi, p).equal
    except (PoleError, ZeroDivisionError):
        assume(False)


def test_cauchy_k1():
    assert check_cauchy_identity(1, [F(3, 7)], F(2, 5)).equal


def test_bareiss_matches_expansion():
    m = [[F(2), F(1, 3), F(0)], [F(-1), F(5, 2), F(1)], [F(4), F(0), F(1, 7)]]
    direct = (m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
              - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
              + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]))
    assert bareiss_det(m) == direct


def test_tau_binomial_theorem_cases():
    assert check_tau_binomial_theorem(1, F(1, 3), F(1, 2), 40).equal
    rep = check_tau_binomial_theorem(2, F(1, 4), F(1, 3), 60)
    assert rep.equal and rep.extra["tail_bound"] < F(1, 10**25)
    zero = check_tau_binomial_theorem(3, F(0), F(1, 3), 5)
    assert zero.lhs == 0 == zero.rhs


def test_tau_binomial_theorem_rejects_divergent():
    with pytest.raises(ValueError):
        check_tau_binomial_theorem(2, F(3, 2), F(1, 3), 10)


@pytest.mark.parametrize("k", [1, 2, 3])
def test_step_antisymmetrization(k):
    reps = random_points(check_step_antisymmetrization, [((k,), k)], 10, seed=k)
    assert all(r.equal for r in reps)


def test_recursion_including_tau_one():
    assert check_tau_binomial_recursion(6, 3, F(1)).equal
    assert check_tau_binomial_recursion(7, 2, F(-3, 5)).equal


def test_normalisation_constant():
    assert id3_normalization(2, 2, F(1, 3)) == F(2, 3) * (1 + F(1, 2))


def test_polynomiality():
    assert id3_times_vandermonde_is_polynomial(3, 2, F(1, 3))


def test_resampling_finds_regular_points():
    reps = random_points(check_id1, [((2,), 2)], 5, seed=1)
    assert len(reps) == 5 and all(r.equal for r in reps)


def test_verify_all_small():
    reps = verify_all(count=3, max_size=3, seed=11)
    assert reps and all(r.equal for r in reps)
    assert all(isinstance(r.to_json()["lhs"], str) for r in reps)
