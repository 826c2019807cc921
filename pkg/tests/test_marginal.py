import math

import numpy as np
import pytest
from scipy import stats

from asep.bethe import tasep_transition_determinant, transition_probability
from asep.core import make_params
from asep.fredholm import step_distribution_fredholm
from asep.marginal import (
    MarginalTable, StepSeries, kappa, leftmost_distribution, marginal_from_table,
    mth_particle_distribution, step_series, tasep_step_toeplitz,
)
from asep.oracle import bessel_series_pmf, default_window, uniformization_table

P = make_params(0.3)


def test_kappa():
    assert kappa({3}, {1, 2, 3}) == 3
    assert kappa(set(), {1, 2}) == 0
    assert kappa({1, 4}) == 5


def test_leftmost_single_particle():
    vals = leftmost_distribution((2,), range(-3, 6), 1.5, P)
    for x, v in vals.items():
        assert v == pytest.approx(bessel_series_pmf(x - 2, 1.5, P), abs=1e-10)


def test_leftmost_two_particles_against_bethe():
    y, t = (0, 5), 1.0
    vals = leftmost_distribution(y, [-1, 0, 1], t, P)
    for x, v in vals.items():
        direct = sum(transition_probability(y, (x, x2), t, P) for x2 in range(x + 1, x + 16))
        assert v == pytest.approx(direct, abs=1e-9)


def test_leftmost_normalised():
    y, t = (0, 2, 3), 1.0
    vals = leftmost_distribution(y, range(-12, 4), t, P)
    assert sum(vals.values()) == pytest.approx(1, abs=1e-8)


def test_leftmost_radius_independent():
    y, xs = (0, 1), [-1, 0]
    a = leftmost_distribution(y, xs, 1.0, P, radius=0.10)
    b = leftmost_distribution(y, xs, 1.0, P, radius=0.14)
    for x in xs:
        assert a[x] == pytest.approx(b[x], abs=1e-10)


def test_mth_m1_equals_leftmost():
    y, xs = (0, 2, 3), range(-3, 2)
    a = mth_particle_distribution(y, 1, xs, 1.0, P)
    b = leftmost_distribution(y, xs, 1.0, P)
    for x in xs:
        assert a[x] == pytest.approx(b[x], abs=1e-9)


def test_mth_matches_marginalised_oracle():
    y, t = (1, 2, 3), 1.0
    tab = uniformization_table(y, t, P, default_window(y, t, 1e-12))
    xs = range(-3, 7)
    table = MarginalTable(y, t, P, xs)
    for m in (1, 2, 3):
        oracle = marginal_from_table(tab, m)
        for x in xs:
            assert table.probability(m, x) == pytest.approx(oracle.get(x, 0.0), abs=1e-6)


def test_rightmost_at_time_zero():
    vals = mth_particle_distribution((0, 2), 2, [1, 2, 3], 0.0, P)
    assert vals[2] == pytest.approx(1, abs=1e-10)
    assert abs(vals[1]) < 1e-10 and abs(vals[3]) < 1e-10


def test_finite_truncation_approaches_step():
    t = 0.2
    n = 1 + math.ceil(t + 6 * math.sqrt(t))
    y = tuple(range(1, n + 1))
    pmf = mth_particle_distribution(y, 1, range(-6, 2), t, P)
    ss = StepSeries(1, t, P)
    for x in (-1, 0):
        cdf = sum(v for z, v in pmf.items() if z <= x)
        assert ss(x).value == pytest.approx(cdf, abs=1e-6)


def test_step_series_against_fredholm():
    for m in (1, 2):
        for x in (-2, 0, 1):
            a = step_series(m, x, 1.0, P).value
            b = step_distribution_fredholm(m, x, 1.0, P)
            assert a == pytest.approx(b, abs=1e-9)


def test_step_series_cdf_properties():
    ss = StepSeries(1, 1.0, P)
    vals = [ss(x).value for x in range(-12, 3)]
    assert all(b - a >= -1e-8 for a, b in zip(vals, vals[1:]))
    assert vals[0] < 1e-6 and vals[-1] == pytest.approx(1, abs=1e-6)


def test_step_series_tasep_single_term():
    tasep = make_params(0)
    r = step_series(2, 0, 1.5, tasep)
    assert all(v == 0 for v in r.terms[2:])
    assert r.value == pytest.approx(tasep_step_toeplitz(2, 0, 1.5), abs=1e-10)


def test_toeplitz_m1_is_shifted_poisson():
    t = 2.0
    for x in range(-6, 2):
        # x_1 = 1 - Poisson(t) when the front particle never waits for anyone
        expect = stats.poisson.sf(-x, t)
        assert tasep_step_toeplitz(1, x, t) == pytest.approx(expect, abs=1e-12)


def test_toeplitz_limits_and_monotone():
    t = 2.0
    w = math.ceil(t + 10 * math.sqrt(t))
    vals = [tasep_step_toeplitz(2, x, t) for x in range(-w, w + 1)]
    assert vals[0] < 1e-10 and vals[-1] == pytest.approx(1, abs=1e-10)
    assert all(b - a >= -1e-12 for a, b in zip(vals, vals[1:]))


def test_toeplitz_m2_against_schutz():
    # left-moving TASEP: particles 1 and 2 ignore everyone to their right
    tasep, t, x = make_params(0), 1.0, -1
    total = 0.0
    for x2 in range(x - 12, x + 1):
        for x1 in range(x2 - 12, x2):
            total += tasep_transition_determinant((1, 2), (x1, x2), t, tasep)
    assert tasep_step_toeplitz(2, x, t) == pytest.approx(total, abs=1e-6)


def test_toeplitz_exact_matches_quadrature():
    for m, x, t in ((1, -3, 2.0), (2, 0, 1.5), (3, -2, 5.0), (4, 1, 5.0)):
        a = tasep_step_toeplitz(m, x, t)
        b = tasep_step_toeplitz(m, x, t, method="quadrature")
        assert a == pytest.approx(b, abs=1e-10)


def test_toeplitz_large_m_is_a_cdf():
    t, m = 100.0, 25
    vals = [tasep_step_toeplitz(m, x, t) for x in range(-30, 31, 6)]
    assert all(-1e-12 <= v <= 1 + 1e-12 for v in vals)
    assert all(b - a >= -1e-12 for a, b in zip(vals, vals[1:]))
