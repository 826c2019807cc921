import math

import numpy as np
import pytest
from scipy import special, stats

from asep.core import make_params
from asep.fredholm import step_distribution_fredholm
from asep.asymptotics import (
    AiryOperator, Circle, JContours, airy_function, airy_kernel, default_j_contours, f2, f_mu,
    f_mu_closed, kernel_J_and_probform4, khat_determinant, saddle_j_contours, scaling_constants,
    theorem1_rhs, theorem3_limit_check, theorem3_point,
)

P = make_params(0.3)
TAU = float(P.tau)
GAMMA = float(P.gamma)


def test_scaling_constants_quarter():
    sc = scaling_constants(0.25)
    assert sc.c1 == pytest.approx(0, abs=1e-15)
    assert sc.c2 == pytest.approx(2 ** (-1 / 3))
    assert sc.xi_saddle == pytest.approx(-1)
    assert sc.c3 == pytest.approx(2 ** (4 / 3))


@pytest.mark.parametrize("sigma", [0.05, 0.3, 0.6, 0.9])
def test_c3_closed_form(sigma):
    r = math.sqrt(sigma)
    assert scaling_constants(sigma).c3 == pytest.approx(sigma ** (1 / 6) * (1 - r) ** (-5 / 3), rel=1e-12)


def test_scaling_constants_edges():
    sc = scaling_constants(1 - 1e-8)
    assert sc.c1 == pytest.approx(1, abs=1e-7) and sc.c2 < 1e-4
    for bad in (0.0, 1.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            scaling_constants(bad)


def test_airy_values_and_ode():
    assert airy_function(0.0) == pytest.approx(3 ** (-2 / 3) / special.gamma(2 / 3), abs=1e-12)
    x = np.linspace(-5, 5, 201)
    h = 1e-3
    second = (airy_function(x + h) - 2 * airy_function(x) + airy_function(x - h)) / h**2
    assert np.max(np.abs(second - x * airy_function(x))) < 1e-6
    pos = airy_function(np.linspace(0, 10, 101))
    assert np.all(pos > 0) and np.all(np.diff(pos) < 0)
    with pytest.raises(ValueError):
        airy_function(31.0)


def test_airy_kernel_diagonal_is_continuous():
    x = 0.3
    assert airy_kernel(x, x) == pytest.approx(airy_kernel(x, x + 1e-6), abs=1e-6)


def test_f2_tails_and_monotone():
    assert f2(8.0) > 1 - 1e-10
    assert f2(-8.0) < 1e-6
    vals = [f2(s) for s in np.linspace(-6, 3, 50)]
    assert all(b > a for a, b in zip(vals, vals[1:]))


@pytest.mark.parametrize("s", [-3.0, -1.0, 0.0, 2.0])
def test_f2_dual_resolution(s):
    assert f2(s, details=True).discrepancy < 1e-8


def test_airy_operator_spectrum():
    op = AiryOperator.build(-2.0)
    ev = op.eigenvalues()
    assert np.all(ev > -1e-8) and np.all(ev < 1 + 1e-8)
    assert np.allclose(op.matrix, op.matrix.T, atol=1e-12)


def test_det_swap_identity():
    rng = np.random.default_rng(3)
    a, b = rng.normal(size=(6, 4)) / 3, rng.normal(size=(4, 6)) / 3
    assert np.linalg.det(np.eye(6) - a @ b) == pytest.approx(np.linalg.det(np.eye(4) - b @ a), abs=1e-12)
    # K_Airy = A A on (s, ∞) with A(x, z) = Ai(x + z), z ≥ 0
    s, n = -1.0, 160
    u, w = np.polynomial.legendre.leggauss(n)
    xs, ws = s + 15 * (u + 1) / 2, w * 15 / 2
    zs, wz = 15 * (u + 1) / 2, w * 15 / 2
    amat = np.sqrt(ws)[:, None] * airy_function(xs[:, None] + zs[None, :]) * np.sqrt(wz)[None, :]
    lhs = np.linalg.det(np.eye(n) - amat @ amat.T)
    assert lhs == pytest.approx(f2(s), abs=1e-10)


def test_khat_tasep_is_gaussian():
    tasep = make_params(0)
    for s in (-1.0, 0.0, 1.5):
        assert khat_determinant(s, 1, tasep, upper=True) == pytest.approx(stats.norm.cdf(s), abs=1e-10)


def test_khat_upper_limits():
    # the diagonal decays like exp(-γ²z²/2), so the far tail sits at large s
    assert khat_determinant(40.0, 1, P, upper=True) == pytest.approx(1, abs=1e-12)
    assert khat_determinant(40.0, 2, P) == pytest.approx(0, abs=1e-12)
    assert khat_determinant(-1.0, 1, P, upper=True) < khat_determinant(1.0, 1, P, upper=True)


def test_lower_tail_asymptote():
    t = 3.0
    prod = math.prod(1 - TAU**k for k in range(1, 200))
    assert theorem1_rhs(1, 0, t, P) == pytest.approx(prod * math.exp(-t), rel=1e-12)
    assert theorem1_rhs(1, 0, t, make_params(0)) == pytest.approx(math.exp(-t), rel=1e-12)
    assert theorem1_rhs(2, -1, t, P, log=True) == pytest.approx(math.log(theorem1_rhs(2, -1, t, P)))
    with pytest.raises(ValueError):
        theorem1_rhs(1, 1, t, P)


def test_f_mu_series_matches_closed_form():
    for mu, z in ((0.5 + 0.2j, 1.5 + 0.3j), (-0.7j, -2.0), (0.9, 1.1j)):
        assert f_mu(mu, z, TAU) == pytest.approx(complex(f_mu_closed(mu, z, TAU)), abs=1e-12)


def test_f_mu_rejections():
    with pytest.raises(ValueError):
        f_mu(0, 1.5, TAU)
    with pytest.raises(ValueError):
        f_mu(0.5, 0.9, TAU)
    with pytest.raises(ValueError):
        f_mu(0.5, 1 / TAU + 0.01, TAU)
    with pytest.raises(ValueError):
        f_mu(1 / TAU, 1.5, TAU)


def test_f_mu_tail_and_pole():
    r = f_mu(0.5, 1.5, TAU, details=True)
    assert r.tail_bound < 1e-15
    short = f_mu(0.5, 1.5, TAU, k_range=10, details=True)
    assert abs(short.value - r.value) <= 10 * short.tail_bound + 1e-15
    near = [abs(f_mu(1 / TAU * (1 + e), 1.5, TAU)) for e in (1e-2, 1e-4, 1e-6)]
    assert near[0] < near[1] < near[2]


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_j_kernel_matches_fredholm(m):
    t = 5.0
    for x in (m - 3, m - 1):
        a = kernel_J_and_probform4(m, x, t, P)
        b = step_distribution_fredholm(m, x, t / GAMMA, P, nodes=192)
        assert a == pytest.approx(b, abs=1e-6)


def test_j_kernel_mu_doubling():
    a = kernel_J_and_probform4(2, 0, 3.0, P, mu_nodes=48, details=True)
    b = kernel_J_and_probform4(2, 0, 3.0, P, mu_nodes=96, details=True)
    assert abs(a.value - b.value) < 1e-8 and abs(a.imag) < 1e-8


def test_j_contour_validation():
    good = default_j_contours(P)
    good.validate(TAU)
    bad = [
        JContours(Circle(0.0, 1.2), good.zeta, good.mu_radius),
        JContours(good.eta, Circle(0.0, 0.9), good.mu_radius),
        JContours(good.eta, Circle(0.0, 5.0), good.mu_radius),
        JContours(good.eta, good.zeta, TAU / 2),
    ]
    for c in bad:
        with pytest.raises(ValueError):
            c.validate(TAU)


def test_law_of_large_numbers_crossing():
    sigma, t = 0.25, 200.0
    c = saddle_j_contours(sigma, t, P)
    m = int(sigma * t)
    lo = kernel_J_and_probform4(m, -20, t, P, c, 128, 128)
    hi = kernel_J_and_probform4(m, 20, t, P, c, 128, 128)
    assert lo < 0.1 and hi > 0.99


def test_kpz_evaluation_point():
    assert theorem3_point(0.25, 0.0, 64.0) == (16, 0)


def test_kpz_far_right_is_one():
    row = theorem3_limit_check(0.25, 4.0, [50.0], P)[0]
    assert row.lhs == pytest.approx(1, abs=1e-3)


def test_kpz_tasep_path():
    rows = theorem3_limit_check(0.25, 0.0, [50.0, 100.0, 200.0], make_params(0))
    assert all(0 <= r.lhs <= 1 for r in rows)
    assert rows[-1].error < 0.01
