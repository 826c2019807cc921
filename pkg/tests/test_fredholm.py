import numpy as np
import pytest

from asep.bethe import SingularInputError
from asep.core import circle, make_params
from asep.fredholm import (
    ClusteredCircle, NystromOperator, ScalarFunctionPhi, default_rho_eta, eta_operator, factorized_det,
    fredholm_det, infinite_product, kernel_K, kernels_K1_K2, neumann_residual, resolvent_R,
    small_circle_about_one, step_distribution_eta, step_distribution_eta_mp, step_distribution_fredholm,
    step_operator,
)

P = make_params(0.3)
TAU = float(P.tau)
GAMMA = float(P.gamma)


def test_kernel_K_values():
    xi, xi2 = 1.7 + 0.2j, -0.4 + 1.1j
    f = P.p + P.q * xi * xi2 - xi
    assert kernel_K(xi, xi2, 0, 0.0, P) == pytest.approx(P.q / f)
    pole = (xi - P.p) / (P.q * xi)
    with pytest.raises(SingularInputError):
        kernel_K(xi, pole, 0, 0.0, P)


def test_kernel_K_trace_by_residues():
    # ∮_{C_R} − ∮_{|ξ|=0.2} picks up the poles of 1/f(ξ,ξ) at ξ = 1 and ξ = τ
    x, t = -1, 1.0
    big, small = circle(3.0, 256), circle(0.2, 256)
    diag = lambda z: kernel_K(z, z, x, t, P)  # noqa: E731
    lhs = big.integrate(diag(big.nodes)) - small.integrate(diag(small.nodes))
    assert lhs == pytest.approx((1 - TAU**x) / (1 - TAU), abs=1e-11)


def test_det_trivial_and_rank_one():
    g = circle(1.0, 32)
    op = NystromOperator.from_kernel(lambda a, b: a * b**-2, g)
    assert op.det(0.0) == 1
    # rank one: det(I − λ a⊗b) = 1 − λ ∮ a b = 1 − λ
    assert op.det(0.7) == pytest.approx(0.3, abs=1e-13)
    assert fredholm_det(op, 0.7) == pytest.approx(0.3, abs=1e-13)


def test_K0_determinant_and_traces():
    g = circle(default_rho_eta(P), 64)
    k0 = eta_operator("K0", ScalarFunctionPhi(0, 0.0, P), g)
    assert k0.det(0.5) == pytest.approx(infinite_product(0.5, TAU), abs=1e-9)
    for n in range(1, 6):
        assert k0.trace_power(n) == pytest.approx(1 / (1 - TAU**n), abs=1e-10)


def test_K1_K2_reduce_to_K0_for_trivial_phi():
    phi = ScalarFunctionPhi(0, 0.0, P)
    eta, eta2 = 1.3 + 0.4j, -0.9 + 0.8j
    k1, k2 = kernels_K1_K2(eta, eta2, phi, P)
    assert k1 == pytest.approx(1 / (eta2 - TAU * eta)) and k2 == pytest.approx(k1)


def test_phi_products():
    phi = ScalarFunctionPhi(2, 1.5, P)
    eta = 0.3 + 0.2j
    assert phi.product(eta, 3) == pytest.approx(phi(eta) * phi(TAU * eta) * phi(TAU**2 * eta))
    assert phi.product(eta, 60) == pytest.approx(phi.infinite(eta), rel=1e-12)
    with pytest.raises(ValueError):
        ScalarFunctionPhi(1.5, 1.0, P)


@pytest.mark.parametrize("m,x", [(1, -1), (1, 1), (2, 0), (3, 2)])
def test_eta_route_matches_xi_route(m, x):
    t = 1.0
    a = step_distribution_eta(m, x, GAMMA * t, P)
    b = step_distribution_fredholm(m, x, t, P)
    assert a == pytest.approx(b, abs=1e-8)


def test_K2_against_K2_minus_K1_on_small_circle():
    phi = ScalarFunctionPhi(1, 0.8, P)
    g = small_circle_about_one(P, 96)
    for lam in (0.5, 1.0, 1 / TAU):
        a = eta_operator("K2", phi, g).det(lam)
        b = eta_operator("K2-K1", phi, g).det(lam)
        assert a == pytest.approx(b, abs=1e-8)


def test_small_circle_matches_large_circle():
    phi = ScalarFunctionPhi(1, 0.8, P)
    small = eta_operator("K2", phi, small_circle_about_one(P, 96))
    large = eta_operator("K1-K2", phi, circle(default_rho_eta(P), 256))
    assert small.det(1.0) == pytest.approx(large.det(1.0), abs=1e-8)


def test_scaled_family_is_scale_free():
    phi = ScalarFunctionPhi(1, 0.8, P)
    g = circle(default_rho_eta(P), 256)
    vals = [eta_operator("K1", phi, g, scale=s).det(0.7) for s in (1.0, 0.5, 0.1)]
    assert max(abs(v - vals[0]) for v in vals) < 1e-8


def test_deformation_invariance():
    phi = ScalarFunctionPhi(0, 0.6, P)
    a = eta_operator("K1-K2", phi, circle(1.4, 256)).det(1.0)
    b = eta_operator("K1-K2", phi, circle(1.9, 256)).det(1.0)
    assert a == pytest.approx(b, abs=1e-9)


def test_grid_convergence_on_doubling():
    op = step_operator(-1, 1.0, P, nodes=64)
    r = fredholm_det(op, 1.0, details=True)
    assert r.change < 1e-9


def test_strategies_agree():
    for m in (1, 2, 3):
        r = step_distribution_fredholm(m, 0, 1.0, P, details=True)
        assert r.discrepancy < 1e-8
        assert step_distribution_fredholm(m, 0, 1.0, P, strategy="lambda-contour") == pytest.approx(r.value, abs=1e-8)


def test_small_time_limit():
    for m in (1, 2, 3):
        for x in range(m - 2, m + 2):
            assert step_distribution_fredholm(m, x, 1e-6, P) == pytest.approx(float(x >= m), abs=1e-4)


def test_m_range():
    with pytest.raises(ValueError):
        step_distribution_fredholm(13, 0, 1.0, P)


def test_resolvent_zero_lambda():
    phi = ScalarFunctionPhi(1, 0.5, P)
    assert np.all(resolvent_R(1.2, 0.5j, 0.0, 10, phi, P) == 0)


def test_resolvent_neumann_and_factorisation():
    phi = ScalarFunctionPhi(1, 0.5, P)
    g = circle(default_rho_eta(P), 128)
    lam = 0.3
    assert neumann_residual(lam, 60, phi, g) < 1e-8
    direct = eta_operator("K1-K2", phi, g).det(lam)
    assert factorized_det(lam, 60, phi, g) == pytest.approx(direct, abs=1e-7)


def test_resolvent_tail_reported():
    phi = ScalarFunctionPhi(1, 0.5, P)
    r = resolvent_R(np.array([1.2 + 0.1j]), np.array([0.4j]), 0.3, 40, phi, P, details=True)
    assert r.terms == 40 and r.tail_bound < 1e-12


def test_extended_precision_agrees_with_double():
    t = 2.0
    a = step_distribution_eta_mp(2, 0, t, P, nodes=128)
    b = step_distribution_eta(2, 0, t, P)
    assert a == pytest.approx(b, abs=1e-10)


def test_clustered_circle_is_a_contour():
    c = ClusteredCircle(0.0, 1.05, 0.3)
    z = c.nodes_double(64)
    assert np.allclose(np.abs(z - 0.525), 0.525)
    zm, w = c.nodes_mp(64)
    # discrete winding numbers: 1 about the centre, 0 about 1/τ
    assert abs(complex(sum(wi / (zi - 0.5) for zi, wi in zip(zm, w))) - 1) < 1e-12
    assert abs(complex(sum(wi / (zi - 1 / TAU) for zi, wi in zip(zm, w)))) < 1e-12
