"""Fredholm determinants for step initial data.

Operators are discretized by Nyström on a trapezoid grid: ``A[j, k] = w_k L(z_j, z_k)``
with the ``1/(2πi)`` folded into ``w``.  Two kernel families live here: the
ξ-plane kernel ``K`` and the η-plane family ``K0, K1, K2`` obtained through
``ξ = (1 − τη)/(1 − η)`` (time rescaled by ``γ``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .bethe import SingularInputError
from .core import QuadratureGrid, SystemParams, circle, epsilon, f_weight
from .marginal import min_large_radius

DET_TOL = 1e-10


class StrategyMismatch(RuntimeError):
    """Two evaluation routes for the same probability disagree."""


@dataclass
class NystromOperator:
    grid: QuadratureGrid
    matrix: np.ndarray
    label: str = ""
    kernel: Callable | None = None

    def __post_init__(self):
        a = self.matrix
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("Nyström matrix must be square")
        if not np.all(np.isfinite(a)):
            raise SingularInputError(f"non-finite entries in {self.label or 'kernel'} matrix")

    @classmethod
    def from_kernel(cls, kernel: Callable, grid: QuadratureGrid, label: str = "") -> "NystromOperator":
        z = grid.nodes
        with np.errstate(all="ignore"):
            mat = kernel(z[:, None], z[None, :]) * grid.weights[None, :]
        return cls(grid, np.asarray(mat, dtype=complex), label, kernel)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def det(self, lam: complex = 1.0) -> complex:
        return complex(np.linalg.det(np.eye(self.size) - lam * self.matrix))

    def trace_power(self, n: int) -> complex:
        return complex(np.trace(np.linalg.matrix_power(self.matrix, n)))

    def refined(self, factor: int = 2) -> "NystromOperator":
        if self.kernel is None:
            raise ValueError("operator has no kernel to re-discretize")
        s = self.grid.spec
        grid = circle(s.radius, s.node_count * factor, s.center, s.orientation)
        return NystromOperator.from_kernel(self.kernel, grid, self.label)


@dataclass
class DetResult:
    value: complex
    change: float
    nodes: int


def fredholm_det(op: NystromOperator, lam: complex = 1.0, tol: float = DET_TOL,
                 max_nodes: int = 1024, details: bool = False):
    """``det(I − λA)``; when the operator carries its kernel, M is doubled until the
    relative change is below ``tol``."""
    value = op.det(lam)
    if op.kernel is None:
        return DetResult(value, math.nan, op.size) if details else value
    change = math.inf
    while op.size * 2 <= max_nodes:
        op = op.refined()
        new = op.det(lam)
        change = abs(new - value) / max(abs(new), 1.0)
        value = new
        if change < tol:
            break
    return DetResult(value, change, op.size) if details else value


# ---------------------------------------------------------------- ξ-plane kernel K

def kernel_K(xi, xi2, x: int, t: float, params: SystemParams):
    p, q = float(params.p), float(params.q)
    xi = np.asarray(xi, dtype=complex)
    xi2 = np.asarray(xi2, dtype=complex)
    den = f_weight(xi, xi2, params)
    if np.any(np.abs(den) < 1e-14):
        raise SingularInputError("p + q ξ ξ' − ξ vanishes")
    return q * xi ** int(x) * np.exp(epsilon(xi, params) * t) / den


def kernel_radius(x: int, t: float, params: SystemParams, nodes: int) -> float:
    """Radius of ``C_R`` trading row magnitude against the ``(ρ_in/R)^M`` aliasing rate."""
    p, q = float(params.p), float(params.q)
    r_lo = min_large_radius(params) * 1.02
    best, best_r = math.inf, r_lo
    for r in np.geomspace(r_lo, max(8.0, 4 * r_lo), 200):
        size = x * math.log(r) + (q * r + p / r - 1) * t
        inner = (1 + p / r) / q
        err = max(size, 0.0) + max(-36.0, nodes * math.log(inner / r))
        err = max(err, max(size, 0.0) - 36.0)
        if err < best:
            best, best_r = err, r
    return float(best_r)


def step_operator(x: int, t: float, params: SystemParams, nodes: int = 96,
                  radius: float | None = None) -> NystromOperator:
    if params.q == 0:
        raise ValueError("the step representation needs q > 0")
    radius = radius or kernel_radius(x, t, params, nodes)
    grid = circle(radius, nodes)
    return NystromOperator.from_kernel(lambda a, b: kernel_K(a, b, x, t, params), grid, "K")


def _residue_sum(dets: list[complex], tau: float, upper: bool = False) -> float:
    """``1 − Σ_j det_j / Π_{k≠j}(1 − τ^{k−j})``; ``upper=True`` returns the sum itself,
    i.e. the complementary probability without the subtraction."""
    m = len(dets)
    total = 0.0
    for j, d in enumerate(dets):
        den = 1.0
        for k in range(m):
            if k != j:
                den *= 1 - tau ** (k - j)
        total += (d / den).real
    return total if upper else 1.0 - total


def _lambda_contour(op: NystromOperator, m: int, tau: float, nodes: int = 64) -> float:
    rad = 2 * tau ** (1 - m)
    theta = 2 * np.pi * (np.arange(nodes) + 0.5) / nodes
    lam = rad * np.exp(1j * theta)
    acc = 0.0
    for lk in lam:
        den = np.prod([1 - lk * tau ** k for k in range(m)])
        acc += op.det(lk) / den
    return (acc / nodes).real


@dataclass
class StepFredholmResult:
    value: float
    residue_sum: float
    lambda_contour: float
    discrepancy: float
    nodes: int
    radius: float


def step_distribution_fredholm(m: int, x: int, t: float, params: SystemParams,
                               strategy: str = "residue-sum", nodes: int = 96,
                               radius: float | None = None, tol: float = 1e-8,
                               details: bool = False):
    """``P(x_m(t) ≤ x)`` for step initial data from ``det(I − λK)``.

    ``residue-sum`` collects the poles ``λ = τ^{-j}``, ``j < m``; ``lambda-contour``
    integrates numerically on ``|λ| = 2τ^{1−m}``.  With ``details=True`` both are
    computed and a disagreement above ``tol`` raises :class:`StrategyMismatch`.
    """
    if m < 1 or m > 12:
        raise ValueError("m must be in 1..12")
    if strategy not in ("residue-sum", "lambda-contour"):
        raise ValueError(f"unknown strategy {strategy!r}")
    tau = float(params.tau) if params.p else 0.0
    if t == 0:
        return float(x >= m)
    op = step_operator(x, t, params, nodes, radius)
    if tau == 0:
        # the poles τ^{-j}, j ≥ 1, escape to infinity; only m = 1 keeps a determinant form
        return 1.0 - op.det(1.0).real if m == 1 else _tasep_fallback(m, x, t)
    want_both = details or strategy == "lambda-contour"
    res = _residue_sum([op.det(tau ** (-j)) for j in range(m)], tau)
    if not want_both:
        return res
    lam = _lambda_contour(op, m, tau)
    diff = abs(res - lam)
    if details:
        if diff > tol:
            raise StrategyMismatch(f"residue-sum {res!r} vs lambda-contour {lam!r}")
        return StepFredholmResult(res if strategy == "residue-sum" else lam, res, lam, diff,
                                  op.size, op.grid.spec.radius)
    return lam


def _tasep_fallback(m, x, t):
    from .marginal import tasep_step_toeplitz
    return tasep_step_toeplitz(m, x, t)


# ---------------------------------------------------------------- η-plane family

@dataclass(frozen=True)
class ScalarFunctionPhi:
    """``φ(η) = ((1−τη)/(1−η))^x e^{[1/(1−η) − 1/(1−τη)] t}`` and its products."""

    x: int
    t: float
    params: SystemParams

    def __post_init__(self):
        if int(self.x) != self.x:
            raise ValueError("x must be an integer (no branch cuts)")

    @property
    def tau(self) -> float:
        return float(self.params.tau)

    def __call__(self, eta):
        eta = np.asarray(eta, dtype=complex)
        a, b = 1 - self.tau * eta, 1 - eta
        return (a / b) ** int(self.x) * np.exp((1 / b - 1 / a) * self.t)

    def log(self, eta):
        eta = np.asarray(eta, dtype=complex)
        a, b = 1 - self.tau * eta, 1 - eta
        return int(self.x) * (np.log(a) - np.log(b)) + (1 / b - 1 / a) * self.t

    def product(self, eta, n: int):
        """``φ_n(η) = φ(η) φ(τη) ⋯ φ(τ^{n−1}η)``."""
        eta = np.asarray(eta, dtype=complex)
        out = np.ones_like(eta)
        for k in range(n):
            out = out * self(self.tau ** k * eta)
        return out

    def infinite(self, eta):
        """``φ_∞(η) = (1−η)^{−x} e^{η t/(1−η)}``."""
        eta = np.asarray(eta, dtype=complex)
        return (1 - eta) ** (-int(self.x)) * np.exp(eta * self.t / (1 - eta))

    def log_infinite(self, eta):
        eta = np.asarray(eta, dtype=complex)
        return -int(self.x) * np.log(1 - eta) + eta * self.t / (1 - eta)


def _check_denominator(d):
    if np.any(np.abs(d) < 1e-14):
        raise SingularInputError("η' = τη on the grid")


def kernels_K1_K2(eta, eta2, phi: ScalarFunctionPhi, params: SystemParams, scale: float = 1.0):
    """``(K1, K2) = (φ(sτη), φ(η')) / (η' − τη)``; ``scale`` is the ``s`` of the scaled family."""
    tau = float(params.tau)
    eta = np.asarray(eta, dtype=complex)
    eta2 = np.asarray(eta2, dtype=complex)
    den = eta2 - tau * eta
    _check_denominator(den)
    return phi(scale * tau * eta) / den, phi(eta2) / den


def kernel_K0(eta, eta2, params: SystemParams):
    den = np.asarray(eta2, dtype=complex) - float(params.tau) * np.asarray(eta, dtype=complex)
    _check_denominator(den)
    return 1 / den


def kernel_difference(eta, eta2, phi: ScalarFunctionPhi, params: SystemParams):
    """``K1 − K2``.  The pole at ``η' = τη`` cancels in the difference, but a node
    sitting exactly on it is still rejected."""
    k1, k2 = kernels_K1_K2(eta, eta2, phi, params)
    return k1 - k2


def small_circle_about_one(params: SystemParams, nodes: int = 64) -> QuadratureGrid:
    tau = float(params.tau)
    r = 0.25 * min(abs(1 - 1 / tau), 1.0)
    return circle(r, nodes, center=1.0, orientation=-1)


def default_rho_eta(params: SystemParams) -> float:
    return 0.5 * (1 + 1 / float(params.tau))


def eta_operator(kind: str, phi: ScalarFunctionPhi, grid: QuadratureGrid, scale: float = 1.0) -> NystromOperator:
    params = phi.params
    kernels = {
        "K0": lambda a, b: kernel_K0(a, b, params),
        "K1": lambda a, b: kernels_K1_K2(a, b, phi, params, scale)[0],
        "K2": lambda a, b: kernels_K1_K2(a, b, phi, params)[1],
        "K1-K2": lambda a, b: kernel_difference(a, b, phi, params),
        "K2-K1": lambda a, b: -kernel_difference(a, b, phi, params),
    }
    if kind not in kernels:
        raise ValueError(f"unknown kernel {kind!r}")
    return NystromOperator.from_kernel(kernels[kind], grid, kind)


def infinite_product(lam: complex, tau: float, start: int = 0) -> complex:
    """``Π_{k≥start} (1 − λ τ^k)``, stopped once the factors are 1 to double precision."""
    out = 1.0 + 0j
    k = start
    while True:
        term = lam * tau ** k
        out *= 1 - term
        if abs(term) < 1e-17 or k > 5000:
            return out
        k += 1


def step_distribution_eta(m: int, x: int, t: float, params: SystemParams, nodes: int = 256,
                          rho: float | None = None) -> float:
    """Same probability as :func:`step_distribution_fredholm` at time ``t/γ``, through
    ``K1 − K2`` on ``|η| = ρ``."""
    tau = float(params.tau)
    phi = ScalarFunctionPhi(x, t, params)
    grid = circle(rho or default_rho_eta(params), nodes)
    op = eta_operator("K1-K2", phi, grid)
    return _residue_sum([op.det(tau ** (-j)) for j in range(m)], tau)


# ---------------------------------------------------------------- resolvent of K1

@dataclass
class ResolventResult:
    values: np.ndarray
    terms: int
    tail_bound: float


def resolvent_R(eta, eta2, lam: complex, n_max: int, phi: ScalarFunctionPhi,
                params: SystemParams, details: bool = False):
    """``R(η,η';λ) = Σ_{n≥1} λ^n φ_n(τη) / (η' − τ^n η)``, truncated at ``n_max``.

    The tail is bounded by the last term times ``r/(1−r)``, with ``r`` the observed
    ratio of successive term maxima; non-decaying terms raise ``ValueError``.
    """
    tau = float(params.tau)
    eta = np.asarray(eta, dtype=complex)
    eta2 = np.asarray(eta2, dtype=complex)
    eta_b, eta2_b = np.broadcast_arrays(eta, eta2)
    total = np.zeros(eta_b.shape, dtype=complex)
    if lam == 0:
        return ResolventResult(total, 0, 0.0) if details else total
    prod = np.ones(eta_b.shape, dtype=complex)
    sizes = []
    for n in range(1, n_max + 1):
        prod = prod * phi(tau ** n * eta_b)
        term = lam ** n * prod / (eta2_b - tau ** n * eta_b)
        total = total + term
        sizes.append(float(np.max(np.abs(term))))
    ratio = sizes[-1] / sizes[-2] if len(sizes) > 1 and sizes[-2] > 0 else 0.0
    if ratio >= 1 and sizes[-1] > 1e-300:
        raise ValueError("resolvent series is not converging for this λ")
    tail = sizes[-1] * ratio / (1 - ratio) if ratio < 1 else 0.0
    return ResolventResult(total, n_max, tail) if details else total


def resolvent_operator(lam: complex, n_max: int, phi: ScalarFunctionPhi, grid: QuadratureGrid) -> NystromOperator:
    return NystromOperator.from_kernel(lambda a, b: resolvent_R(a, b, lam, n_max, phi, phi.params), grid, "R")


def neumann_residual(lam: complex, n_max: int, phi: ScalarFunctionPhi, grid: QuadratureGrid,
                     vectors: int = 3, seed: int = 0) -> float:
    """``‖(I − λK1)(I + R)v − v‖`` over random test vectors."""
    k1 = eta_operator("K1", phi, grid).matrix
    r = resolvent_operator(lam, n_max, phi, grid).matrix
    eye = np.eye(grid.nodes.size)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal((grid.nodes.size, vectors)) + 1j * rng.standard_normal((grid.nodes.size, vectors))
    res = (eye - lam * k1) @ ((eye + r) @ v) - v
    return float(np.max(np.abs(res)) / np.max(np.abs(v)))


def factorized_det(lam: complex, n_max: int, phi: ScalarFunctionPhi, grid: QuadratureGrid) -> complex:
    """``Π_{k≥0}(1 − λτ^k) · det(I + λK2(I + R))``."""
    k2 = eta_operator("K2", phi, grid).matrix
    r = resolvent_operator(lam, n_max, phi, grid).matrix
    eye = np.eye(grid.nodes.size)
    d = np.linalg.det(eye + lam * k2 @ (eye + r))
    return infinite_product(lam, float(phi.params.tau)) * d


# ---------------------------------------------------------------- extended precision, large t
#
# For large t every admissible contour for K1 − K2 carries entries of size e^{c t}
# while the determinant stays O(1), so double precision cannot resolve it.  The
# routines below assemble the same Nyström matrix in gmpy2 and eliminate with
# partial pivoting at a working precision sized from the largest entry.

def _mp_det(a: np.ndarray):
    import gmpy2

    a = a.copy()
    n = a.shape[0]
    det = gmpy2.mpc(1)
    for k in range(n):
        piv = k + int(np.argmax(np.abs(a[k:, k])))
        if piv != k:
            a[[k, piv]] = a[[piv, k]]
            det = -det
        d = a[k, k]
        det *= d
        if k + 1 < n:
            a[k + 1:, k + 1:] -= np.multiply.outer(a[k + 1:, k] / d, a[k, k + 1:])
    return det


@dataclass(frozen=True)
class ClusteredCircle:
    """Circle through ``a < b`` on the real axis; nodes cluster around ``b`` when ``kappa < 1``.

    The angle map ``θ(u) = 2 atan(κ tan(u/2))`` is analytic and periodic, so the
    trapezoid rule in ``u`` keeps its geometric convergence.
    """

    a: float
    b: float
    kappa: float = 0.3

    def nodes_double(self, m: int):
        u = np.pi * ((2 * np.arange(m) + 1) / m - 1)
        th = 2 * np.arctan(self.kappa * np.tan(u / 2))
        c, r = (self.a + self.b) / 2, (self.b - self.a) / 2
        return c + r * np.exp(1j * th)

    def nodes_mp(self, m: int):
        import gmpy2

        k = gmpy2.mpfr(self.kappa)
        c = (gmpy2.mpfr(self.a) + self.b) / 2
        r = (gmpy2.mpfr(self.b) - self.a) / 2
        pi = gmpy2.const_pi()
        z, w = [], []
        for j in range(m):
            h = pi * (gmpy2.mpfr(2 * j + 1) / m - 1) / 2
            th = 2 * gmpy2.atan(k * gmpy2.tan(h))
            dth = k / (gmpy2.cos(h) ** 2 + k ** 2 * gmpy2.sin(h) ** 2)
            e = gmpy2.exp(gmpy2.mpc(0, th))
            z.append(c + r * e)
            w.append(r * e * dth / m)
        return np.array(z, dtype=object), np.array(w, dtype=object)


def _working_bits(phi: ScalarFunctionPhi, contour: ClusteredCircle, nodes: int) -> int:
    z = contour.nodes_double(4 * nodes)
    with np.errstate(all="ignore"):
        big = max(np.max(phi.log(z).real), np.max(phi.log(phi.tau * z).real), 0.0)
    return 53 + int(big / math.log(2)) + 48


@dataclass
class EtaMPResult:
    value: float
    upper: float
    dets: list
    nodes: int
    bits: int


def _eta_mp_dets(m: int, x: int, t: float, params: SystemParams, contour: ClusteredCircle,
                 nodes: int, bits: int) -> list[complex]:
    import gmpy2

    with gmpy2.context(gmpy2.get_context(), precision=bits):
        tau = gmpy2.mpfr(params.p) / gmpy2.mpfr(params.q) if not hasattr(params.tau, "numerator") \
            else gmpy2.mpq(params.tau.numerator, params.tau.denominator)
        tau = gmpy2.mpfr(tau)
        tt = gmpy2.mpfr(t)
        xi = int(x)

        def ph(z):
            a, b = 1 - tau * z, 1 - z
            return (a / b) ** xi * gmpy2.exp((1 / b - 1 / a) * tt)

        z, w = contour.nodes_mp(nodes)
        p_eta = np.array([ph(v) for v in z], dtype=object)
        p_tau = np.array([ph(tau * v) for v in z], dtype=object)
        num = np.subtract.outer(p_tau, p_eta)
        den = np.subtract.outer(-tau * z, -z)
        a = num / den * w[None, :]
        eye = np.empty((nodes, nodes), dtype=object)
        eye[...] = gmpy2.mpc(0)
        for i in range(nodes):
            eye[i, i] = gmpy2.mpc(1)
        return [complex(_mp_det(eye - tau ** (-j) * a)) for j in range(m)]


def step_distribution_eta_mp(m: int, x: int, t: float, params: SystemParams,
                             contour: ClusteredCircle | None = None, nodes: int = 192,
                             bits: int | None = None, details: bool = False, tol: float = 1e-12):
    """``P(x_m(t/γ) ≤ x)`` through ``K1 − K2`` in extended precision.

    The contour must enclose η=1 and exclude η=1/τ.  The default passes through
    η=0 and just to the right of η=1, which minimizes the largest entry.

    Without ``bits``, the precision is chosen by escalation: each level is
    checked against one 1.5x higher, and accepted when the two agree to ``tol``.
    """
    tau_f = float(params.tau)
    contour = contour or ClusteredCircle(0.0, 1.05, 0.3)
    if not (contour.a < 1 < contour.b < 1 / tau_f):
        raise ValueError("contour must enclose 1 and exclude 1/τ")
    if bits is not None:
        dets = _eta_mp_dets(m, x, t, params, contour, nodes, bits)
    else:
        bits = _working_bits(ScalarFunctionPhi(x, t, params), contour, nodes)
        dets = _eta_mp_dets(m, x, t, params, contour, nodes, bits)
        for _ in range(6):
            hi = bits + bits // 2
            better = _eta_mp_dets(m, x, t, params, contour, nodes, hi)
            gap = abs(_residue_sum(dets, tau_f, upper=True) - _residue_sum(better, tau_f, upper=True))
            bits, dets = hi, better
            if gap <= tol:
                break
        else:
            raise ArithmeticError(f"extended-precision determinant unstable up to {bits} bits")
    value = _residue_sum(dets, tau_f)
    if details:
        return EtaMPResult(value, _residue_sum(dets, tau_f, upper=True), dets, nodes, bits)
    return value
