"""Large-time limits for step initial data and the finite-time quantities they approximate.

The finite-time side of the KPZ regime uses the ``J`` kernel, where ``m`` only
enters through ``ζ^m/η'^{m+1}``; this keeps ``m = [σt]`` in the hundreds affordable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .core import SystemParams
from .fredholm import _residue_sum, infinite_product, step_distribution_eta_mp


@dataclass(frozen=True)
class ScalingConstants:
    sigma: float
    c1: float
    c2: float
    xi_saddle: float
    c3: float


def scaling_constants(sigma: float) -> ScalingConstants:
    """KPZ centering/scaling for ``x_{[σt]}``.

    ``c3`` makes the cubic term of ``log(φ_∞(ζ) ζ^m)`` at the saddle equal ``−ζ̃³/3``
    under ``ζ = ξ + c3 t^{−1/3} ζ̃``; it simplifies to ``σ^{1/6} (1−√σ)^{−5/3}``.
    """
    if not 0 < sigma < 1:
        raise ValueError("sigma must lie in (0, 1)")
    r = math.sqrt(sigma)
    c1 = -1 + 2 * r
    c2 = sigma ** (-1 / 6) * (1 - r) ** (2 / 3)
    xi = -r / (1 - r)
    third = 2 * c1 / (1 - xi) ** 3 + 6 / (1 - xi) ** 4 + 2 * sigma / xi ** 3
    c3 = (-2 / third) ** (1 / 3)
    return ScalingConstants(sigma, c1, c2, xi, c3)


# ---------------------------------------------------------------- Airy side

AIRY_RANGE = 30.0


def airy_function(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(x) > AIRY_RANGE):
        raise ValueError(f"|x| must be at most {AIRY_RANGE}")
    ai = special.airy(x)[0]
    return float(ai) if ai.ndim == 0 else ai


def airy_kernel(x, y):
    """``∫_0^∞ Ai(x+z) Ai(y+z) dz`` in its closed form, diagonal included."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ax, apx, _, _ = special.airy(x)
    ay, apy, _, _ = special.airy(y)
    diff = x - y
    same = np.abs(diff) < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        off = (ax * apy - apx * ay) / diff
    diag = apx ** 2 - x * ax ** 2
    return np.where(same, diag, off)


@dataclass
class AiryOperator:
    s: float
    length: float
    n: int
    matrix: np.ndarray

    @classmethod
    def build(cls, s: float, length: float = 40.0, n: int = 200) -> "AiryOperator":
        u, w = np.polynomial.legendre.leggauss(n)
        z = s + length * (u + 1) / 2
        w = w * length / 2
        sw = np.sqrt(w)
        mat = sw[:, None] * airy_kernel(z[:, None], z[None, :]) * sw[None, :]
        return cls(s, length, n, mat)

    def det(self) -> float:
        return float(np.linalg.det(np.eye(self.n) - self.matrix))

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(0.5 * (self.matrix + self.matrix.T))


@dataclass
class F2Result:
    value: float
    check: float
    discrepancy: float


def f2(s: float, length: float = 40.0, n: int = 200, details: bool = False):
    """Tracy–Widom GUE distribution ``det(I − K_Airy)`` on ``(s, ∞)``; the check value
    doubles both the interval and the node count."""
    if s < -10:
        raise ValueError("s must be >= -10")
    value = AiryOperator.build(s, length, n).det()
    if not details:
        return value
    check = AiryOperator.build(s, 2 * length, 2 * n).det()
    return F2Result(value, check, abs(value - check))


def khat_matrix(s: float, params: SystemParams, length: float = 20.0, n: int = 120) -> np.ndarray:
    p, q = float(params.p), float(params.q)
    u, w = np.polynomial.legendre.leggauss(n)
    z = s + length * (u + 1) / 2
    sw = np.sqrt(w * length / 2)
    k = q / math.sqrt(2 * math.pi) * np.exp(-(p * p + q * q) * (z[:, None] ** 2 + z[None, :] ** 2) / 4
                                          + p * q * np.outer(z, z))
    return sw[:, None] * k * sw[None, :]


def khat_determinant(s: float, m: int, params: SystemParams, length: float = 20.0, n: int = 120,
                     upper: bool = False) -> float:
    """Gaussian-regime limit of ``P(x_m(t/γ) ≤ −t − γ^{1/2} s t^{1/2})``.

    The λ-integral is done by residues; ``upper=True`` returns the complement,
    which for ``m = 1`` is ``det(I − K̂_s)``.
    """
    if not params.q > params.p:
        raise ValueError("needs q > p")
    mat = khat_matrix(s, params, length, n)
    eye = np.eye(n)
    if params.p == 0:
        dets = [np.linalg.det(eye - mat)]
        return dets[0] if upper else 1 - dets[0]
    tau = float(params.tau)
    dets = [np.linalg.det(eye - tau ** (-j) * mat) for j in range(m)]
    return _residue_sum(dets, tau, upper=upper)


def theorem1_rhs(m: int, x: int, t: float, params: SystemParams, log: bool = False) -> float:
    """``Π_{k≥1}(1−τ^k) t^{2m−x−2} e^{−t} / ((m−1)!(m−x−1)!)``."""
    if not x < m:
        raise ValueError("needs x < m")
    tau = float(params.tau) if params.p else 0.0
    prod = infinite_product(1.0, tau, start=1).real if tau else 1.0
    val = (math.log(prod) + (2 * m - x - 2) * math.log(t) - t
           - math.lgamma(m) - math.lgamma(m - x))
    return val if log else math.exp(val)


# ---------------------------------------------------------------- the f(μ, z) series

def _qpoch(a, tau: float):
    a = np.asarray(a, dtype=complex)
    top = float(np.max(np.abs(a))) if a.size else 0.0
    n = 1 if top == 0 else max(1, int(math.ceil(math.log(1e-18 / max(top, 1e-300)) / math.log(tau))) + 1)
    out = np.ones_like(a)
    for k in range(n):
        out = out * (1 - a * tau ** k)
    return out


def f_mu_closed(mu, z, tau: float):
    """Bilateral-sum closed form of ``Σ_k τ^k z^k/(1−τ^k μ)``; meromorphic continuation
    off the annulus ``1 < |z| < 1/τ``."""
    mu = np.asarray(mu, dtype=complex)
    z = np.asarray(z, dtype=complex)
    num = _qpoch(tau, tau) ** 2 * _qpoch(mu * tau * z, tau) * _qpoch(1 / (mu * z), tau)
    den = _qpoch(mu, tau) * _qpoch(tau / mu, tau) * _qpoch(tau * z, tau) * _qpoch(1 / z, tau)
    return num / den


@dataclass
class FMuResult:
    value: complex
    tail_bound: float
    k_range: int


def f_mu(mu: complex, z: complex, tau: float, k_range: int | None = None, details: bool = False):
    """Symmetric truncation of ``Σ_{k∈ℤ} τ^k z^k/(1−τ^k μ)`` with a geometric tail bound."""
    if not 0 < tau < 1:
        raise ValueError("needs 0 < tau < 1")
    if mu == 0:
        raise ValueError("the k → −∞ tail diverges at μ = 0")
    az = abs(z)
    if not 1 < az < 1 / tau:
        raise ValueError("z outside the convergence annulus 1 < |z| < 1/τ")
    ks = np.arange(-60, 61)
    if np.any(np.abs(1 - tau ** ks.astype(float) * mu) < 1e-12):
        raise ValueError("μ sits on a pole τ^{-k}")
    r_plus, r_minus = tau * az, 1 / az
    if k_range is None:
        rate = max(r_plus, r_minus)
        k_range = int(math.ceil(math.log(1e-18) / math.log(rate))) + 2
    k = np.arange(-k_range, k_range + 1)
    tk = tau ** k.astype(float)
    terms = tk * z ** k / (1 - tk * mu)
    value = complex(np.sum(terms))
    # tails beyond ±k_range are geometric with ratios r_plus and r_minus
    tail = abs(terms[-1]) * r_plus / (1 - r_plus) + abs(terms[0]) * r_minus / (1 - r_minus) * 2
    return FMuResult(value, tail, k_range) if details else value


# ---------------------------------------------------------------- J kernel

@dataclass(frozen=True)
class Circle:
    """Circle ``center + radius e^{iθ}``; nodes cluster near angle ``focus`` when ``kappa < 1``."""

    center: float
    radius: float
    kappa: float = 1.0
    focus: float = math.pi

    def grid(self, m: int):
        u = np.pi * ((2 * np.arange(m) + 1) / m - 1)
        h = u / 2
        k = self.kappa
        th = self.focus + 2 * np.arctan(k * np.tan(h))
        dth = k / (np.cos(h) ** 2 + k ** 2 * np.sin(h) ** 2)
        e = np.exp(1j * th)
        return self.center + self.radius * e, self.radius * e * dth / m


def _phase(z, m: int, x: int, t: float):
    """``log(φ_∞(z) z^m)``; only its exponential is used, so the branch is irrelevant."""
    return -x * np.log(1 - z) + t * z / (1 - z) + m * np.log(z)


@dataclass(frozen=True)
class JContours:
    eta: Circle
    zeta: Circle
    mu_radius: float

    def validate(self, tau: float, samples: int = 720):
        e, _ = self.eta.grid(samples)
        z, _ = self.zeta.grid(samples)
        if not (np.all(np.abs(e - 1) > 1e-9) and abs(self.eta.center) < self.eta.radius):
            raise ValueError("η contour must enclose 0")
        if self.eta.center + self.eta.radius >= 1:
            raise ValueError("η contour must exclude 1")
        if self.zeta.center + self.zeta.radius <= 1:
            raise ValueError("ζ contour must enclose 1")
        if np.min(np.abs(z[:, None] - e[None, :])) <= 0 or _inside(e, self.zeta) is False:
            raise ValueError("η contour must lie inside the ζ contour")
        if not np.all(_inside_circle(z, self.eta.center / tau, self.eta.radius / tau)):
            raise ValueError("ζ contour must stay inside τ^{-1} × (η contour)")
        if not tau < self.mu_radius < 1:
            raise ValueError("μ radius must lie in (τ, 1)")


def _inside_circle(z, c, r):
    return np.abs(z - c) < r


def _inside(points, circ: Circle) -> bool:
    return bool(np.all(_inside_circle(points, circ.center, circ.radius)))


def default_j_contours(params: SystemParams) -> JContours:
    tau = float(params.tau)
    rho_eta = (1 + tau) / 2
    rho_zeta = 0.5 * (1 + rho_eta / tau)
    return JContours(Circle(0.0, rho_eta), Circle(0.0, rho_zeta), (1 + tau) / 2)


def saddle_j_contours(sigma: float, t: float, params: SystemParams, gap: float | None = None,
                      kappa: float = 0.35) -> JContours:
    """Circles tangent to the KPZ saddle from inside (η) and outside (ζ), pulled apart by ``gap``."""
    sc = scaling_constants(sigma)
    a = abs(sc.xi_saddle)
    gap = gap if gap is not None else min(0.2 * sc.c3 * t ** (-1 / 3), 0.12) * a
    ce, cz = -0.1 * a, 0.1 * a
    eta = Circle(ce, (sc.xi_saddle + gap - ce) * -1, kappa)
    zeta = Circle(cz, cz - (sc.xi_saddle - gap), kappa)
    return JContours(eta, zeta, (1 + float(params.tau)) / 2)


@dataclass
class JResult:
    value: float
    mu_nodes: int
    eta_nodes: int
    zeta_nodes: int
    imag: float


def kernel_J_and_probform4(m: int, x: int, t: float, params: SystemParams,
                           contours: JContours | None = None, eta_nodes: int = 96,
                           zeta_nodes: int = 96, mu_nodes: int = 48, details: bool = False):
    """``P(x_m(t/γ) ≤ x) = ∮ (μ;τ)_∞ det(I + μJ) dμ/(2πiμ)``.

    ``J(η,η') = ∮ φ_∞(ζ)ζ^m / (φ_∞(η')η'^{m+1}) · f(μ, ζ/η') / (ζ − η) dζ/(2πi)``,
    discretized as a product of three matrices so each μ node costs one
    ``f`` table and one determinant.
    """
    if not 0 < params.p < params.q:
        raise ValueError("needs 0 < p < q")
    tau = float(params.tau)
    contours = contours or default_j_contours(params)
    contours.validate(tau)
    eta, w_eta = contours.eta.grid(eta_nodes)
    zeta, w_zeta = contours.zeta.grid(zeta_nodes)
    s_zeta = _phase(zeta, m, x, t)
    s_eta = _phase(eta, m, x, t)
    shift = float(np.max(s_zeta.real))
    left = w_zeta * np.exp(s_zeta - shift)                         # over ζ
    right = np.exp(shift - s_eta) / eta * w_eta                    # over η'
    cauchy = 1 / (zeta[None, :] - eta[:, None])                    # [η, ζ]
    ratio = zeta[:, None] / eta[None, :]                           # [ζ, η']
    eye = np.eye(eta_nodes)
    theta = 2 * np.pi * (np.arange(mu_nodes) + 0.5) / mu_nodes
    mus = contours.mu_radius * np.exp(1j * theta)
    acc = 0j
    for mu in mus:
        fmat = f_mu_closed(mu, ratio, tau)
        jmat = cauchy @ (left[:, None] * fmat) * right[None, :]
        acc += infinite_product(mu, tau) * np.linalg.det(eye + mu * jmat)
    val = acc / mu_nodes
    if details:
        return JResult(val.real, mu_nodes, eta_nodes, zeta_nodes, val.imag)
    return val.real


# ---------------------------------------------------------------- convergence reports

@dataclass
class TrendRow:
    t: float
    lhs: float
    rhs: float
    error: float
    x: int
    m: int


def theorem1_trend(m: int, x: int, ts, params: SystemParams, nodes: int = 192) -> list[TrendRow]:
    """``P(x_m(t/γ) > x)`` against the asymptote; ``error`` holds the ratio."""
    rows = []
    for t in ts:
        lhs = step_distribution_eta_mp(m, x, t, params, nodes=nodes, details=True).upper
        rhs = theorem1_rhs(m, x, t, params)
        rows.append(TrendRow(t, lhs, rhs, lhs / rhs, x, m))
    return rows


def theorem2_point(s: float, t: float, params: SystemParams) -> int:
    g = float(params.gamma)
    return -math.ceil(t + math.sqrt(g) * s * math.sqrt(t))


def theorem2_trend(s: float, ts, params: SystemParams, m: int = 1, nodes: int = 192) -> list[TrendRow]:
    """``P(x_m(t/γ) > −t − γ^{1/2} s t^{1/2})`` against its Gaussian-regime limit."""
    rhs = khat_determinant(s, m, params, upper=True)
    rows = []
    for t in ts:
        x = theorem2_point(s, t, params)
        lhs = step_distribution_eta_mp(m, x, t, params, nodes=nodes, details=True).upper
        rows.append(TrendRow(t, lhs, rhs, abs(lhs - rhs), x, m))
    return rows


def theorem3_point(sigma: float, s: float, t: float) -> tuple[int, int]:
    sc = scaling_constants(sigma)
    return int(math.floor(sigma * t)), int(math.floor(sc.c1 * t + sc.c2 * s * t ** (1 / 3)))


def theorem3_limit_check(sigma: float, s: float, ts, params: SystemParams, nodes: int = 128,
                         mu_nodes: int = 48) -> list[TrendRow]:
    if not params.q > params.p:
        raise ValueError("needs q > p")
    if not 0.1 < sigma < 0.9:
        raise ValueError("sigma must lie in (0.1, 0.9)")
    rhs = f2(s)
    rows = []
    for t in ts:
        m, x = theorem3_point(sigma, s, t)
        if params.p == 0:
            from .marginal import tasep_step_toeplitz
            lhs = tasep_step_toeplitz(m, x, t)
        else:
            lhs = kernel_J_and_probform4(m, x, t, params, saddle_j_contours(sigma, t, params),
                                         nodes, nodes, mu_nodes)
        rows.append(TrendRow(t, lhs, rhs, abs(lhs - rhs), x, m))
    return rows


__all__ = [name for name in dir() if not name.startswith("_")]
