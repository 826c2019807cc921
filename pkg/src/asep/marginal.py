"""Distribution of a single particle: the leftmost-particle formula, the
m-th particle subset sum, the step-initial-condition series and the TASEP
Toeplitz determinant.

All multiple integrals share one integrand,

    h(ξ) = Π_{i<j} (ξ_j - ξ_i)/f(ξ_i, ξ_j) · Π_i ξ_i^{-y_i-1} e^{ε(ξ_i)t} / (1 - ξ_i),

times ``Π ξ_i^x``.  On an M-point circle ``Π ξ_i^x`` only depends on the total
node index mod M, so the grid is reduced once to M grouped sums and every
``x`` then costs M operations.  When ``R^{kx}`` (radius ``R``, ``k``
variables) magnifies the rounding error of those sums past the target, they
are recomputed in multiprecision (gmpy2).
"""

from __future__ import annotations

import math
from contextlib import nullcontext
from dataclasses import dataclass
from itertools import combinations

import gmpy2
import numpy as np

from .core import Configuration, SystemParams, circle, kahan_sum, tau_binomial

EPS = np.finfo(float).eps
DEFAULT_TOL = 1e-12


def kappa(u, v=None) -> int:
    """``#{(i, j) : i ∈ u, j ∈ v, i ≥ j}``; with ``v`` omitted (all positive integers)
    this is the sum of the elements of ``u``."""
    if v is None:
        return sum(u)
    return sum(1 for i in u for j in v if i >= j)


def small_radius(params: SystemParams) -> float:
    return float(params.p) / 2


def min_large_radius(params: SystemParams) -> float:
    """Smallest ``R`` with every pole of ``1/f(ξ_i, ξ_j)`` inside ``C_R`` when ``|ξ_j| = R``."""
    p, q = float(params.p), float(params.q)
    if q == 0:
        raise ValueError("large-contour formulas need q > 0")
    return (1 + math.sqrt(1 + 4 * p * q)) / (2 * q)


def large_radius(params: SystemParams) -> float:
    r = min_large_radius(params) + 1
    if params.q:
        r = max(r, 2 * float(params.tau))
    return r


# -- grouped grid sums -------------------------------------------------------


def _mp_nodes(radius: float, m: int, bits: int):
    two_pi = 2 * gmpy2.const_pi()
    nodes = [gmpy2.mpfr(radius) * gmpy2.exp(gmpy2.mpc(0, two_pi * (j + gmpy2.mpfr(0.5)) / m)) for j in range(m)]
    return np.array(nodes, dtype=object)


@dataclass
class GroupedSums:
    """``H[s] = Σ_{Σj ≡ s mod M} h(ξ_{j_1}, …, ξ_{j_k}) Π w``; ``G(x) = Σ_grid h Π ξ^x``."""

    sums: np.ndarray
    abs_total: float
    k: int
    radius: float
    nodes: int
    bits: int = 53

    def g(self, x: int) -> complex:
        m = self.nodes
        if self.bits == 53:
            phase = np.exp(2j * np.pi * ((x * np.arange(m)) % m) / m)
            s = kahan_sum(self.sums * phase)
            return s * self.radius ** (self.k * x) * np.exp(2j * np.pi * ((x * self.k * 0.5) % m) / m)
        with gmpy2.context(gmpy2.get_context(), precision=self.bits):
            two_pi_i = gmpy2.mpc(0, 2 * gmpy2.const_pi())
            acc = gmpy2.mpc(0)
            for s, hs in enumerate(self.sums):
                acc += hs * gmpy2.exp(two_pi_i * ((x * s) % m) / m)
            acc *= gmpy2.mpfr(self.radius) ** (self.k * x)
            acc *= gmpy2.exp(two_pi_i * gmpy2.mpfr((x * self.k * 0.5) % m) / m)
            return complex(acc)

    def rounding_error(self, x: int) -> float:
        return 10 * EPS * self.k * self.abs_total * self.radius ** (self.k * x)


def _factors(ys, t, params, radius, m, bits):
    """Per-variable factors ``u_i`` (weights included) and the pair factor ``v``."""
    p, q = params.p, params.q
    if bits == 53:
        z = circle(radius, m).nodes
        w = z / m
        eps = p / z + q * z - 1
        u = [w * z ** (-y - 1) * np.exp(eps * t) / (1 - z) for y in ys]
        v = (z[None, :] - z[:, None]) / (p + q * z[:, None] * z[None, :] - z[:, None])
    else:
        z = _mp_nodes(radius, m, bits)
        w = z / m
        expf = np.frompyfunc(gmpy2.exp, 1, 1)
        pm, qm, tm = gmpy2.mpfr(p), gmpy2.mpfr(q), gmpy2.mpfr(t)
        eps = pm / z + qm * z - 1
        ex = expf(eps * tm)
        u = [w * ex / (1 - z) / z ** (y + 1) for y in ys]
        v = (z[None, :] - z[:, None]) / (pm + qm * z[:, None] * z[None, :] - z[:, None])
    return u, v


def _slab(u, v, j0):
    """Integrand on the grid with the first index fixed at ``j0``, flattened."""
    k, m = len(u), len(u[0])
    h = np.array([u[0][j0]], dtype=u[0].dtype)
    for i in range(1, k):
        h = h[..., None] * u[i].reshape((1,) * (i - 1) + (m,)) if i > 1 else h * u[i]
        h = h * (v[j0].reshape((1,) * (i - 1) + (m,)) if i > 1 else v[j0])
        for a in range(1, i):
            idx = [1] * i
            idx[a - 1] = m
            idx[i - 1] = m
            h = h * v.reshape(idx)
    return h.reshape(-1)


def grouped_sums(ys, t: float, params: SystemParams, radius: float, m: int, bits: int = 53) -> GroupedSums:
    # sweep the first index so memory stays at M^(k-1) entries
    k = len(ys)
    rest = np.indices((m,) * (k - 1)).reshape(k - 1, -1).sum(axis=0) % m if k > 1 else np.zeros(1, np.int64)
    with gmpy2.context(gmpy2.get_context(), precision=bits) if bits != 53 else nullcontext():
        u, v = _factors(ys, t, params, radius, m, bits)
        if bits == 53:
            sums = np.zeros(m, dtype=complex)
            abs_total = 0.0
            for j0 in range(m):
                h = _slab(u, v, j0)
                grp = (rest + j0) % m
                sums += np.bincount(grp, weights=h.real, minlength=m)
                sums += 1j * np.bincount(grp, weights=h.imag, minlength=m)
                abs_total += float(np.abs(h).sum())
            return GroupedSums(sums, abs_total, k, radius, m)
        sums = np.array([gmpy2.mpc(0)] * m, dtype=object)
        for j0 in range(m):
            for g, val in zip((rest + j0) % m, _slab(u, v, j0)):
                sums[g] += val
    return GroupedSums(sums, 0.0, k, radius, m, bits)


def _precise(ys, t, params, radius, m, xs, tol) -> GroupedSums:
    """Double-precision sums, or multiprecision ones when rounding would exceed ``tol``."""
    gs = grouped_sums(ys, t, params, radius, m)
    worst = max(gs.rounding_error(x) for x in xs)
    if worst <= tol:
        return gs
    bits = 53 + int(math.ceil(math.log2(worst / tol))) + 24
    return grouped_sums(ys, t, params, radius, m, bits)


@dataclass
class Converged:
    sums: GroupedSums
    quad_error: float


def _converged(ys, t, params, radius_rule, m0, xs, tol, m_step=16, m_max=160) -> Converged:
    """Refine M until two successive trapezoid rules agree at every requested ``x``.

    ``radius_rule(M)`` gives the circle for each M; the returned error is the
    last observed change, an upper estimate for the coarser rule.
    """
    prev = None
    m = m0
    while True:
        cur = _precise(ys, t, params, radius_rule(m), m, xs, tol)
        if prev is not None:
            diff = max(abs(cur.g(x) - prev.g(x)) for x in xs)
            if diff <= tol or m + m_step > m_max:
                return Converged(cur, diff)
        prev = cur
        m += m_step


def _inner_radius(params, k, n, m, r_min):
    """Large circle making ``ρ^{kn} (ρ/R)^M`` negligible; ``ρ ≈ (1 + p/R)/q`` bounds the inner singularities."""
    p, q = float(params.p), float(params.q)
    r = r_min
    for _ in range(4):
        rho = max(1.0, (1 + p / r) / q)
        r = max(r_min, rho * math.exp((k * max(n, 0) * math.log(rho) + 45) / m))
    return r


def _outer_radius(params, k, n, m):
    """Small circle making ``ρ^{-k|n|} (r/ρ)^M`` negligible; ``ρ = p/(1 + q r)`` is the nearest outer pole."""
    p, q = float(params.p), float(params.q)
    r = p / 2
    for _ in range(4):
        rho = p / (1 + q * r)
        r = min(p / 2, rho * math.exp(-(k * max(-n, 0) * math.log(1 / rho) + 45) / m))
    return r


# -- leftmost and m-th particle ---------------------------------------------


def default_marginal_nodes(k: int) -> int:
    return 64 if k <= 2 else 80


def leftmost_distribution(y, xs, t: float, params: SystemParams, nodes: int | None = None,
                          radius: float | None = None, tol: float = DEFAULT_TOL) -> dict[int, float]:
    """``P_Y(x_1(t) = x)`` for each ``x`` in ``xs``, from the N-fold small-contour integral.

    The circle shrinks below ``p/2`` when far-left ``x`` are requested, and
    the node count is refined until successive rules agree.
    """
    y = Configuration(y)
    if not params.p > 0:
        raise ValueError("the small-contour formula needs p > 0")
    xs = list(xs)
    n = len(y)
    need = sorted(set(xs) | {x + 1 for x in xs})
    lowest = min(need) - max(y)
    rule = (lambda m: radius) if radius is not None else (lambda m: _outer_radius(params, n, lowest, m))
    conv = _converged(list(y), t, params, rule, nodes or default_marginal_nodes(n), need, tol)
    pref = float(params.p) ** (n * (n - 1) // 2)
    gs = conv.sums
    return {x: float((pref * (gs.g(x) - gs.g(x + 1))).real) for x in xs}


def subset_coefficient(s, m: int, params: SystemParams) -> float:
    """``(-1)^{m-1} τ^{m(m-1)/2 + κ(S) - mk} q^{k(k-1)/2} [k-1 m-1]_τ``; the τ exponent is never negative."""
    k = len(s)
    e = m * (m - 1) // 2 + kappa(s) - m * k
    tau = params.tau
    return (-1) ** (m - 1) * tau**e * float(params.q) ** (k * (k - 1) // 2) * tau_binomial(k - 1, m - 1, tau)


class MarginalTable:
    """Every subset's grouped sums for one ``(Y, t, params)``, reusable across ``m`` and ``x``."""

    def __init__(self, y, t: float, params: SystemParams, xs, nodes: int | None = None,
                 radius: float | None = None, tol: float = DEFAULT_TOL):
        self.y = Configuration(y)
        if not params.q > 0:
            raise ValueError("the subset-sum formula needs q > 0")
        self.t, self.params = t, params
        r_min = min_large_radius(params)
        if radius is not None and radius <= r_min:
            raise ValueError("radius too small: some 1/f poles would lie outside C_R")
        need = sorted(set(xs) | {x + 1 for x in xs})
        n = len(self.y)
        self.sums = {}
        self.quad_error = {}
        for k in range(1, n + 1):
            for s in combinations(range(1, n + 1), k):
                ys = [self.y[i - 1] for i in s]
                highest = max(need) - min(ys)
                if radius is not None:
                    rule = lambda m: radius  # noqa: E731
                else:
                    rule = lambda m, k=k, h=highest: _inner_radius(params, k, h, m, 1.05 * r_min)  # noqa: E731
                # subset coefficients can exceed 1, so tighten the per-subset target
                scale = max(1.0, abs(subset_coefficient(s, 1, params)), abs(subset_coefficient(s, min(k, n), params)))
                conv = _converged(ys, t, params, rule, nodes or default_marginal_nodes(k), need, tol / scale)
                self.sums[s] = conv.sums
                self.quad_error[s] = conv.quad_error

    def probability(self, m: int, x: int) -> float:
        """``P_Y(x_m(t) = x)``."""
        n = len(self.y)
        if not 1 <= m <= n:
            raise ValueError(f"m must lie in 1..{n}")
        terms = []
        for s, gs in self.sums.items():
            if len(s) >= m:
                terms.append(subset_coefficient(s, m, self.params) * (gs.g(x) - gs.g(x + 1)))
        return float(kahan_sum(terms).real)


def mth_particle_distribution(y, m: int, xs, t: float, params: SystemParams, nodes: int | None = None,
                              radius: float | None = None, tol: float = DEFAULT_TOL) -> dict[int, float]:
    """``P_Y(x_m(t) = x)`` from the subset sum over ``S ⊂ {1..N}``, ``|S| ≥ m``, on ``C_R``."""
    xs = list(xs)
    table = MarginalTable(y, t, params, xs, nodes, radius, tol)
    return {x: table.probability(m, x) for x in xs}


def marginal_from_table(table: dict, m: int) -> dict[int, float]:
    """Collapse ``{X: P(X)}`` onto the position of particle ``m``."""
    out: dict[int, float] = {}
    for x, pr in table.items():
        out[x[m - 1]] = out.get(x[m - 1], 0.0) + pr
    return out


# -- step initial condition -------------------------------------------------


def step_prefactor(k: int, m: int, params: SystemParams) -> float:
    """``(-1)^m [k-1 k-m]_τ τ^{m(m-1)/2 - mk + k/2} (pq)^{k²/2}``, as ``p^a q^b`` with integer ``a, b ≥ 0``."""
    p, q = float(params.p), float(params.q)
    a = ((k - m) ** 2 + (k - m)) // 2
    b = (k * k - k) // 2 + m * k - (m * m - m) // 2
    return (-1) ** m * tau_binomial(k - 1, k - m, params.tau) * p**a * q**b


def step_radius(t: float, params: SystemParams, nodes: int) -> float:
    """Balance the ``R^{-M}`` (pole at 1) and ``(qRt)^M/M!`` trapezoid errors, above the admissible minimum."""
    q = float(params.q)
    r_opt = math.sqrt(math.exp(math.lgamma(nodes + 1) / nodes) / max(q * t, 1e-3))
    return max(r_opt, min_large_radius(params) * 1.05, 2 * float(params.tau) if params.p else 0.0, 1.2)


@dataclass
class StepSeriesResult:
    value: float
    terms: list
    truncation_estimate: float
    k_max: int


def _combination_sums(k: int, t: float, params: SystemParams, radius: float, m_nodes: int,
                      chunk: int = 1 << 18) -> GroupedSums:
    """Symmetric k-fold trapezoid sum of ``Π_{i≠j}(ξ_j-ξ_i)/f(ξ_i,ξ_j) Π ξ^x e^{εt}/((1-ξ)(qξ-p))``.

    The integrand vanishes when two nodes coincide and is symmetric, so the
    tensor sum is ``k!`` times the sum over node subsets.
    """
    p, q = float(params.p), float(params.q)
    z = circle(radius, m_nodes).nodes
    w = z / m_nodes
    u = w * np.exp((p / z + q * z - 1) * t) / ((1 - z) * (q * z - p))
    v = (z[None, :] - z[:, None]) / (p + q * z[:, None] * z[None, :] - z[:, None])
    pair = v * v.T
    sums = np.zeros(m_nodes, dtype=complex)
    abs_total = 0.0
    it = combinations(range(m_nodes), k)
    while True:
        block = np.fromiter((c for _, c in zip(range(chunk), it)), dtype=np.dtype((np.int64, k)))
        if block.size == 0:
            break
        block = block.reshape(-1, k)
        h = np.prod(u[block], axis=1)
        for i in range(k):
            for j in range(i + 1, k):
                h = h * pair[block[:, i], block[:, j]]
        grp = block.sum(axis=1) % m_nodes
        sums += np.bincount(grp, weights=h.real, minlength=m_nodes)
        sums += 1j * np.bincount(grp, weights=h.imag, minlength=m_nodes)
        abs_total += float(np.abs(h).sum())
    fact = math.factorial(k)
    return GroupedSums(sums * fact, abs_total * fact, k, radius, m_nodes)


def default_step_nodes(t: float) -> int:
    return 32 if t <= 2 else 48


class StepSeries:
    """Terms ``k = m..k_max`` of the step-initial-condition series, for all ``x`` at once."""

    def __init__(self, m: int, t: float, params: SystemParams, k_max: int = 6, nodes: int | None = None,
                 radius: float | None = None):
        if not params.q > 0:
            raise ValueError("the step series needs q > 0")
        if k_max < m:
            raise ValueError("k_max must be >= m")
        self.m, self.t, self.params, self.k_max = m, t, params, k_max
        self.nodes = nodes or default_step_nodes(t)
        self.radius = radius or step_radius(t, params, self.nodes)
        self.sums = {}
        for k in range(m, k_max + 1):
            c = step_prefactor(k, m, params) / math.factorial(k)
            if c == 0:
                continue
            self.sums[k] = (c, _combination_sums(k, t, params, self.radius, self.nodes))

    def terms(self, x: int) -> list[float]:
        return [float((c * gs.g(x)).real) for c, gs in self.sums.values()]

    def rounding_error(self, x: int) -> float:
        return sum(abs(c) * gs.rounding_error(x) for c, gs in self.sums.values())

    def __call__(self, x: int) -> StepSeriesResult:
        terms = self.terms(x)
        est = _tail_estimate(terms)
        return StepSeriesResult(math.fsum(terms), terms, est, self.k_max)


def _tail_estimate(terms: list[float]) -> float:
    # geometric extrapolation from the last two terms
    if len(terms) < 2 or terms[-2] == 0:
        return abs(terms[-1]) if terms else 0.0
    ratio = abs(terms[-1] / terms[-2])
    return abs(terms[-1]) * ratio / (1 - ratio) if ratio < 1 else float("inf")


def step_series(m: int, x: int, t: float, params: SystemParams, k_max: int = 6, nodes: int | None = None,
                radius: float | None = None) -> StepSeriesResult:
    """``P(x_m(t) ≤ x)`` for step initial data from the series truncated at ``k_max``."""
    return StepSeries(m, t, params, k_max, nodes, radius)(x)


def _toeplitz_entry(n: int, m: int, t: float, nodes: int) -> float:
    """``(1/2πi)∮_{|ξ|=R>1} ξ^n (ξ-1)^{-m} e^{(ξ-1)t} dξ`` with ``R`` minimising the integrand size."""
    # aliasing from the pole at 1 decays like R^{-M}
    lo = max(1.05, math.exp(40.0 / nodes))
    rs = np.linspace(lo, lo + max(4.0, 2 * m / max(t, 1e-9)), 400)
    logg = n * np.log(rs) - m * np.log(rs - 1) + (rs - 1) * t
    r = float(rs[np.argmin(logg)])
    g = circle(r, nodes)
    z = g.nodes
    return float(np.dot(g.weights, z**n * (z - 1) ** (-m) * np.exp((z - 1) * t)).real)


def _binom(n: int, k: int) -> int:
    """Binomial coefficient for any integer ``n`` (``n < 0`` included)."""
    if n >= 0:
        return math.comb(n, k)
    return (-1) ** k * math.comb(k - n - 1, k)


def _toeplitz_entry_exact(n: int, m: int, t):
    """Same integral as :func:`_toeplitz_entry` by residues at ``ξ = 1`` and, for ``n < 0``, ``ξ = 0``.

    Evaluated in the ambient gmpy2 precision; ``t`` is an ``mpfr``.
    """
    total = gmpy2.mpfr(0)
    for k in range(m):
        j = m - 1 - k
        total += _binom(n, k) * t**j / math.factorial(j)
    if n < 0:
        big_n = -n - 1
        acc = gmpy2.mpfr(0)
        term = gmpy2.mpfr(1)
        for j in range(big_n + 1):
            acc += term * math.comb(big_n - j + m - 1, m - 1)
            term = term * t / (j + 1)
        total += (-1) ** m * gmpy2.exp(-t) * acc
    return total


def _toeplitz_det_mp(m: int, x: int, t: float, bits: int) -> float:
    from .fredholm import _mp_det

    with gmpy2.context(gmpy2.get_context(), precision=bits):
        tt = gmpy2.mpfr(t)
        entries = {d: _toeplitz_entry_exact(d + x - 1, m, tt) for d in range(1 - m, m)}
        mat = np.empty((m, m), dtype=object)
        for i in range(m):
            for j in range(m):
                mat[i, j] = gmpy2.mpc(entries[i - j])
        return float(_mp_det(mat).real)


def tasep_step_toeplitz(m: int, x: int, t: float, nodes: int = 256, method: str = "exact",
                        tol: float = 1e-13) -> float:
    """``P(x_m(t) ≤ x)`` for left-moving TASEP from step data: ``det[∮ ξ^{i-j+x-1}(ξ-1)^{-m}e^{(ξ-1)t}]``.

    ``method="exact"`` takes the entries from their residues and the determinant
    in gmpy2, raising the precision until two levels agree to ``tol``; this stays
    reliable for large ``m`` where the matrix is badly conditioned.
    ``method="quadrature"`` is the double-precision trapezoid version (small ``m`` only).
    """
    if method == "quadrature":
        mat = np.array([[_toeplitz_entry(i - j + x - 1, m, t, nodes) for j in range(m)] for i in range(m)])
        return float(np.linalg.det(mat))
    if method != "exact":
        raise ValueError(f"unknown method {method!r}")
    bits = 96 + 4 * m
    val = _toeplitz_det_mp(m, x, t, bits)
    for _ in range(12):
        bits += bits // 2
        better = _toeplitz_det_mp(m, x, t, bits)
        if abs(better - val) <= tol:
            return better
        val = better
    raise ArithmeticError("Toeplitz determinant did not stabilise")
