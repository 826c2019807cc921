"""Exact checks of the rational-function identities behind the marginal formulas.

Everything is evaluated in :class:`fractions.Fraction`, so "equal" means the
two sides are the same rational number, with no tolerance.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations
from math import comb, factorial, prod

from .core import all_permutations, tau_binomial

ExactScalar = Fraction


class PoleError(ValueError):
    """The evaluation point sits on a pole of one side; draw another point."""


@dataclass
class IdentityReport:
    name: str
    params: dict
    point: tuple
    lhs: Fraction
    rhs: Fraction
    equal: bool
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "identity": self.name,
            "params": {k: str(v) for k, v in self.params.items()},
            "point": [str(v) for v in self.point],
            "lhs": str(self.lhs),
            "rhs": str(self.rhs),
            "equal": self.equal,
            **{k: (str(v) if isinstance(v, Fraction) else v) for k, v in self.extra.items()},
        }


def _f(a, b, p):
    return p + (1 - p) * a * b - a


def _nonzero(v, what):
    if v == 0:
        raise PoleError(f"vanishing {what}")
    return v


def _report(name, params, xi, lhs, rhs, **extra):
    return IdentityReport(name, params, tuple(xi), lhs, rhs, lhs == rhs, extra)


def bareiss_det(mat) -> Fraction:
    """Fraction-free elimination; every division is exact."""
    a = [list(row) for row in mat]
    n = len(a)
    if n == 0:
        return Fraction(1)
    sign = 1
    prev = Fraction(1)
    for k in range(n - 1):
        if a[k][k] == 0:
            for r in range(k + 1, n):
                if a[r][k] != 0:
                    a[k], a[r] = a[r], a[k]
                    sign = -sign
                    break
            else:
                return Fraction(0)
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev
        prev = a[k][k]
    return sign * a[n - 1][n - 1]


def check_id1(n: int, xi, p) -> IdentityReport:
    """Signed permutation sum against ``p^{N(N-1)/2} Π_{i<j}(ξ_j-ξ_i) / Π(1-ξ_i)``."""
    xi = [Fraction(v) for v in xi]
    p = Fraction(p)
    if len(xi) != n:
        raise ValueError("need N variables")
    lhs = Fraction(0)
    for s in all_permutations(n):
        v = [xi[s(i) - 1] for i in range(1, n + 1)]
        num = prod((_f(v[i], v[j], p) for i in range(n) for j in range(i + 1, n)), start=Fraction(1))
        num *= prod((v[i] ** i for i in range(n)), start=Fraction(1))
        den = prod((_nonzero(1 - prod(v[i:]), "1 - product") for i in range(n)), start=Fraction(1))
        lhs += s.sign * num / den
    rhs = p ** (n * (n - 1) // 2) * prod((xi[j] - xi[i] for i in range(n) for j in range(i + 1, n)),
                                         start=Fraction(1))
    rhs /= prod((_nonzero(1 - x, "1 - xi") for x in xi), start=Fraction(1))
    return _report("id1", {"N": n, "p": p}, xi, lhs, rhs)


def check_simpler(n: int, xi, p) -> IdentityReport:
    """Residue-sum identity used in the induction step for ``id1``."""
    xi = [Fraction(v) for v in xi]
    p = Fraction(p)
    q = 1 - p
    lhs = Fraction(0)
    for k, xk in enumerate(xi):
        num = prod((_f(xk, xj, p) for xj in xi), start=Fraction(1))
        den = _nonzero(xk * (p - q * xk), "xi_k (p - q xi_k)")
        den *= prod((_nonzero(xj - xk, "xi_j - xi_k") for j, xj in enumerate(xi) if j != k), start=Fraction(1))
        lhs += num / den
    rhs = p ** (n - 1) / prod(xi, start=Fraction(1)) - p ** (n - 1)
    return _report("simpler", {"N": n, "p": p}, xi, lhs, rhs)


def _subset_sum(xi, m, p, with_factor: bool):
    n = len(xi)
    total = Fraction(0)
    for minus in combinations(range(n), m - 1):
        comp = [j for j in range(n) if j not in minus]
        term = Fraction(1)
        for i in minus:
            for j in comp:
                term *= _f(xi[i], xi[j], p) / _nonzero(xi[j] - xi[i], "xi_j - xi_i")
        if with_factor:
            term *= 1 - prod((xi[j] for j in comp), start=Fraction(1))
        total += term
    return total


def id3_normalization(size: int, m: int, p):
    """Pinned constant ``q^{(m-1)(|S|-m+1)} [|S| m-1]_τ`` (exact at every tested point).

    The plain ``[|S| m-1]_τ`` and the ``q^{m-1}`` scaling only hold when
    ``m - 1`` or ``|S| - m + 1`` is 0 or 1.
    """
    p = Fraction(p)
    q = 1 - p
    return q ** ((m - 1) * (size - m + 1)) * tau_binomial(size, m - 1, p / q)


def _subset_args(size, m, xi, p):
    xi = [Fraction(v) for v in xi]
    p = Fraction(p)
    if not 0 <= m - 1 <= size or len(xi) != size:
        raise ValueError("need 0 <= m-1 <= |S| and |S| variables")
    if len(set(xi)) != size:
        raise PoleError("coincident xi")
    _nonzero(1 - p, "q")
    return xi, p, 1 - p, p / (1 - p)


def check_id3(size: int, m: int, xi, p) -> IdentityReport:
    """``Σ_{|S_-|=m-1} Π f(ξ_i,ξ_j)/(ξ_j-ξ_i)`` against a τ-binomial constant.

    ``rhs`` is :func:`id3_normalization`; ``extra`` also records whether the
    unscaled ``[|S| m-1]_τ`` and the ``q^{m-1}``-scaled candidates hold.
    """
    xi, p, q, tau = _subset_args(size, m, xi, p)
    lhs = _subset_sum(xi, m, p, with_factor=False)
    plain = tau_binomial(size, m - 1, tau)
    return _report("id3", {"|S|": size, "m": m, "p": p}, xi, lhs, id3_normalization(size, m, p),
                   plain_holds=lhs == plain, q_power_m_minus_1_holds=lhs == q ** (m - 1) * plain)


def check_id2(size: int, m: int, xi, p) -> IdentityReport:
    """Same subset sum weighted by ``1 - Π_{S_-^c} ξ``.

    Right side ``q^{(m-1)(|S|-m+1)} [|S|-1 m-1]_τ (1 - Π_S ξ)``, the scaling
    pinned by :func:`check_id3`.
    """
    xi, p, q, tau = _subset_args(size, m, xi, p)
    lhs = _subset_sum(xi, m, p, with_factor=True)
    tail = tau_binomial(size - 1, m - 1, tau) * (1 - prod(xi, start=Fraction(1)))
    rhs = q ** ((m - 1) * (size - m + 1)) * tail
    return _report("id2", {"|S|": size, "m": m, "p": p}, xi, lhs, rhs,
                   q_power_m_minus_1_holds=lhs == q ** (m - 1) * tail)


def check_cauchy_identity(k: int, xi, p) -> IdentityReport:
    """``Π_{i≠j}(ξ_j-ξ_i)/f(ξ_i,ξ_j)`` against the Cauchy-type determinant form."""
    xi = [Fraction(v) for v in xi]
    p = Fraction(p)
    q = 1 - p
    if p * q == 0:
        raise ValueError("need pq != 0")
    lhs = Fraction(1)
    for i in range(k):
        for j in range(k):
            if i != j:
                lhs *= (xi[j] - xi[i]) / _nonzero(_f(xi[i], xi[j], p), "f")
    mat = [[1 / _nonzero(_f(a, b, p), "f") for b in xi] for a in xi]
    rhs = (-1) ** k * (p * q) ** (-(k * (k - 1) // 2))
    rhs *= prod(((1 - x) * (q * x - p) for x in xi), start=Fraction(1)) * bareiss_det(mat)
    return _report("cauchy", {"k": k, "p": p}, xi, lhs, rhs)


def check_tau_binomial_recursion(n: int, k: int, tau) -> IdentityReport:
    """Pascal rule ``[n k] = [n-1 k-1] + τ^k [n-1 k]`` against the product formula."""
    tau = Fraction(tau)
    lhs = tau_binomial(n, k, tau)
    rhs = tau_binomial(n - 1, k - 1, tau) + tau**k * tau_binomial(n - 1, k, tau)
    extra = {}
    if tau not in (1, -1):  # product form has 0/0 at roots of unity
        num = prod((1 - tau ** (n - j) for j in range(k)), start=Fraction(1))
        den = prod((1 - tau**j for j in range(1, k + 1)), start=Fraction(1))
        extra["product_form_holds"] = lhs == num / den
    rep = _report("tau_binomial_recursion", {"n": n, "k": k, "tau": tau}, (), lhs, rhs, **extra)
    rep.equal = rep.equal and extra.get("product_form_holds", True)
    return rep


def check_tau_binomial_theorem(m: int, z, tau, terms: int) -> IdentityReport:
    """Partial sum of ``Σ_{k≥m} [k-1 k-m]_τ z^k`` against ``Π_j z/(1 - τ^{m-j} z)``.

    For ``0 ≤ τ ≤ 1`` the coefficients are bounded by ``C(k-1, m-1)``, which
    gives a geometric bound on the neglected tail; ``equal`` means the
    difference is within that bound.
    """
    z, tau = Fraction(z), Fraction(tau)
    if not (0 <= tau <= 1 and abs(z) < 1):
        raise ValueError("need 0 <= tau <= 1 and |z| < 1 for a convergent check")
    lhs = sum((tau_binomial(k - 1, k - m, tau) * z**k for k in range(m, m + terms)), start=Fraction(0))
    rhs = prod((z / (1 - tau ** (m - j) * z) for j in range(1, m + 1)), start=Fraction(1))
    k0 = m + terms
    ratio = Fraction(k0, k0 - m + 1) * abs(z)
    if ratio >= 1:
        raise ValueError("too few terms for a geometric tail bound")
    bound = comb(k0 - 1, m - 1) * abs(z) ** k0 / (1 - ratio)
    rep = _report("tau_binomial_theorem", {"m": m, "z": z, "tau": tau, "terms": terms}, (), lhs, rhs,
                  tail_bound=bound)
    rep.equal = abs(lhs - rhs) <= bound
    return rep


def check_step_antisymmetrization(k: int, xi, p) -> IdentityReport:
    """Antisymmetrizing ``Π_{i>j} f(ξ_i,ξ_j)`` times the geometric sum over ``1 ≤ s_1 < … < s_k``.

    Compared against ``(1/k!) p^{k(k+1)/2} Π_{i>j}(ξ_j-ξ_i) / Π(qξ_i-p)``, with
    the antisymmetrization taken as ``(1/k!) Σ_σ sgn σ g(ξ_σ)``.
    """
    xi = [Fraction(v) for v in xi]
    p = Fraction(p)
    q = 1 - p
    tau = p / _nonzero(q, "q")
    total = Fraction(0)
    for s in all_permutations(k):
        v = [xi[s(i) - 1] for i in range(1, k + 1)]
        g = prod((_f(v[i], v[j], p) for i in range(k) for j in range(i)), start=Fraction(1))
        for i in range(k):
            g /= _nonzero(prod((x / tau for x in v[i:]), start=Fraction(1)) - 1, "geometric factor")
        total += s.sign * g
    lhs = total / factorial(k)
    rhs = p ** (k * (k + 1) // 2) * prod((xi[j] - xi[i] for i in range(k) for j in range(i)), start=Fraction(1))
    rhs /= factorial(k) * prod((_nonzero(q * x - p, "q xi - p") for x in xi), start=Fraction(1))
    return _report("step_antisymmetrization", {"k": k, "p": p}, xi, lhs, rhs)


def id3_times_vandermonde_is_polynomial(size: int, m: int, p) -> bool:
    """Clear denominators symbolically and confirm a polynomial (in fact a constant) remains."""
    import sympy

    p = sympy.Rational(Fraction(p).numerator, Fraction(p).denominator)
    xs = sympy.symbols(f"x1:{size + 1}")
    total = 0
    for minus in combinations(range(size), m - 1):
        comp = [j for j in range(size) if j not in minus]
        term = 1
        for i in minus:
            for j in comp:
                term *= (p + (1 - p) * xs[i] * xs[j] - xs[i]) / (xs[j] - xs[i])
        total += term
    vander = sympy.prod([xs[i] - xs[j] for i in range(size) for j in range(i + 1, size)])
    num, den = sympy.fraction(sympy.cancel(sympy.together(total * vander)))
    return den.is_number and sympy.cancel(total).is_number


def random_rational(rng: random.Random, bound: int = 64, positive: bool = False) -> Fraction:
    num = rng.randint(1 if positive else -bound, bound)
    while num == 0:
        num = rng.randint(-bound, bound)
    return Fraction(num, rng.randint(1, bound))


def random_p(rng: random.Random, bound: int = 64) -> Fraction:
    den = rng.randint(2, bound)
    return Fraction(rng.randint(1, den - 1), den)


def random_points(check, arg_sets, count: int, seed: int = 0, max_tries: int = 50):
    """Run ``check(*args, xi, p)`` at ``count`` random points per argument tuple, resampling on poles.

    ``arg_sets`` is a list of ``(args, n_vars)`` pairs.
    """
    rng = random.Random(seed)
    reports = []
    for args, n_vars in arg_sets:
        for _ in range(count):
            for _ in range(max_tries):
                xi = [random_rational(rng) for _ in range(n_vars)]
                p = random_p(rng)
                try:
                    reports.append(check(*args, xi, p))
                    break
                except PoleError:
                    continue
            else:
                raise PoleError(f"no regular point found for {check.__name__}{args}")
    return reports


def verify_all(count: int = 100, max_size: int = 4, seed: int = 0) -> list[IdentityReport]:
    """Every identity at ``count`` random rational points per size cell."""
    sizes = range(1, max_size + 1)
    reports = []
    reports += random_points(check_id1, [((n,), n) for n in sizes], count, seed)
    reports += random_points(check_simpler, [((n,), n) for n in sizes], count, seed + 1)
    cells = [((s, m), s) for s in sizes for m in range(1, s + 2)]
    reports += random_points(check_id3, cells, count, seed + 2)
    reports += random_points(check_id2, cells, count, seed + 3)
    reports += random_points(check_cauchy_identity, [((k,), k) for k in sizes], count, seed + 4)
    reports += random_points(check_step_antisymmetrization, [((k,), k) for k in range(1, 4)], count, seed + 5)
    rng = random.Random(seed + 6)
    for n in range(1, 2 * max_size + 1):
        for k in range(0, n + 1):
            for _ in range(count):
                reports.append(check_tau_binomial_recursion(n, k, random_rational(rng)))
    return reports
