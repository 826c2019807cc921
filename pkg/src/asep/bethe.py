"""Finite-N transition probabilities from the Bethe-ansatz contour integral.

``P_Y(X; t) = Σ_σ ∮_{C_r}…∮ A_σ(ξ) Π_i ξ_{σ(i)}^{x_i} Π_i ξ_i^{-y_i-1} e^{ε(ξ_i) t} d^Nξ``

with every variable on a small circle ``C_r`` that keeps the poles of the
amplitudes ``A_σ`` outside.  The N-dimensional trapezoid sums are contracted
with ``einsum`` (one pair-factor matrix per inverted pair), so the full
``M^N`` integrand is only materialised when a whole window of final
configurations is wanted at once (:func:`transition_table`, via an FFT).

Numerical note: the integrand on ``C_r`` has modulus ``~ r^{Σ(x_i - y_i)}``,
which is enormous for configurations that drifted left.  Those are evaluated
through the mirror-image process (sites negated and reversed, ``p ↔ q``), for
which the same configuration has drifted right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import (Configuration, Permutation, SystemParams, all_permutations, circle, f_weight,
                   kahan_sum)

MAX_PARTICLES = 5
MIN_DENOMINATOR = 1e-8
_AXES = "abcdefgh"


class SingularInputError(ValueError):
    pass


class CostError(ValueError):
    pass


def inverted_value_pairs(sigma: Permutation) -> list[tuple[int, int]]:
    """Pairs ``l < k`` with ``σ^{-1}(l) > σ^{-1}(k)`` (values met in reversed order)."""
    pos = sigma.inverse()
    n = len(sigma)
    return [(l, k) for l in range(1, n + 1) for k in range(l + 1, n + 1) if pos(l) > pos(k)]


def a_sigma(sigma: Permutation, xi, params: SystemParams, form: str = "inversions"):
    """Bethe amplitude ``A_σ(ξ)``.

    ``form="inversions"`` multiplies ``-f(ξ_k, ξ_l)/f(ξ_l, ξ_k)`` over the
    inverted value pairs; ``form="ratio"`` is ``sgn σ Π_{i<j} f(ξ_σ(i), ξ_σ(j)) /
    Π_{i<j} f(ξ_i, ξ_j)``.  Works for scalars of any field and for arrays.
    """
    n = len(sigma)
    if len(xi) != n:
        raise ValueError("need one variable per particle")
    if form == "inversions":
        out = 1
        for l, k in inverted_value_pairs(sigma):
            den = f_weight(xi[l - 1], xi[k - 1], params)
            if np.any(den == 0):
                raise SingularInputError(f"f(xi_{l}, xi_{k}) = 0")
            out = out * (-f_weight(xi[k - 1], xi[l - 1], params)) / den
        return out
    if form == "ratio":
        num = sigma.sign
        den = 1
        for i in range(1, n + 1):
            for j in range(i + 1, n + 1):
                num = num * f_weight(xi[sigma(i) - 1], xi[sigma(j) - 1], params)
                den = den * f_weight(xi[i - 1], xi[j - 1], params)
        if np.any(den == 0):
            raise SingularInputError("vanishing denominator in A_sigma")
        return num / den
    raise ValueError(f"unknown form {form!r}")


def default_small_radius(params: SystemParams) -> float:
    """``r = p/2``: then ``r (1 + q r) < p`` and all amplitude poles lie outside ``C_r``."""
    return float(params.p) / 2


@dataclass
class BetheResult:
    value: float
    imag: float
    method: str
    nodes: int
    radius: float | None
    reflected: bool = False


def _check_sizes(y: Configuration, x: Configuration):
    if len(x) != len(y):
        raise ValueError("X and Y must have the same number of particles")
    if len(y) > MAX_PARTICLES:
        raise CostError(f"N = {len(y)} exceeds the cap N <= {MAX_PARTICLES} (cost N! M^N)")


class _SmallContour:
    """Per-(Y, t, params, M, r) data shared by every σ."""

    def __init__(self, y: Configuration, t: float, params: SystemParams, nodes: int, radius: float | None):
        if not params.p > 0:
            raise ValueError("the small-contour formula needs p > 0")
        self.y, self.t, self.params = y, t, params
        self.radius = default_small_radius(params) if radius is None else radius
        self.grid = circle(self.radius, nodes)
        z = self.grid.nodes
        p, q = float(params.p), float(params.q)
        fmat = p + q * z[:, None] * z[None, :] - z[:, None]
        if np.abs(fmat).min() <= MIN_DENOMINATOR:
            raise SingularInputError("contour too close to a pole of A_sigma")
        # ratio[a, b] = -f(ξ_b, ξ_a) / f(ξ_a, ξ_b) with ξ_a the smaller-index variable
        self.ratio = -fmat.T / fmat
        eps = p / z + q * z - 1
        self.base = [self.grid.weights * z ** (-yi - 1) * np.exp(eps * t) for yi in y]
        self.z = z

    def _operands(self, sigma: Permutation, vectors):
        n = len(sigma)
        subs = [_AXES[j] for j in range(n)]
        ops = list(vectors)
        for l, k in inverted_value_pairs(sigma):
            subs.append(_AXES[l - 1] + _AXES[k - 1])
            ops.append(self.ratio)
        return subs, ops

    def term(self, sigma: Permutation, x: Configuration) -> complex:
        pos = sigma.inverse()
        vectors = [self.base[j] * self.z ** x[pos(j + 1) - 1] for j in range(len(x))]
        subs, ops = self._operands(sigma, vectors)
        return complex(np.einsum(",".join(subs) + "->", *ops, optimize=True))

    def tensor(self, sigma: Permutation) -> np.ndarray:
        n = len(sigma)
        subs, ops = self._operands(sigma, self.base)
        return np.einsum(",".join(subs) + "->" + _AXES[:n], *ops, optimize=True)


def _small_contour_sum(y, x, t, params, nodes, radius, skip_identity=False) -> complex:
    ctx = _SmallContour(y, t, params, nodes, radius)
    terms = [ctx.term(s, x) for s in all_permutations(len(y)) if not (skip_identity and s.is_identity())]
    return kahan_sum(terms)


def default_nodes(n: int) -> int:
    # trapezoid error decays roughly like 0.6^M (nearest amplitude pole)
    return 64 if n <= 3 else 40


def transition_probability(y, x, t: float, params: SystemParams, nodes: int | None = None,
                           radius: float | None = None, details: bool = False):
    """``P_Y(X; t)`` from the N-fold contour integral over ``C_r``.

    The TASEP endpoints (``p = 0`` or ``q = 0``) go to the determinant formula.
    Configurations with ``Σ x_i < Σ y_i`` are evaluated through the mirror
    process so the integrand stays of moderate size.
    """
    y, x = Configuration(y), Configuration(x)
    _check_sizes(y, x)
    if t < 0:
        raise ValueError("t must be non-negative")
    if params.q == 0 or params.p == 0:
        value = tasep_transition_determinant(y, x, t, params)
        res = BetheResult(value, 0.0, "tasep-determinant", 0, None, params.p == 0)
        return res if details else value
    nodes = nodes or default_nodes(len(y))
    reflect = sum(x) < sum(y)
    if reflect:
        y, x, params = y.reflected(), x.reflected(), params.reflected()
    raw = _small_contour_sum(y, x, t, params, nodes, radius)
    r = default_small_radius(params) if radius is None else radius
    res = BetheResult(raw.real, raw.imag, "bethe-contour", nodes, r, reflect)
    return res if details else res.value


def _table_values(y: Configuration, t: float, params: SystemParams, xs: np.ndarray, nodes: int,
                  radius) -> np.ndarray:
    """Trapezoid sums for every row of ``xs`` (final configurations), one FFT per σ."""
    ctx = _SmallContour(y, t, params, nodes, radius)
    m, n = nodes, len(y)
    acc = np.zeros(len(xs), dtype=complex)
    comp = np.zeros(len(xs), dtype=complex)
    for sigma in all_permutations(n):
        # G[e] = Σ_grid H(j) Π_j e^{2πi e_j j / M}; variable j carries exponent x_{σ^{-1}(j)}
        g = np.fft.ifftn(ctx.tensor(sigma)) * m**n
        pos = sigma.inverse()
        idx = tuple(xs[:, pos(j + 1) - 1] % m for j in range(n))
        term = g[idx] - comp
        tot = acc + term
        comp = (tot - acc) - term
        acc = tot
    sx = xs.sum(axis=1)
    return acc * ctx.radius**sx * np.exp(2j * np.pi * 0.5 * sx / m)


def transition_table(y, t: float, params: SystemParams, states, nodes: int | None = None,
                     radius: float | None = None) -> dict[Configuration, float]:
    """``P_Y(X; t)`` for many final configurations ``X`` at once.

    One FFT per permutation gives the trapezoid sums for every exponent vector;
    the values agree with :func:`transition_probability` at the same ``nodes``.
    Memory is about ``16 M^N`` bytes per permutation.
    """
    y = Configuration(y)
    if len(y) > MAX_PARTICLES:
        raise CostError(f"N = {len(y)} exceeds the cap N <= {MAX_PARTICLES}")
    states = [Configuration(x) for x in states]
    if nodes is None:
        nodes = default_nodes(len(y))
    if params.q == 0 or params.p == 0:
        return {x: tasep_transition_determinant(y, x, t, params) for x in states}
    out = {}
    right = [x for x in states if sum(x) >= sum(y)]
    left = [x for x in states if sum(x) < sum(y)]
    if right:
        vals = _table_values(y, t, params, np.array(right, dtype=np.int64), nodes, radius)
        out.update(zip(right, vals.real))
    if left:
        xs = np.array([x.reflected() for x in left], dtype=np.int64)
        vals = _table_values(y.reflected(), t, params.reflected(), xs, nodes, radius)
        out.update(zip(left, vals.real))
    return {x: float(out[x]) for x in states}


def _entry_radius(n_exp: int, power: int, t: float, nodes: int) -> float:
    # minimise log|ξ^{n_exp} (1-ξ)^{power} e^{t/ξ}| over admissible radii
    hi = 0.6 if power < 0 else 8.0
    lo = max(0.02, 2.0 * math.e * t / nodes)
    if lo >= hi:
        return hi
    rs = np.geomspace(lo, hi, 80)
    logg = n_exp * np.log(rs) + power * np.log1p(rs) + t / rs
    return float(rs[np.argmin(logg)])


def _tasep_entry(n_exp: int, power: int, t: float, nodes: int) -> float:
    """``(1/2πi)∮ (1-ξ)^{power} ξ^{n_exp} e^{(1/ξ - 1) t} dξ`` on a circle inside ``|ξ| < 1``."""
    g = circle(_entry_radius(n_exp, power, t, nodes), nodes)
    z = g.nodes
    return float(np.dot(g.weights, (1 - z) ** power * z**n_exp * np.exp((1 / z - 1) * t)).real)


def tasep_transition_determinant(y, x, t: float, params: SystemParams | None = None,
                                 nodes: int = 128) -> float:
    """Schütz's determinant ``det[∮ (1-ξ)^{j-i} ξ^{x_i - y_j - 1} e^{(ξ^{-1}-1)t} dξ]``.

    Written for right-moving TASEP (``p = 1``); ``p = 0`` is handled by mirroring.
    """
    y, x = Configuration(y), Configuration(x)
    if len(x) != len(y):
        raise ValueError("X and Y must have the same number of particles")
    if params is not None and params.p == 0:
        y, x = y.reflected(), x.reflected()
    elif params is not None and params.q != 0:
        raise ValueError("the determinant formula is for totally asymmetric hopping")
    n = len(y)
    mat = np.empty((n, n))
    for i in range(n):
        for j in range(n):
            mat[i, j] = _tasep_entry(x[i] - y[j] - 1, j - i, t, nodes)
    return float(np.linalg.det(mat))


def boundary_relation_residual(sigma: Permutation, i: int, xi, params: SystemParams, y=None):
    """``F_σ f(ξ_σ(i+1), ξ_σ(i)) + F_{T_iσ} f(ξ_σ(i), ξ_σ(i+1))`` with ``F_σ = A_σ Π ξ_j^{-y_j-1}``."""
    n = len(sigma)
    if not 1 <= i < n:
        raise ValueError("i must lie in 1..N-1")
    y = [0] * n if y is None else list(y)
    common = 1
    for xj, yj in zip(xi, y):
        common = common * xj ** (-yj - 1)
    a, b = xi[sigma(i) - 1], xi[sigma(i + 1) - 1]
    f_sigma = a_sigma(sigma, xi, params) * common
    f_swap = a_sigma(sigma.swap_positions(i), xi, params) * common
    return f_sigma * f_weight(b, a, params) + f_swap * f_weight(a, b, params)


def initial_condition_offdiagonal(y, x, params: SystemParams, nodes: int = 32,
                                  radius: float | None = None) -> float:
    """``Σ_{σ ≠ id} I(σ)``: the non-identity permutations' share of ``P_Y(X; 0)``."""
    y, x = Configuration(y), Configuration(x)
    _check_sizes(y, x)
    if len(y) == 1:
        return 0.0
    return _small_contour_sum(y, x, 0.0, params, nodes, radius, skip_identity=True).real


def generator_rhs(prob, x, params: SystemParams) -> float:
    """Right side of the master equation (with exclusion) at ``X`` for a callable ``prob(X)``."""
    x = list(Configuration(x))
    occupied = set(x)
    total = 0.0
    n = len(x)
    for i, xi in enumerate(x):
        # inflow: particle i came from xi-1 (right hop) or xi+1 (left hop)
        for src, rate in ((xi - 1, params.p), (xi + 1, params.q)):
            if rate and src not in occupied:
                prev = x.copy()
                prev[i] = src
                total += rate * prob(Configuration(prev))
        # outflow
        if params.p and (i == n - 1 or x[i + 1] != xi + 1):
            total -= params.p * prob(Configuration(x))
        if params.q and (i == 0 or x[i - 1] != xi - 1):
            total -= params.q * prob(Configuration(x))
    return total
