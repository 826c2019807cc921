"""Shared primitives: hop parameters, configurations, permutations and
periodic-trapezoid quadrature on circles.

The algebraic helpers (:func:`epsilon`, :func:`f_weight`,
:func:`tau_binomial`) only use ``+ - * /`` and integer powers, so they work
unchanged on floats, complex numbers, ``fractions.Fraction``, gmpy2 scalars
and numpy arrays of any of these.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np


@dataclass(frozen=True)
class SystemParams:
    """Right-hop weight ``p`` and left-hop weight ``q = 1 - p``."""

    p: float
    q: float

    def __post_init__(self):
        if not 0 <= self.p <= 1 or not 0 <= self.q <= 1:
            raise ValueError(f"hop weights out of range: p={self.p}, q={self.q}")
        if self.p + self.q != 1:
            raise ValueError(f"p + q must equal 1, got {self.p} + {self.q}")

    @property
    def tau(self):
        if self.q == 0:
            raise ValueError("tau = p/q is undefined when q = 0")
        return self.p / self.q

    @property
    def gamma(self):
        return self.q - self.p

    @property
    def has_tau(self) -> bool:
        return self.q != 0

    def reflected(self) -> "SystemParams":
        """Parameters of the mirror-image process (``p`` and ``q`` swapped)."""
        return SystemParams(self.q, self.p)

    def require_left_drift(self):
        if not self.q > self.p:
            raise ValueError(f"operation requires q > p (got p={self.p})")


def make_params(p) -> SystemParams:
    if isinstance(p, bool) or not isinstance(p, (int, float, Fraction)):
        raise TypeError(f"p must be a real number, got {type(p).__name__}")
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if isinstance(p, int):
        p = float(p)
    return SystemParams(p, 1 - p)


class Configuration(tuple):
    """Occupied sites ``x_1 < ... < x_N`` (also used for initial data ``Y``)."""

    def __new__(cls, sites: Iterable[int]):
        sites = tuple(int(s) for s in sites)
        if not sites:
            raise ValueError("a configuration needs at least one particle")
        if any(b <= a for a, b in zip(sites, sites[1:])):
            raise ValueError(f"sites must be strictly increasing: {sites}")
        return super().__new__(cls, sites)

    @property
    def n(self) -> int:
        return len(self)

    def reflected(self) -> "Configuration":
        """Sites negated and reversed (mirror image through the origin)."""
        return Configuration(-s for s in reversed(self))

    def __repr__(self):
        return f"Configuration({list(self)})"


InitialData = Configuration


class Permutation:
    """A permutation of ``{1..N}`` stored as its image list ``(σ(1), ..., σ(N))``."""

    __slots__ = ("image", "_sign")

    def __init__(self, image: Sequence[int]):
        image = tuple(int(i) for i in image)
        if sorted(image) != list(range(1, len(image) + 1)):
            raise ValueError(f"not a permutation of 1..{len(image)}: {image}")
        self.image = image
        self._sign = None

    @classmethod
    def identity(cls, n: int) -> "Permutation":
        return cls(range(1, n + 1))

    def __len__(self):
        return len(self.image)

    def __call__(self, i: int) -> int:
        return self.image[i - 1]

    def __eq__(self, other):
        return isinstance(other, Permutation) and self.image == other.image

    def __hash__(self):
        return hash(self.image)

    def __repr__(self):
        return f"Permutation({list(self.image)})"

    def inversions(self) -> list[tuple[int, int]]:
        """Position pairs ``i < j`` with ``σ(i) > σ(j)``."""
        im = self.image
        n = len(im)
        return [(i + 1, j + 1) for i in range(n) for j in range(i + 1, n) if im[i] > im[j]]

    @property
    def sign(self) -> int:
        if self._sign is None:
            self._sign = -1 if len(self.inversions()) % 2 else 1
        return self._sign

    def is_identity(self) -> bool:
        return all(v == i + 1 for i, v in enumerate(self.image))

    def inverse(self) -> "Permutation":
        inv = [0] * len(self.image)
        for i, v in enumerate(self.image):
            inv[v - 1] = i + 1
        return Permutation(inv)

    def compose(self, other: "Permutation") -> "Permutation":
        """``(self ∘ other)(i) = self(other(i))``."""
        if len(other) != len(self):
            raise ValueError("size mismatch")
        return Permutation(self.image[o - 1] for o in other.image)

    def swap_positions(self, i: int) -> "Permutation":
        """``T_i σ``: interchange the i-th and (i+1)-st entries of the image."""
        im = list(self.image)
        im[i - 1], im[i] = im[i], im[i - 1]
        return Permutation(im)


def all_permutations(n: int) -> Iterator[Permutation]:
    """All of S_n in lexicographic order of the image list."""
    for im in itertools.permutations(range(1, n + 1)):
        yield Permutation(im)


@dataclass(frozen=True)
class ContourSpec:
    """Circle ``|ξ - center| = radius`` discretised with ``node_count`` points.

    ``offset`` shifts the nodes by a fraction of the angular step; the default
    half step keeps nodes off the real axis, where the kernels' singular points
    live.
    """

    center: complex = 0.0
    radius: float = 1.0
    orientation: int = 1
    node_count: int = 64
    offset: float = 0.5

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        if self.node_count < 4 or self.node_count % 2:
            raise ValueError(f"node_count must be even and >= 4, got {self.node_count}")


@dataclass(frozen=True)
class QuadratureGrid:
    """Nodes ``ξ_j`` and weights ``w_j`` with ``Σ w_j g(ξ_j) ≈ (1/2πi)∮ g(ξ) dξ``."""

    nodes: np.ndarray
    weights: np.ndarray
    spec: ContourSpec = field(compare=False)

    def __len__(self):
        return len(self.nodes)

    def integrate(self, values) -> complex:
        return complex(np.dot(self.weights, values))

    def winding(self, point: complex = 0.0) -> complex:
        """Discrete ``(1/2πi)∮ dξ/(ξ - point)``; ≈ ±1 if the circle encloses ``point``."""
        return complex(np.sum(self.weights / (self.nodes - point)))


def contour_grid(spec: ContourSpec) -> QuadratureGrid:
    m = spec.node_count
    theta = 2 * np.pi * (np.arange(m) + spec.offset) / m
    rel = spec.radius * np.exp(1j * theta)
    nodes = spec.center + rel
    weights = spec.orientation * rel / m
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return QuadratureGrid(nodes, weights, spec)


def circle(radius: float, nodes: int, center: complex = 0.0, orientation: int = 1) -> QuadratureGrid:
    return contour_grid(ContourSpec(center, radius, orientation, nodes))


def epsilon(xi, params: SystemParams):
    """``ε(ξ) = p/ξ + qξ - 1``, the single-particle eigenvalue."""
    if np.any(np.asarray(xi) == 0):
        raise ZeroDivisionError("epsilon(xi) is singular at xi = 0")
    return params.p / xi + params.q * xi - 1


def f_weight(xi, xi2, params: SystemParams):
    """``f(ξ, ξ') = p + q ξ ξ' - ξ``."""
    return params.p + params.q * xi * xi2 - xi


@lru_cache(maxsize=None)
def _gaussian_binomial_coeffs(n: int, k: int) -> tuple[int, ...]:
    # integer polynomial coefficients of [n k]_t, via [n k] = t^k [n-1 k] + [n-1 k-1]
    if k < 0 or k > n:
        return (0,)
    if k == 0 or k == n:
        return (1,)
    a = _gaussian_binomial_coeffs(n - 1, k)
    b = _gaussian_binomial_coeffs(n - 1, k - 1)
    out = [0] * max(len(a) + k, len(b))
    for i, c in enumerate(a):
        out[i + k] += c
    for i, c in enumerate(b):
        out[i] += c
    return tuple(out)


def tau_binomial(n: int, k: int, t):
    """The τ-binomial coefficient ``[n k]_t``.

    Evaluated from its (integer) polynomial coefficients, so exact rationals
    stay exact and ``t = 1`` gives the ordinary binomial coefficient.
    """
    if k < 0 or k > n:
        return 0 * t
    coeffs = _gaussian_binomial_coeffs(n, k)
    acc = 0 * t
    for c in reversed(coeffs):
        acc = acc * t + c
    return acc


def tau_binomial_product(n: int, k: int, t):
    """Product form ``Π_{j<k}(1 - t^{n-j}) / Π_{j=1..k}(1 - t^j)``; undefined at t = 1."""
    if k < 0 or k > n:
        return 0 * t
    num = 1 + 0 * t
    den = 1 + 0 * t
    for j in range(k):
        num = num * (1 - t ** (n - j))
    for j in range(1, k + 1):
        den = den * (1 - t**j)
    return num / den


def q_pochhammer(a, t, terms: int | None = None, tol: float = 1e-17):
    """``(a; t)_∞ = Π_{k≥0} (1 - a t^k)`` for ``|t| < 1`` (floating point)."""
    acc = 1.0 + 0j
    k = 0
    term = a
    while True:
        acc *= 1 - term
        k += 1
        term = term * t
        if terms is not None:
            if k >= terms:
                break
        elif abs(term) < tol:
            break
    return acc


def kahan_sum(values: Iterable) -> complex:
    """Compensated summation in a fixed (iteration) order."""
    s = 0j
    c = 0j
    for v in values:
        y = v - c
        tot = s + y
        c = (tot - s) - y
        s = tot
    return s
