"""Ground truth that does not use any of the contour-integral formulas.

* an exact master-equation solver on a finite window of sites (sparse
  generator plus uniformization, with an explicit Poisson-tail error bound);
* a continuous-time Monte Carlo simulator.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import combinations

import numpy as np
from scipy import sparse, special, stats

from .core import Configuration, SystemParams

BLOCK_SIZE = 4096


@dataclass(frozen=True)
class WindowSpec:
    """Inclusive range of lattice sites ``lo..hi``."""

    lo: int
    hi: int

    def __post_init__(self):
        if not self.lo < self.hi:
            raise ValueError(f"empty window [{self.lo}, {self.hi}]")

    @property
    def size(self) -> int:
        return self.hi - self.lo + 1

    def __contains__(self, site: int) -> bool:
        return self.lo <= site <= self.hi


def jump_margin(t: float, tail: float | None = None) -> int:
    """How far a particle can plausibly travel by time ``t``.

    Without ``tail`` this is ``ceil(t + 6 sqrt(t))``.  With ``tail`` it is the
    smallest ``d`` such that a rate-one Poisson clock rings ``d`` times or more
    with probability below ``tail``.
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if tail is None:
        return math.ceil(t + 6 * math.sqrt(t))
    if t == 0:
        return 0
    return int(stats.poisson.isf(tail, t)) + 1


def default_window(y, t: float, tail: float | None = None) -> WindowSpec:
    margin = max(jump_margin(t, tail), 1)
    return WindowSpec(min(y) - margin, max(y) + margin)


@dataclass
class GeneratorMatrix:
    """Sparse master-equation generator; row ``a`` holds the rates out of state ``a``."""

    states: list[Configuration]
    index: dict
    rates: sparse.csr_matrix
    window: WindowSpec
    params: SystemParams

    @property
    def n_states(self) -> int:
        return len(self.states)

    def exit_rates(self) -> np.ndarray:
        return -self.rates.diagonal()


def build_generator(n: int, window: WindowSpec, params: SystemParams) -> GeneratorMatrix:
    if n < 1 or window.size < n:
        raise ValueError(f"window {window} cannot hold {n} particles")
    sites = range(window.lo, window.hi + 1)
    states = [Configuration(c) for c in combinations(sites, n)]
    index = {s: k for k, s in enumerate(states)}
    rows, cols, vals = [], [], []
    exit_rate = np.zeros(len(states))
    for a, x in enumerate(states):
        occupied = set(x)
        for i, xi in enumerate(x):
            for step, rate in ((1, params.p), (-1, params.q)):
                target = xi + step
                if rate == 0 or target not in window or target in occupied:
                    continue
                y = list(x)
                y[i] = target
                rows.append(a)
                cols.append(index[tuple(y)])
                vals.append(rate)
                exit_rate[a] += rate
    rows.extend(range(len(states)))
    cols.extend(range(len(states)))
    vals.extend(-exit_rate)
    q = sparse.csr_matrix((vals, (rows, cols)), shape=(len(states), len(states)))
    return GeneratorMatrix(states, index, q, window, params)


def evolve_uniformization(gen: GeneratorMatrix, initial, t: float, tol: float = 1e-13) -> np.ndarray:
    """Distribution at time ``t`` started from ``initial``, to ℓ¹ accuracy ``tol``.

    Uniformization: with ``Λ ≥ max exit rate`` and ``P = I + Q/Λ``,
    ``e^{tQ} = Σ_k Pois(k; Λt) P^k``; the series is cut once the remaining
    Poisson mass is below ``tol``, which bounds the ℓ¹ error.
    """
    if t < 0 or tol <= 0:
        raise ValueError("need t >= 0 and tol > 0")
    initial = Configuration(initial)
    if initial not in gen.index:
        raise ValueError(f"{initial} is not a state of the window {gen.window}")
    v = np.zeros(gen.n_states)
    v[gen.index[initial]] = 1.0
    if t == 0:
        return v
    lam = float(gen.exit_rates().max())
    if lam == 0:
        return v
    pt = sparse.identity(gen.n_states, format="csr") + gen.rates / lam
    pt = pt.T.tocsr()
    mu = lam * t
    k_max = int(stats.poisson.isf(tol / 2, mu)) + 1
    weights = stats.poisson.pmf(np.arange(k_max + 1), mu)
    out = weights[0] * v
    for k in range(1, k_max + 1):
        v = pt @ v
        out += weights[k] * v
    return out


def uniformization_table(y, t: float, params: SystemParams, window: WindowSpec | None = None,
                         tol: float = 1e-13) -> dict[Configuration, float]:
    """Convenience wrapper: ``{X: P_Y(X; t)}`` over every state of the window."""
    y = Configuration(y)
    window = window or default_window(y, t)
    gen = build_generator(len(y), window, params)
    v = evolve_uniformization(gen, y, t, tol)
    return dict(zip(gen.states, v))


def poisson_pmf(k, t: float):
    k = np.asarray(k)
    return np.where(k >= 0, stats.poisson.pmf(np.maximum(k, 0), t), 0.0)


def single_particle_pmf(k, t: float, params: SystemParams):
    """Law of the displacement of one particle: ``e^{-t} τ^{k/2} I_k(2 sqrt(pq) t)``."""
    k = np.asarray(k)
    p, q = float(params.p), float(params.q)
    if q == 0:
        return poisson_pmf(k, p * t)
    if p == 0:
        return poisson_pmf(-k, q * t)
    z = 2 * math.sqrt(p * q) * t
    # ive(k, z) = e^{-z} I_k(z)
    return special.ive(k, z) * np.exp(z - t + 0.5 * k * math.log(p / q))


def bessel_series_pmf(k: int, t: float, params: SystemParams, terms: int = 200) -> float:
    """Same law summed directly over (right, left) jump counts with ``right - left = k``."""
    p, q = float(params.p), float(params.q)
    k = int(k)
    total = 0.0
    for left in range(max(0, -k), max(0, -k) + terms):
        right = left + k
        total += stats.poisson.pmf(right, p * t) * stats.poisson.pmf(left, q * t)
    return total


@dataclass
class EmpiricalDistribution:
    counts: dict
    trials: int
    seed: int
    observable: str
    block_size: int = BLOCK_SIZE
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if sum(self.counts.values()) != self.trials:
            raise ValueError("counts do not add up to the number of trials")

    def probability(self, outcome) -> float:
        return self.counts.get(outcome, 0) / self.trials

    def stderr(self, outcome) -> float:
        phat = self.probability(outcome)
        return math.sqrt(max(phat * (1 - phat), 1.0 / self.trials) / self.trials)

    def cdf(self, x: int) -> float:
        """Empirical ``P(X <= x)`` for integer-valued observables."""
        return sum(c for o, c in self.counts.items() if o <= x) / self.trials

    def cdf_stderr(self, x: int) -> float:
        f = self.cdf(x)
        return math.sqrt(max(f * (1 - f), 1.0 / self.trials) / self.trials)


def step_truncation(m: int, t: float) -> int:
    """Number of particles ``{1..N*}`` standing in for the step initial condition."""
    return m + jump_margin(t)


def _simulate_block(y: np.ndarray, p: float, t: float, n_trials: int, rng: np.random.Generator) -> np.ndarray:
    n = y.size
    pos = np.tile(y, (n_trials, 1))
    if t == 0:
        return pos
    # every particle carries a rate-one clock, so attempts form a Poisson(N t) stream
    attempts = rng.poisson(n * t, n_trials)
    rows = np.arange(n_trials)
    big = np.iinfo(np.int64).max // 4
    for step in range(int(attempts.max(initial=0))):
        active = step < attempts
        who = rng.integers(0, n, n_trials)
        right = rng.random(n_trials) < p
        cur = pos[rows, who]
        nxt = np.where(who < n - 1, pos[rows, np.minimum(who + 1, n - 1)], big)
        prv = np.where(who > 0, pos[rows, np.maximum(who - 1, 0)], -big)
        target = np.where(right, cur + 1, cur - 1)
        free = np.where(right, target < nxt, target > prv)
        move = active & free
        pos[rows[move], who[move]] = target[move]
        if n > 1 and not np.all(np.diff(pos, axis=1) > 0):
            raise AssertionError("exclusion or ordering violated")
    return pos


def gillespie_sample(y, params: SystemParams, t: float, trials: int, seed: int,
                     observable: str | int = "configuration", threads: int | None = None,
                     block_size: int = BLOCK_SIZE) -> EmpiricalDistribution:
    """Sample the configuration (or the position of particle ``observable``) at time ``t``.

    Trials are split into fixed blocks; block ``b`` draws from a Philox stream
    keyed by ``(seed, b)``, and blocks are merged in order, so the result does
    not depend on ``threads``.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    y = np.asarray(Configuration(y), dtype=np.int64)
    if observable != "configuration":
        observable = int(observable)
        if not 1 <= observable <= y.size:
            raise ValueError(f"particle index {observable} outside 1..{y.size}")
    p = float(params.p)
    n_blocks = -(-trials // block_size)

    def run(b: int) -> np.ndarray:
        size = min(block_size, trials - b * block_size)
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(b,))))
        return _simulate_block(y, p, t, size, rng)

    threads = threads or 1
    if threads > 1 and n_blocks > 1:
        with ThreadPoolExecutor(threads) as pool:
            blocks = list(pool.map(run, range(n_blocks)))
    else:
        blocks = [run(b) for b in range(n_blocks)]
    final = np.concatenate(blocks)
    counts: dict = {}
    if observable == "configuration":
        uniq, cnt = np.unique(final, axis=0, return_counts=True)
        counts = {Configuration(u): int(c) for u, c in zip(uniq, cnt)}
    else:
        uniq, cnt = np.unique(final[:, observable - 1], return_counts=True)
        counts = {int(u): int(c) for u, c in zip(uniq, cnt)}
    name = "configuration" if observable == "configuration" else f"x_{observable}"
    return EmpiricalDistribution(counts, trials, seed, name, block_size)


def gillespie_step_cdf(m: int, xs, params: SystemParams, t: float, trials: int, seed: int,
                       threads: int | None = None):
    """Empirical ``P(x_m(t) <= x)`` under (truncated) step initial data, with standard errors."""
    n_star = step_truncation(m, t)
    emp = gillespie_sample(range(1, n_star + 1), params, t, trials, seed, observable=m, threads=threads)
    return [(x, emp.cdf(x), emp.cdf_stderr(x)) for x in xs], emp
