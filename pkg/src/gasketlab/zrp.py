"""Boundary-driven zero-range process on ``Γ_n``.

A particle leaves an interior site ``x`` at rate ``g(ξ(x))`` towards each
of its four neighbours; landing on a corner ``a_i`` removes it. Each site
next to ``a_i`` receives particles at rate ``φ(α_i)``. The process is run
in CTMC time ``τ = 5**n t`` for macroscopic time ``t``.

Invariant product measures have marginals ``P(k) ∝ λ**k / g(k)!`` with
``g(k)! = g(1)···g(k)``; the mean density ``ρ(λ)`` and its inverse
``φ(ρ)`` connect the particle system to ``∂_t u = Δφ(u)``.
"""

from __future__ import annotations

import math
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import _kernels as K
from .errors import DivergenceError, DomainError, NumericalError, TruncationError, ValidationError
from .gasket import GasketGraph, TriangleBlock, block_of
from .operators import as_values, harmonic_function

RNG_ALGORITHM = "numpy.random.PCG64"
K_MAX = 1024
SERIES_RTOL = 1e-12
SAMPLE_TAIL = 1e-9
UNIFORM_CHUNK = 1 << 16


# -- rates -------------------------------------------------------------------


@dataclass(frozen=True)
class RateFunction:
    """Jump rate ``g: ℕ -> [0, ∞)`` with ``g(0) = 0``.

    ``table`` holds ``g(0..K)``; beyond ``K`` the last increment is
    continued linearly. ``monotone`` records condition (C); ``sg_a2`` and
    ``sg_k0`` are carried for documentation only.
    """

    name: str
    table: tuple
    monotone: bool = True
    k_max: int = K_MAX
    sg_a2: float | None = None
    sg_k0: int | None = None

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 1 or len(t) < 2:
            raise ValidationError("rate table needs g(0) and at least g(1)")
        if t[0] != 0.0:
            raise ValidationError("rate function must satisfy g(0) = 0")
        if np.any(t < 0) or not np.all(np.isfinite(t)):
            raise ValidationError("rates must be finite and non-negative")
        if np.any(t[1:] <= 0):
            raise ValidationError("g(k) must be positive for k >= 1")
        if self.monotone and np.any(np.diff(t) < 0):
            raise ValidationError("monotone flag set but the table decreases")
        if t[-1] - t[-2] < 0:
            raise ValidationError("the tail extension of the table must be non-decreasing")

    def values(self, kmax: int) -> np.ndarray:
        """``g(0..kmax)`` as a float array."""
        t = np.asarray(self.table, dtype=float)
        if kmax < len(t):
            return t[: kmax + 1].copy()
        slope = t[-1] - t[-2]
        extra = t[-1] + slope * np.arange(1, kmax - len(t) + 2)
        return np.concatenate([t, extra])

    def __call__(self, k):
        k = np.asarray(k, dtype=np.int64)
        return self.values(int(k.max(initial=1)))[k]

    @property
    def radius(self) -> float:
        """Radius of convergence ``λ* = 1/limsup (g(k)!)**(1/k)`` of ``Z``."""
        t = np.asarray(self.table, dtype=float)
        if t[-1] - t[-2] > 0:
            return math.inf
        return 1.0 / t[-1]

    def log_factorials(self, kmax: int) -> np.ndarray:
        g = self.values(kmax)
        out = np.zeros(kmax + 1)
        out[1:] = np.cumsum(np.log(g[1:]))
        return out


def rate_linear() -> RateFunction:
    """``g(k) = k`` (independent walkers)."""
    return RateFunction("linear", (0.0, 1.0))


def rate_indicator() -> RateFunction:
    """``g(k) = 1{k > 0}``."""
    return RateFunction("indicator", (0.0, 1.0, 1.0))


def rate_from_table(values, monotone=None) -> RateFunction:
    values = tuple(float(v) for v in values)
    if monotone is None:
        monotone = bool(np.all(np.diff(values) >= 0))
    return RateFunction("table", values, monotone=monotone)


def _log_weights(rate: RateFunction, phi: float, kmax: int) -> np.ndarray:
    k = np.arange(kmax + 1)
    with np.errstate(divide="ignore"):
        return k * np.log(phi) - rate.log_factorials(kmax)


def _truncation(rate: RateFunction, phi: float, rtol: float) -> int:
    """Smallest ``K`` whose geometric tail bound for ``Σ k w_k`` is below ``rtol``."""
    if phi == 0.0:
        return 1
    kmax = 16
    while True:
        lw = _log_weights(rate, phi, kmax + 1)
        g = rate.values(kmax + 1)
        q = phi / g[kmax + 1]
        if q < 1.0:
            w = np.exp(lw - lw.max())
            z = w[: kmax + 1].sum()
            tail = w[kmax] * (kmax * q / (1 - q) + q / (1 - q) ** 2)
            mean = (np.arange(kmax + 1) * w[: kmax + 1]).sum()
            if tail <= rtol * max(mean, z * 1e-300):
                return kmax
        if kmax >= rate.k_max:
            raise TruncationError(f"series for φ={phi} not converged within K_max={rate.k_max}")
        kmax = min(2 * kmax, rate.k_max)


def marginal_pmf(rate: RateFunction, phi: float, rtol: float = SERIES_RTOL) -> np.ndarray:
    """Truncated ``P(k) ∝ φ**k / g(k)!``, normalized."""
    if phi < 0:
        raise DomainError("fugacity must be non-negative")
    if phi >= rate.radius:
        raise DivergenceError(f"fugacity {phi} at or above the radius {rate.radius}")
    kmax = _truncation(rate, phi, rtol)
    lw = _log_weights(rate, phi, kmax)
    w = np.exp(lw - lw.max())
    return w / w.sum()


def rho_of_phi(rate: RateFunction, phi: float) -> float:
    """Mean occupation ``ρ(φ)`` under the product marginal."""
    if phi == 0.0:
        return 0.0
    p = marginal_pmf(rate, phi)
    return float(np.arange(len(p)) @ p)


def phi_of_rho(rate: RateFunction, rho: float) -> float:
    """Fugacity ``φ(ρ)`` with ``ρ(φ(ρ)) = ρ``."""
    if rho < 0:
        raise DomainError("density must be non-negative")
    if rho == 0.0:
        return 0.0
    lam_star = rate.radius
    if math.isinf(lam_star):
        hi = 1.0
        while rho_of_phi(rate, hi) < rho:
            hi *= 2.0
            if hi > 1e12:
                raise DomainError(f"density {rho} out of reach")
    else:
        gap = 0.5
        while True:
            hi = lam_star * (1.0 - gap)
            try:
                if rho_of_phi(rate, hi) >= rho:
                    break
            except TruncationError as exc:
                raise DomainError(f"density {rho} too close to ρ* for this rate") from exc
            gap /= 2.0
    return float(brentq(lambda s: rho_of_phi(rate, s) - rho, 0.0, hi, xtol=1e-15, rtol=1e-15, maxiter=500))


def phi_of_rho_array(rate: RateFunction, rho) -> np.ndarray:
    """Vectorized :func:`phi_of_rho`; closed forms for the linear and indicator rates."""
    rho = np.asarray(rho, dtype=float)
    if rate.name == "linear":
        return rho.copy()
    if rate.name == "indicator":
        return rho / (1.0 + rho)
    cache = {}
    out = np.empty_like(rho)
    for idx, r in np.ndenumerate(rho):
        key = float(r)
        if key not in cache:
            cache[key] = phi_of_rho(rate, key)
        out[idx] = cache[key]
    return out


# -- ensembles ---------------------------------------------------------------


@dataclass
class Ensemble:
    """Product measure on the interior with site fugacities ``λ(x)``."""

    graph: GasketGraph
    rate: RateFunction
    fugacity: np.ndarray

    def __post_init__(self):
        lam = np.array(as_values(self.graph, self.fugacity), dtype=float)
        if np.any(lam < 0):
            raise ValidationError("fugacities must be non-negative")
        if np.any(lam[self.graph.interior] >= self.rate.radius):
            raise DivergenceError("fugacity at or above the radius of convergence")
        self.fugacity = lam

    @classmethod
    def from_density(cls, g: GasketGraph, rate: RateFunction, rho) -> "Ensemble":
        rho = as_values(g, rho)
        return cls(g, rate, phi_of_rho_array(rate, rho))

    def density(self) -> np.ndarray:
        out = np.zeros(self.graph.n_vertices)
        for v in self.graph.interior:
            out[v] = rho_of_phi(self.rate, float(self.fugacity[v]))
        return out


def stationary_ensemble(g: GasketGraph, rate: RateFunction, alpha) -> Ensemble:
    """Fugacity-harmonic product measure with ``λ(a_i) = φ(α_i)``."""
    phis = [phi_of_rho(rate, float(a)) for a in alpha]
    return Ensemble(g, rate, harmonic_function(g, *phis))


def sample_product(e: Ensemble, seed=None, rng=None) -> np.ndarray:
    """Occupations drawn site by site by inverse CDF; corners stay 0."""
    if rng is None:
        rng = np.random.default_rng(seed)
    g = e.graph
    occ = np.zeros(g.n_vertices, dtype=np.int64)
    interior = g.interior
    u = rng.random(len(interior))
    lam = e.fugacity[interior]
    for value in np.unique(lam):
        if value == 0.0:
            continue
        sel = np.nonzero(lam == value)[0]
        p = marginal_pmf(e.rate, float(value), rtol=1e-15)
        cdf = np.cumsum(p)
        if 1.0 - cdf[-1] > SAMPLE_TAIL:
            raise TruncationError("sampling tail mass above tolerance")
        cdf[-1] = 1.0
        occ[interior[sel]] = np.searchsorted(cdf, u[sel], side="right")
    return occ


# -- simulation --------------------------------------------------------------


def _block_tables(rate, members_corner_alpha, size, smax):
    """``φ(avg)`` and ``φ(avg)(1+avg)`` for ``S = 0..smax`` interior particles."""
    S = np.arange(smax + 1, dtype=float)
    avg = (S + members_corner_alpha) / size
    phi = phi_of_rho_array(rate, avg)
    return phi, phi * (1.0 + avg)


@dataclass
class IntervalStats:
    """Integrals over one grid interval ``[t0, t1]`` in macroscopic time.

    ``site[q]`` rows: ``∫ξ``, ``∫g(ξ)``, ``∫ξ g(ξ)``, ``∫ξ (s-t0)``,
    ``∫g(ξ) (s-t0)``. ``block[q]`` rows: ``∫φ(avg)``, ``∫φ(avg)(1+avg)``.
    """

    t0: float
    t1: float
    site: np.ndarray
    block: np.ndarray


class Simulation:
    """One replica of the zero-range process.

    Parameters
    ----------
    g, rate, alpha
        Graph, jump rate and boundary densities ``α_i``.
    initial : array of int
        Occupations per vertex (corners ignored).
    seed : int or None
        Seeds ``numpy.random.default_rng``; all uniforms come from it.
    blocks : sequence of TriangleBlock
        Blocks whose ``φ(average)`` integrals are tracked.
    corner_mode : {"alpha", "omit"}
        How corners inside a tracked block enter its average.
    """

    def __init__(self, g: GasketGraph, rate: RateFunction, alpha, initial, seed=None, *,
                 blocks=(), corner_mode="alpha", rng=None):
        alpha = tuple(float(a) for a in alpha)
        if len(alpha) != 3 or min(alpha) < 0:
            raise ValidationError("alpha needs three non-negative densities")
        if corner_mode not in ("alpha", "omit"):
            raise ValidationError(f"unknown corner mode {corner_mode!r}")
        self.g, self.rate, self.alpha = g, rate, alpha
        self.rng = rng if rng is not None else np.random.default_rng(seed)
        self.seed = seed
        n = g.level
        self.scale = 5.0**n
        V = g.n_vertices
        occ = np.array(initial, dtype=np.int64)
        if occ.shape != (V,):
            raise ValidationError(f"initial configuration must have {V} entries")
        if np.any(occ < 0):
            raise ValidationError("occupations must be non-negative")
        occ[list(g.boundary)] = 0
        self.occ = occ
        self.is_corner = ~g.interior_mask
        self.deg = np.where(g.interior_mask, g.degree, 0).astype(np.int64)
        self.nbr = np.ascontiguousarray(g.neighbors, dtype=np.int64)
        fug = [phi_of_rho(rate, a) for a in alpha]
        self.boundary_fugacity = tuple(fug)
        inj = np.zeros(V)
        for i, a in enumerate(g.boundary):
            for y in g.neighbors_of(a):
                if g.interior_mask[y]:
                    inj[y] += fug[i]
        self.inj = inj
        self.interior = np.ascontiguousarray(g.interior, dtype=np.int64)
        m = len(self.interior)
        P = 1
        while P < m:
            P *= 2
        self.P = P
        self.leaf_of = -np.ones(V, dtype=np.int64)
        self.leaf_of[self.interior] = np.arange(m)
        self.site_of = np.zeros(P, dtype=np.int64)
        self.site_of[:m] = self.interior
        kmax = max(64, int(occ.max(initial=0)) * 2 + 8)
        self.gtab = rate.values(kmax)
        self.tree = np.zeros(2 * P)
        self._rebuild_tree()

        self.blocks = list(blocks)
        B = len(self.blocks)
        counts = np.zeros(V + 1, dtype=np.int64)
        pairs = []
        self.block_const = np.zeros(B)
        self.block_size = np.zeros(B)
        for b, blk in enumerate(self.blocks):
            if blk.level != n:
                raise ValidationError("tracked blocks must come from the same level")
            mem = np.asarray(blk.members)
            corners = [v for v in mem if self.is_corner[v]]
            if corner_mode == "alpha":
                self.block_const[b] = sum(alpha[g.boundary.index(int(v))] for v in corners)
                self.block_size[b] = len(mem)
            else:
                self.block_size[b] = len(mem) - len(corners)
            for v in mem:
                if not self.is_corner[v]:
                    pairs.append((int(v), b))
        pairs.sort()
        for v, _ in pairs:
            counts[v + 1] += 1
        self.bptr = np.cumsum(counts)
        self.bidx = np.array([b for _, b in pairs], dtype=np.int64)
        self.bsum = np.zeros(B, dtype=np.int64)
        for v, b in pairs:
            self.bsum[b] += occ[v]
        self.corner_mode = corner_mode
        self._smax = 0
        self.tabF = np.zeros((B, 1))
        self.tabH = np.zeros((B, 1))
        self._grow_block_tables(max(64, 2 * int(self.bsum.max(initial=0)) + 8))

        self.clock = np.array([0.0, -1.0, 0.0])
        self.ctr = np.zeros(5, dtype=np.int64)
        self.U = np.zeros(0)
        self.uniforms_drawn = 0
        self.last = np.zeros(V)
        self.acc = np.zeros((5, V))
        self.blast = np.zeros(B)
        self.bacc = np.zeros((2, B))
        self.initial_particles = int(occ[self.interior].sum())
        self.wall = 0.0

    # internal helpers

    def _rebuild_tree(self):
        leaves = np.zeros(self.P)
        x = self.interior
        leaves[: len(x)] = self.deg[x] * self.gtab[self.occ[x]] + self.inj[x]
        self.tree[:] = 0.0
        self.tree[self.P :] = leaves
        K.tree_build(self.tree, self.P)

    def _grow_block_tables(self, smax):
        B = len(self.blocks)
        F = np.zeros((B, smax + 1))
        H = np.zeros((B, smax + 1))
        for b in range(B):
            F[b], H[b] = _block_tables(self.rate, self.block_const[b], self.block_size[b], smax)
        self.tabF, self.tabH, self._smax = F, H, smax

    @property
    def time(self) -> float:
        """Macroscopic time."""
        return self.clock[K.TAU] / self.scale

    @property
    def counters(self) -> dict:
        c = self.ctr
        return {
            "events": int(c[K.EVENTS]),
            "jumps": int(c[K.JUMPS]),
            "injections": int(c[K.INJECTIONS]),
            "annihilations": int(c[K.ANNIHILATIONS]),
            "uniforms": int(self.uniforms_drawn),
        }

    def particles(self) -> int:
        return int(self.occ[self.interior].sum())

    def total_rate_error(self) -> float:
        """Relative gap between the cached total rate and a recomputation."""
        x = self.interior
        fresh = float(np.sum(self.deg[x] * self.gtab[self.occ[x]] + self.inj[x]))
        return abs(fresh - self.tree[1]) / max(fresh, 1e-300)

    def advance(self, t: float) -> IntervalStats:
        """Run to macroscopic time ``t`` and return the interval integrals."""
        tau_end = t * self.scale
        t0 = self.clock[K.TAU]
        if tau_end < t0 - 1e-12 * max(1.0, t0):
            raise ValidationError("cannot advance backwards in time")
        tau_end = max(tau_end, t0)
        start = _time.perf_counter()
        while True:
            status = K.advance(
                tau_end, self.clock, self.ctr, self.U, self.occ, self.gtab, self.deg, self.inj, self.nbr,
                self.is_corner, self.tree, self.P, self.leaf_of, self.site_of, self.last, self.acc,
                self.bptr, self.bidx, self.bsum, self.blast, self.tabF, self.tabH, self.bacc,
            )
            if status == 0:
                break
            if status == 1:
                self.U = self.rng.random(UNIFORM_CHUNK)
                self.uniforms_drawn += UNIFORM_CHUNK
                self.ctr[K.UPOS] = 0
            elif status == 2:
                self.gtab = self.rate.values(2 * (len(self.gtab) - 1))
                self._rebuild_tree()
            elif status == 3:
                self._grow_block_tables(2 * self._smax)
            else:
                raise NumericalError("rate index audit failed: cached total rate drifted")
        K.flush_all(tau_end, t0, self.occ, self.gtab, self.last, self.acc, self.bsum, self.blast,
                    self.tabF, self.tabH, self.bacc, self.interior)
        site = self.acc.copy()
        site[:3] /= self.scale
        site[3:] /= self.scale**2
        block = self.bacc / self.scale
        self.acc[:] = 0.0
        self.bacc[:] = 0.0
        self.clock[K.T0] = tau_end
        self.wall += _time.perf_counter() - start
        return IntervalStats(t0=t0 / self.scale, t1=tau_end / self.scale, site=site, block=block)

    def block_average(self, b: int) -> float:
        return float((self.bsum[b] + self.block_const[b]) / self.block_size[b])


def block_average(g: GasketGraph, occ, block: TriangleBlock, alpha=(0.0, 0.0, 0.0), corner_mode="alpha") -> float:
    """Mean of ``ξ`` over ``block``; corners count as their reservoir ``α_i``."""
    if block.level != g.level:
        raise ValidationError("block and configuration must share the level")
    occ = np.asarray(occ)
    total, size = 0.0, 0
    for v in block.members:
        if g.interior_mask[v]:
            total += float(occ[v])
            size += 1
        elif corner_mode == "alpha":
            total += float(alpha[g.boundary.index(int(v))])
            size += 1
        elif corner_mode != "omit":
            raise ValidationError(f"unknown corner mode {corner_mode!r}")
    return total / size if size else 0.0


# -- replicas ----------------------------------------------------------------


def run_replicas(task, replicas: int, base_seed: int, threads: int = 1) -> list:
    """``task(r, seed)`` for ``r < replicas`` with ``seed = base_seed + r``.

    Results come back ordered by replica id whatever the thread count.
    """
    if replicas < 1:
        raise ValidationError("need at least one replica")
    if threads <= 1:
        return [task(r, base_seed + r) for r in range(replicas)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(task, r, base_seed + r) for r in range(replicas)]
        return [f.result() for f in futures]


def macro_grid(t: float, n_uniform: int = 20, n_geometric: int = 0) -> np.ndarray:
    parts = [np.linspace(0.0, t, n_uniform + 1)]
    if n_geometric and t > 0:
        parts.append(t * np.geomspace(1e-4, 1.0, n_geometric))
    return np.unique(np.concatenate(parts))


@dataclass
class ReplicaOutput:
    seed: int
    final: np.ndarray
    times: np.ndarray
    snapshots: np.ndarray | None
    site_integrals: np.ndarray
    block_integrals: np.ndarray
    counters: dict
    initial_particles: int
    wall: float
    intervals: list = field(default_factory=list)


def simulate(g: GasketGraph, rate: RateFunction, alpha, initial, t: float, seed: int, *,
             grid=None, blocks=(), corner_mode="alpha", snapshots=False, keep_intervals=False,
             initial_sampler=None, rng=None) -> ReplicaOutput:
    """One replica to macroscopic time ``t``.

    ``initial`` is a configuration or, when ``initial_sampler`` is given, is
    ignored and the configuration is drawn by ``initial_sampler(rng)`` from
    the replica's own generator. ``rng`` continues an existing generator
    instead of seeding a new one.
    """
    if rng is None:
        rng = np.random.default_rng(seed)
    if initial_sampler is not None:
        initial = initial_sampler(rng)
    sim = Simulation(g, rate, alpha, initial, blocks=blocks, corner_mode=corner_mode, rng=rng)
    sim.seed = seed
    times = macro_grid(t) if grid is None else np.asarray(grid, dtype=float)
    if times[0] != 0.0:
        times = np.concatenate([[0.0], times])
    snaps = [sim.occ.copy()] if snapshots else None
    site_tot = np.zeros((3, g.n_vertices))
    block_tot = np.zeros((2, len(sim.blocks)))
    kept = []
    for t1 in times[1:]:
        st = sim.advance(float(t1))
        site_tot += st.site[:3]
        block_tot += st.block
        if snapshots:
            snaps.append(sim.occ.copy())
        if keep_intervals:
            kept.append(st)
    return ReplicaOutput(
        seed=seed,
        final=sim.occ.copy(),
        times=times,
        snapshots=None if snaps is None else np.array(snaps),
        site_integrals=site_tot,
        block_integrals=block_tot,
        counters=sim.counters,
        initial_particles=sim.initial_particles,
        wall=sim.wall,
        intervals=kept,
    )


# -- observables -------------------------------------------------------------


@dataclass(frozen=True)
class Estimate:
    mean: float
    se: float
    samples: int

    @classmethod
    def of(cls, values) -> "Estimate":
        v = np.asarray(values, dtype=float)
        se = float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else math.nan
        return cls(float(v.mean()), se, len(v))


def one_block_diagnostic(g: GasketGraph, rate: RateFunction, alpha, x: int, k: int, t: float,
                         replicas: int, base_seed: int, *, form="rate", initial="stationary",
                         corner_mode="alpha", threads=1) -> Estimate:
    """``E|∫_0^t {g(ξ_s(x)) - φ(ξ^k_s(x))} ds|`` by Monte Carlo.

    ``form="weighted"`` uses ``ξ g(ξ)`` against ``φ(avg)(1 + avg)``. The
    initial law is the stationary product measure unless a sampler
    ``initial(rng)`` is passed.
    """
    if form not in ("rate", "weighted"):
        raise ValidationError(f"form must be 'rate' or 'weighted', got {form!r}")
    blk = block_of(g, x, k)
    if initial == "stationary":
        ens = stationary_ensemble(g, rate, alpha)

        def sampler(rng):
            return sample_product(ens, rng=rng)
    else:
        sampler = initial

    def task(r, seed):
        out = simulate(g, rate, alpha, None, t, seed, grid=[0.0, t], blocks=[blk],
                       corner_mode=corner_mode, initial_sampler=sampler)
        if form == "rate":
            return out.site_integrals[1, x] - out.block_integrals[0, 0]
        return out.site_integrals[2, x] - out.block_integrals[1, 0]

    vals = run_replicas(task, replicas, base_seed, threads)
    return Estimate.of(np.abs(vals))


def mean_occupation(g: GasketGraph, rate: RateFunction, alpha, initial, t: float, replicas: int,
                    base_seed: int, threads: int = 1):
    """Monte Carlo mean and per-site sample variance of ``ξ_t``."""

    def task(r, seed):
        return simulate(g, rate, alpha, initial, t, seed, grid=[0.0, t]).final

    finals = np.array(run_replicas(task, replicas, base_seed, threads), dtype=float)
    return finals.mean(axis=0), finals.var(axis=0, ddof=1)


def conservation_audit(out: ReplicaOutput) -> bool:
    """Closed bulk (``α = 0``): initial count = final count + annihilations."""
    return out.initial_particles == int(out.final.sum()) + out.counters["annihilations"] - out.counters["injections"]


def coupled_ordering(g: GasketGraph, rate: RateFunction, alpha, low, high, t: float, seed: int,
                     samples: int = 50) -> np.ndarray:
    """Run the basic coupling from ``low <= high``; ordering flag per sample time."""
    low = np.array(low, dtype=np.int64)
    high = np.array(high, dtype=np.int64)
    if np.any(low > high):
        raise ValidationError("coupled runs need ordered initial configurations")
    sim = Simulation(g, rate, alpha, high, seed=seed)
    taus = np.linspace(0.0, t * sim.scale, samples)
    need = 3 * 4096
    gtab = rate.values(max(64, 4 * int(high.max(initial=0)) + 8))
    while True:
        a, b = low.copy(), high.copy()
        a[list(g.boundary)] = 0
        b[list(g.boundary)] = 0
        U = np.random.default_rng(seed).random(need)
        ordered = np.zeros(samples, dtype=np.bool_)
        used = K.coupled_run(t * sim.scale, U, a, b, gtab, sim.deg, sim.inj, sim.nbr, sim.is_corner,
                             sim.interior, taus, ordered)
        if used == -1:
            need *= 4
            continue
        if used == -2:
            gtab = rate.values(2 * (len(gtab) - 1))
            continue
        return ordered
