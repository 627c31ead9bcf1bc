"""Hydrodynamic-limit experiments: particles against the PDE in ``H_{-1}``.

For every level the particle system starts from a local equilibrium with
density ``u_0`` and runs next to the discrete PDE for ``u_t``. Along each
replica one records ``Q_t = ‖ξ_t - u_t‖²_{-1,n}`` and the two integrals

    F = ∫ 2/3**n Σ_x 𝓕(ξ_s(x), u_s(x)) ds,   𝓕(ξ, u) = (g(ξ) - φ(u))(ξ - u) - g(ξ)
    G = ∫ 3**-2n Σ_x g(ξ_s(x)) Δ_n𝒢(x) ds

so that ``Q_t - Q_0 + F - G`` is a mean-zero martingale when ``α = 0``.
Between grid times ``u`` and ``φ(u)`` are interpolated linearly; the
particle part of each integral is exact.
"""

from __future__ import annotations

import math
import time as _time
from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .gasket import GasketGraph, build_graph
from .green import green_laplacian_diagonal, hminus1_norm_sq
from .operators import as_values, harmonic_extension
from .pde import PdeProblem, PhiFunction, integrate, phi_from_table, phi_linear, phi_zr_geometric
from .zrp import Ensemble, Estimate, RateFunction, phi_of_rho_array, run_replicas, sample_product, simulate

RESULT_COLUMNS = (
    "level", "replicas", "t", "h1m_err_mean", "h1m_err_se", "h1m_init_mean", "h1m_init_se",
    "F_mean", "F_se", "G_mean", "G_se", "wall_s",
)


def phi_for_rate(rate: RateFunction, u_max: float) -> PhiFunction:
    """Macroscopic flux ``φ = ρ⁻¹`` for ``rate`` on ``[0, u_max]``."""
    u_max = max(float(u_max), 1e-6)
    if rate.name == "linear":
        return phi_linear()
    if rate.name == "indicator":
        return phi_zr_geometric(u_max)
    grid = np.linspace(0.0, u_max, 257)
    return phi_from_table(grid, phi_of_rho_array(rate, grid))


def bump_profile(level: int = 1, height: float = 1.0) -> np.ndarray:
    """Coarse bump: zero on ``V_0``, ``height`` at the other vertices of ``V_level``."""
    g = build_graph(level)
    u = np.full(g.n_vertices, float(height))
    u[list(g.boundary)] = 0.0
    return u


def local_equilibrium_init(g: GasketGraph, rate: RateFunction, u0, seed=None, rng=None) -> np.ndarray:
    """Product sample with site densities ``u0(x)``."""
    u0 = as_values(g, u0)
    if np.any(u0 < 0) or not np.all(np.isfinite(u0)):
        raise ValidationError("density profile must be finite and non-negative")
    return sample_product(Ensemble.from_density(g, rate, u0), seed=seed, rng=rng)


def hminus1_error(g: GasketGraph, occ, u) -> float:
    """``‖ξ - u‖²_{-1,n}`` with the discrepancy set to zero on ``V_0``."""
    v = np.asarray(occ, dtype=float) - as_values(g, u)
    v[list(g.boundary)] = 0.0
    return hminus1_norm_sq(g, v)


def _lin_product(a, b, c, d, h):
    """``∫_0^h (a + b s)(c + d s) ds`` elementwise."""
    return a * c * h + (a * d + b * c) * h * h / 2.0 + b * d * h**3 / 3.0


def decomposition_terms(g: GasketGraph, rate: RateFunction, phi: PhiFunction, intervals, times, fields,
                        lap_green=None) -> tuple[float, float]:
    """``(F, G)`` for one replica from its interval integrals and the PDE samples.

    ``intervals[j]`` covers ``[times[j], times[j+1]]`` and ``fields[j]`` is
    ``u`` at ``times[j]``.
    """
    n = g.level
    x = g.interior
    if lap_green is None:
        lap_green = green_laplacian_diagonal(g)
    lap_green = lap_green[x]
    F = 0.0
    G = 0.0
    for j, st in enumerate(intervals):
        h = times[j + 1] - times[j]
        if h <= 0:
            continue
        u_a, u_b = fields[j][x], fields[j + 1][x]
        p_a, p_b = phi(u_a), phi(u_b)
        du, dp = (u_b - u_a) / h, (p_b - p_a) / h
        I_xi, I_g, I_xg, I1_xi, I1_g = (row[x] for row in st.site)
        int_g_u = u_a * I_g + du * I1_g
        int_xi_p = p_a * I_xi + dp * I1_xi
        int_pu = _lin_product(p_a, dp, u_a, du, h)
        F += np.sum(I_xg - int_g_u - int_xi_p + int_pu - I_g)
        G += float(lap_green @ I_g)
    return 2.0 * F / 3.0**n, G / 9.0**n


@dataclass
class HydroExperiment:
    """Level sweep for the hydrodynamic comparison.

    ``u0_coarse`` lives on ``V_m`` (``m = coarse_level``) and is extended
    harmonically to every target level; its corner values are the ``α_i``.
    """

    levels: tuple
    rate: RateFunction
    u0_coarse: np.ndarray
    coarse_level: int
    t: float
    replicas: int
    blocks: int = 1
    seed: int = 0
    threads: int = 1
    n_geometric: int = 40
    n_uniform: int = 40
    green_cache: str | None = None

    def __post_init__(self):
        self.levels = tuple(int(n) for n in self.levels)
        if not self.levels or any(n < self.coarse_level for n in self.levels):
            raise ValidationError("levels must be at least the coarse profile level")
        self.u0_coarse = np.asarray(self.u0_coarse, dtype=float)
        gm = build_graph(self.coarse_level)
        if self.u0_coarse.shape != (gm.n_vertices,):
            raise ValidationError(f"coarse profile must have {gm.n_vertices} values")
        if np.any(self.u0_coarse < 0):
            raise ValidationError("initial profile must be non-negative")
        if self.t < 0:
            raise ValidationError("horizon must be non-negative")
        if self.replicas < 2:
            raise ValidationError("need at least two replicas for standard errors")

    @property
    def alpha(self) -> tuple:
        gm = build_graph(self.coarse_level)
        return tuple(float(self.u0_coarse[v]) for v in gm.boundary)

    def profile(self, n: int) -> np.ndarray:
        return harmonic_extension(self.u0_coarse, self.coarse_level, n)


@dataclass
class HydroRow:
    level: int
    replicas: int
    t: float
    err: Estimate
    init: Estimate
    F: Estimate
    G: Estimate
    residual: Estimate
    wall_s: float

    def as_csv(self) -> list:
        return [
            self.level, self.replicas, self.t, self.err.mean, self.err.se, self.init.mean, self.init.se,
            self.F.mean, self.F.se, self.G.mean, self.G.se, self.wall_s,
        ]


@dataclass
class HydroResult:
    rows: list = field(default_factory=list)

    def write_csv(self, path) -> None:
        from .io import write_csv

        write_csv(path, RESULT_COLUMNS, [r.as_csv() for r in self.rows])


def run_level(e: HydroExperiment, n: int) -> HydroRow:
    start = _time.perf_counter()
    g = build_graph(n)
    rate = e.rate
    u0 = e.profile(n)
    alpha = e.alpha
    phi = phi_for_rate(rate, max(float(u0.max()), max(alpha)))
    if e.t > 0:
        prob = PdeProblem(g, u0, phi, T=e.t, alpha=alpha, n_geometric=e.n_geometric, n_uniform=e.n_uniform)
        trace = integrate(prob)
        times, fields = trace.times, trace.fields
    else:
        times, fields = np.array([0.0]), u0[None, :]
    lap = green_laplacian_diagonal(g, cache_dir=e.green_cache)
    ens = Ensemble.from_density(g, rate, u0)

    def task(r, seed):
        rng = np.random.default_rng(seed)
        occ0 = sample_product(ens, rng=rng)
        q0 = hminus1_error(g, occ0, u0)
        if e.t == 0:
            return q0, q0, 0.0, 0.0
        out = simulate(g, rate, alpha, occ0, e.t, seed, grid=times, keep_intervals=True, rng=rng)
        qt = hminus1_error(g, out.final, fields[-1])
        F, G = decomposition_terms(g, rate, phi, out.intervals, times, fields, lap)
        return q0, qt, F, G

    vals = np.array(run_replicas(task, e.replicas, e.seed, e.threads))
    q0, qt, F, G = vals.T
    return HydroRow(
        level=n,
        replicas=e.replicas,
        t=float(e.t),
        err=Estimate.of(qt),
        init=Estimate.of(q0),
        F=Estimate.of(F),
        G=Estimate.of(G),
        residual=Estimate.of(qt - q0 + F - G),
        wall_s=_time.perf_counter() - start,
    )


def run_hydro(e: HydroExperiment, out_path=None) -> HydroResult:
    """Sweep ``e.levels`` in order; with ``out_path`` the CSV is rewritten after every level."""
    result = HydroResult()
    for n in e.levels:
        result.rows.append(run_level(e, n))
        if out_path is not None:
            result.write_csv(out_path)
    return result


def identity_holds(row: HydroRow, sigmas: float = 4.0) -> bool:
    """``E[Q_t] - E[Q_0] + E[F] - E[G] = 0`` within ``sigmas`` standard errors."""
    r = row.residual
    return abs(r.mean) <= sigmas * r.se if math.isfinite(r.se) and r.se > 0 else abs(r.mean) < 1e-12
