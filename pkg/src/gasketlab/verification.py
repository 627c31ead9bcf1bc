"""Acceptance checks, shared by the test-suite and ``gasketlab verify``.

Each check returns a :class:`CheckResult`; none of them raises on a failed
criterion, so a report can list every outcome.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg
import scipy.special

from . import green as gr
from . import hydro, pde, zrp
from .gasket import Address, build_graph
from .operators import (
    dirichlet_form,
    dirichlet_matrix,
    harmonic_extension,
    integration_by_parts_defect,
    refine_harmonic,
    smallest_eigenpairs,
)


@dataclass
class CheckResult:
    key: str
    title: str
    passed: bool
    detail: str
    elapsed: float = 0.0
    metrics: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.key:<4} {self.title}: {self.detail} [{self.elapsed:.1f}s]"


def _timed(key, title):
    def wrap(fn):
        def run(*args, **kwargs):
            start = time.perf_counter()
            passed, detail, metrics = fn(*args, **kwargs)
            return CheckResult(key, title, bool(passed), detail, time.perf_counter() - start, metrics)

        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        run.key = key
        return run

    return wrap


@_timed("A1", "diagonal recursion fixed point")
def check_diagonal_fixed_point():
    a, b = 0.0, 0.0
    for _ in range(100):
        a, b = gr.diagonal_recursion_step(a, b)
    eig = np.sort(np.linalg.eigvals(gr.RECURSION_MATRIX).real)
    ea, eb = abs(a - 3 / 7), abs(b + 3 / 14)
    ee = float(np.abs(eig - np.array([1 / 15, 3 / 5])).max())
    ok = ea <= 1e-12 and eb <= 1e-12 and ee <= 1e-12
    return ok, f"|a-3/7|={ea:.1e} |b+3/14|={eb:.1e} eig err={ee:.1e}", {"a": a, "b": b}


@_timed("A2", "diagonal Laplacian limit from direct solves")
def check_diagonal_limit(vertex: Address = Address(2, 1, 1)):
    seq = gr.diagonal_sequence_direct(vertex, 3, 8)
    err = np.abs(seq.a - 3 / 7)
    ratios = err[1:] / err[:-1]
    decreasing = bool(np.all(np.diff(err) < 0))
    ratio_ok = bool(np.all((ratios >= 0.45) & (ratios <= 0.75)))
    final_ok = err[-1] <= 0.02
    detail = f"|a_8-3/7|={err[-1]:.4f} (bound 0.02) ratios {ratios.min():.4f}..{ratios.max():.4f}"
    return final_ok and ratio_ok and decreasing, detail, {"a": seq.a.tolist(), "ratios": ratios.tolist()}


@_timed("A3", "corner recursion")
def check_corner_recursion():
    worst = 0.0
    for gamma in (-1.0, -0.5, 0.0):
        rows = gr.iterate_corner(200, start=(0.0, 0.0, gamma))
        worst = max(worst, abs(rows[-1, 1] - (17 / 14 + 2 * gamma)))
        worst = max(worst, abs(gr.corner_fixed_point(gamma)[0] - (17 / 14 + 2 * gamma)))
    recomb = 0.0
    for gamma in (-0.5, -0.3, 0.0, 0.25):
        left = gr.iterate_corner(200, start=(0.0, 0.0, gamma))[-1, 1]
        right = gr.iterate_corner(200, start=(0.0, 0.0, -1.0 - gamma))[-1, 1]
        recomb = max(recomb, abs(left + right - 3 / 7))
    ok = worst <= 1e-12 and recomb <= 1e-10
    return ok, f"fixed-point err={worst:.1e} recombination err={recomb:.1e}", {}


@_timed("A4", "harmonic extension keeps the energy")
def check_harmonic_energy(seed: int = 4):
    rng = np.random.default_rng(seed)
    g0 = build_graph(0)
    worst = 0.0
    for _ in range(50):
        corners = rng.normal(size=3)
        e0 = dirichlet_form(g0, corners)
        for p in range(1, 5):
            ext = harmonic_extension(corners, 0, p)
            worst = max(worst, abs(dirichlet_form(build_graph(p), ext) - e0) / e0)
    g1 = build_graph(1)
    unit = np.zeros(3)
    unit[g0.boundary[0]] = 1.0
    mid = refine_harmonic(g0, unit)
    got = tuple(float(mid[g1.index_of((i, j))]) for i, j in ((1, 1), (1, 0), (0, 1)))
    sigma, vals = Fraction(1), (Fraction(1), Fraction(0), Fraction(0))
    exact = tuple((2 * sigma - vals[i]) / 5 for i in range(3))
    rule_ok = got == (0.2, 0.4, 0.4) and exact == (Fraction(1, 5), Fraction(2, 5), Fraction(2, 5))
    return worst <= 1e-10 and rule_ok, f"max rel energy gap={worst:.1e}, midpoints={got}", {}


@_timed("A5", "Green function self-consistency")
def check_green_consistency(seed: int = 5):
    g3, g4 = build_graph(3), build_graph(4)
    G3, G4 = gr.green_matrix(g3), gr.green_matrix(g4)
    idx = [g4.index_of(g3.address(v)) for v in range(g3.n_vertices)]
    nest = float(np.abs(G4[np.ix_(idx, idx)] - G3).max())
    rng = np.random.default_rng(seed)
    # pairs must share a sub-triangle so at least one scaling step is used
    rec, pairs = 0.0, 0
    while pairs < 100:
        a, b = (int(v) for v in rng.integers(0, g4.n_vertices, 2))
        xa, xb = g4.address(a), g4.address(b)
        if not set(gr._subcell_of(xa)) & set(gr._subcell_of(xb)):
            continue
        ref = gr.green_column_direct(g4, b).values[a] if g4.interior_mask[b] else 0.0
        rec = max(rec, abs(gr.green_recursive(xa, xb) - ref))
        pairs += 1
    g2 = build_graph(2)
    loc, count = 0.0, 0
    for x0 in g2.interior:
        up, ids = gr.local_green_update_at(g2, int(x0))
        for c, (fx, fy) in enumerate(ids):
            loc = max(loc, float(np.abs(up.yy[c] - G3[np.ix_(fy, fy)]).max()))
            loc = max(loc, float(np.abs(up.yx[c] - G3[np.ix_(fy, fx)]).max()))
        count += 1
    ok = nest <= 1e-9 and rec <= 1e-9 and loc <= 1e-8 and count >= 10
    return ok, f"nesting={nest:.1e} recursive={rec:.1e} local update={loc:.1e} at {count} vertices", {}


@_timed("A6", "integration by parts")
def check_integration_by_parts(seed: int = 6):
    g = build_graph(4)
    rng = np.random.default_rng(seed)
    worst = max(
        abs(integration_by_parts_defect(g, rng.normal(size=g.n_vertices), rng.normal(size=g.n_vertices)))
        for _ in range(100)
    )
    return worst <= 1e-9, f"max defect={worst:.1e}", {}


@_timed("A7", "PDE estimates")
def check_pde_estimates(seed: int = 7, T: float = 0.05):
    rng = np.random.default_rng(seed)
    g = build_graph(4)

    def rand_field(gg):
        u = rng.uniform(0.0, 2.0, gg.n_vertices)
        u[list(gg.boundary)] = 0.0
        return u

    phi = pde.phi_zr_geometric(2.0)
    prob = pde.PdeProblem(g, rand_field(g), phi, T=T)
    trace = pde.integrate(prob)
    lhs, rhs = pde.energy_report(trace, phi.eps0)
    energy_ok = lhs <= rhs * (1.0 + 1e-6)
    mp = pde.max_principle_violation(trace, g)
    con = pde.contraction_check(prob, rand_field(g))
    inc = con.max_increase()
    con_ok = inc <= 1e-8 * (con.hminus1_sq[0] + 1.0)

    g3 = build_graph(3)
    lin = pde.PdeProblem(g3, rand_field(g3), pde.phi_linear(), T=0.3)
    lcon = pde.contraction_check(lin, rand_field(g3))
    late = lcon.times >= 0.15
    rate = pde.fitted_decay_rate(lcon.times[late], lcon.hminus1_sq[late]) / 2.0
    lam1 = smallest_eigenpairs(g3, 1)[0][0]
    rate_err = abs(rate - lam1) / lam1
    ok = energy_ok and mp <= 1e-9 and con_ok and rate_err <= 0.05
    detail = (f"energy slack={rhs - lhs:.3e} max-principle={mp:.1e} H-1 increase={inc:.1e} "
              f"decay rate {rate:.4f} vs λ1 {lam1:.4f} ({100 * rate_err:.2f}%)")
    return ok, detail, {"rate": rate, "lambda1": lam1}


@_timed("A8", "fugacity-density duality")
def check_duality():
    worst = 0.0
    for rate in (zrp.rate_linear(), zrp.rate_indicator()):
        for rho in np.linspace(0.0, 5.0, 51):
            worst = max(worst, abs(zrp.rho_of_phi(rate, zrp.phi_of_rho(rate, float(rho))) - rho))
    # independent oracles: Poisson and geometric series summed directly
    k = np.arange(200)
    lin_rho = float(np.sum(k * np.exp(-1.0 - scipy.special.gammaln(k + 1))))
    geo_rho = float(np.sum(k * 0.5**k) / np.sum(0.5**k))
    f_lin = zrp.phi_of_rho(zrp.rate_linear(), 1.0)
    f_ind = zrp.phi_of_rho(zrp.rate_indicator(), 1.0)
    ok = (worst <= 1e-10 and abs(f_lin - 1.0) <= 1e-8 and abs(f_ind - 0.5) <= 1e-8
          and abs(lin_rho - 1.0) <= 1e-12 and abs(geo_rho - 1.0) <= 1e-12)
    return ok, f"round-trip={worst:.1e} φ_lin(1)={f_lin:.12f} φ_ind(1)={f_ind:.12f}", {}


@_timed("A9", "zero-range stationarity")
def check_stationarity(seed: int = 900, threads: int = 1, replicas: int = 20):
    g = build_graph(3)
    rate = zrp.rate_linear()
    alpha = (0.5, 1.0, 1.5)
    horizon = 2.0
    ens = zrp.stationary_ensemble(g, rate, alpha)

    def task(r, s):
        out = zrp.simulate(g, rate, alpha, None, horizon, s, grid=[0.0, horizon],
                           initial_sampler=lambda rng: zrp.sample_product(ens, rng=rng))
        return out.site_integrals[1] / horizon

    avg = np.array(zrp.run_replicas(task, replicas, seed, threads))[:, g.interior]
    mean = avg.mean(axis=0)
    se = avg.std(axis=0, ddof=1) / math.sqrt(replicas)
    lam = ens.fugacity[g.interior]
    frac = float(np.mean(np.abs(mean - lam) <= 3.0 * se))
    return frac >= 0.95, f"{100 * frac:.1f}% of {len(lam)} sites within 3 s.e.", {"fraction": frac}


@_timed("A10", "linear-rate mean-field oracle")
def check_mean_field(seed: int = 1000, threads: int = 1, replicas: int = 2000, particles: int = 10):
    g = build_graph(3)
    x0 = g.index_of(Address(1, 1, 0))
    init = np.zeros(g.n_vertices, dtype=np.int64)
    init[x0] = particles
    t = 0.1
    mean, _ = zrp.mean_occupation(g, zrp.rate_linear(), (0.0, 0.0, 0.0), init, t, replicas, seed, threads)
    A = dirichlet_matrix(g).toarray()
    e = np.zeros(len(g.interior))
    e[list(g.interior).index(x0)] = 1.0
    p = scipy.linalg.expm(-t * A) @ e
    # independent walkers: each site count is Binomial(particles, p)
    se = np.sqrt(particles * p * (1.0 - p) / replicas)
    z = np.abs(mean[g.interior] - particles * p) / se
    return bool(np.all(z <= 3.0)), f"max |z|={z.max():.2f} over {len(z)} sites", {"zmax": float(z.max())}


@_timed("A11", "hydrodynamic convergence trend")
def check_hydro(seed: int = 1100, threads: int = 1, replicas: int = 100, levels=(3, 4, 5)):
    e = hydro.HydroExperiment(levels=levels, rate=zrp.rate_indicator(), u0_coarse=hydro.bump_profile(1, 1.0),
                              coarse_level=1, t=0.05, replicas=replicas, seed=seed, threads=threads)
    rows = hydro.run_hydro(e).rows
    errs = [r.err.mean for r in rows]
    decreasing = all(b < a for a, b in zip(errs, errs[1:]))
    ident = [abs(r.residual.mean) / r.residual.se for r in rows]
    ok = decreasing and all(hydro.identity_holds(r, 4.0) for r in rows)
    detail = ("errors " + ", ".join(f"n={r.level}:{r.err.mean:.3e}±{r.err.se:.1e}" for r in rows)
              + "; identity |z| " + ", ".join(f"{z:.2f}" for z in ident))
    return ok, detail, {"rows": rows}


@_timed("A12", "one-block trend")
def check_one_block(seed: int = 1200, threads: int = 1, replicas: int = 200, t: float = 0.05):
    rate = zrp.rate_indicator()
    alpha = (0.5, 1.0, 1.5)
    site = Address(2, 1, 1)
    est = {}
    for n, k in ((3, 1), (4, 1), (5, 1), (5, 0), (5, 2)):
        g = build_graph(n)
        est[(n, k)] = zrp.one_block_diagnostic(g, rate, alpha, g.index_of(site), k, t, replicas, seed, threads=threads)

    def drop(a, b):
        pooled = math.hypot(a.se, b.se)
        return a.mean - b.mean >= pooled

    n_ok = drop(est[(3, 1)], est[(4, 1)]) and drop(est[(4, 1)], est[(5, 1)])
    k_ok = drop(est[(5, 0)], est[(5, 2)])
    detail = ("k=1: " + ", ".join(f"n={n}:{est[(n, 1)].mean:.2e}±{est[(n, 1)].se:.0e}" for n in (3, 4, 5))
              + "; n=5: " + ", ".join(f"k={k}:{est[(5, k)].mean:.2e}±{est[(5, k)].se:.0e}" for k in (0, 1, 2)))
    return n_ok and k_ok, detail, {"estimates": est}


EXACT_CHECKS = (
    check_diagonal_fixed_point,
    check_corner_recursion,
    check_harmonic_energy,
    check_green_consistency,
    check_integration_by_parts,
    check_duality,
)
ALL_CHECKS = (
    check_diagonal_fixed_point,
    check_diagonal_limit,
    check_corner_recursion,
    check_harmonic_energy,
    check_green_consistency,
    check_integration_by_parts,
    check_pde_estimates,
    check_duality,
    check_stationarity,
    check_mean_field,
    check_hydro,
    check_one_block,
)
STOCHASTIC = {"A9", "A10", "A11", "A12"}


def run_suite(suite: str = "exact", threads: int = 1, echo=None) -> list:
    checks = EXACT_CHECKS if suite == "exact" else ALL_CHECKS
    out = []
    for check in checks:
        res = check(threads=threads) if check.key in STOCHASTIC else check()
        out.append(res)
        if echo is not None:
            echo(res.line())
    return out
