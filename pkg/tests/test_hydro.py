import numpy as np
import pytest
from scipy.integrate import quad

from gasketlab import build_graph
from gasketlab import hydro
from gasketlab.errors import ValidationError
from gasketlab.green import green_diagonal
from gasketlab.operators import harmonic_extension
from gasketlab.pde import phi_zr_geometric
from gasketlab.zrp import IntervalStats, rate_from_table, rate_indicator, rate_linear


def test_bump_profile():
    u = hydro.bump_profile(1, 2.0)
    g = build_graph(1)
    assert np.all(u[list(g.boundary)] == 0) and np.all(u[g.interior] == 2.0)


def test_phi_for_rate():
    assert hydro.phi_for_rate(rate_linear(), 3.0).name == "linear"
    p = hydro.phi_for_rate(rate_indicator(), 2.0)
    assert p(np.array([1.0]))[0] == pytest.approx(0.5)
    t = hydro.phi_for_rate(rate_from_table([0.0, 1.0, 1.0]), 2.0)
    # the table [0, 1, 1] is g(k) = 1{k>0}
    assert t(np.array([1.0]))[0] == pytest.approx(0.5, abs=1e-6)


def test_hminus1_error_zero_for_matching_profile():
    g = build_graph(3)
    u = harmonic_extension(hydro.bump_profile(), 1, 3)
    assert hydro.hminus1_error(g, u, u) == 0.0


def test_decomposition_against_quadrature():
    """Frozen ξ on one interval and linear u: compare with direct quadrature."""
    g = build_graph(2)
    rate = rate_indicator()
    phi = phi_zr_geometric(3.0)
    rng = np.random.default_rng(0)
    xi = rng.integers(0, 3, g.n_vertices).astype(float)
    ua, ub = rng.uniform(0, 2, (2, g.n_vertices))
    t0, t1 = 0.01, 0.03
    h = t1 - t0
    gx = rate(xi.astype(int))
    site = np.array([xi * h, gx * h, xi * gx * h, xi * h * h / 2, gx * h * h / 2])
    st = IntervalStats(t0=t0, t1=t1, site=site, block=np.zeros((2, 0)))
    lap = rng.normal(size=g.n_vertices)
    F, G = hydro.decomposition_terms(g, rate, phi, [st], np.array([t0, t1]), [ua, ub], lap)

    def integrand(s, x):
        lam = (s - t0) / h
        u = ua[x] + lam * (ub[x] - ua[x])
        p = phi(ua[x]) + lam * (phi(ub[x]) - phi(ua[x]))
        return (gx[x] - p) * (xi[x] - u) - gx[x]

    F_ref = sum(quad(integrand, t0, t1, args=(int(x),))[0] for x in g.interior) * 2 / 3**2
    G_ref = h * float(lap[g.interior] @ gx[g.interior]) / 9**2
    assert F == pytest.approx(F_ref, rel=1e-10)
    assert G == pytest.approx(G_ref, rel=1e-12)


def test_initial_error_matches_variance_formula():
    """E‖ξ_0 − u_0‖²₋₁ = 3^{-2n} Σ_x G(x,x) Var ξ(x) for independent sites."""
    e = hydro.HydroExperiment(levels=(3,), rate=rate_indicator(), u0_coarse=hydro.bump_profile(),
                              coarse_level=1, t=0.0, replicas=400, seed=5)
    row = hydro.run_level(e, 3)
    g = build_graph(3)
    u = e.profile(3)
    expect = float(green_diagonal(g)[g.interior] @ (u * (1 + u))[g.interior]) / 9**3
    assert abs(row.init.mean - expect) < 4 * row.init.se
    assert row.err.mean == row.init.mean


def test_identity_small_level():
    e = hydro.HydroExperiment(levels=(2,), rate=rate_indicator(), u0_coarse=hydro.bump_profile(),
                              coarse_level=1, t=0.03, replicas=60, seed=21)
    row = hydro.run_level(e, 2)
    assert hydro.identity_holds(row, 4.0)
    assert row.G.mean < 0 < row.err.mean


def test_run_hydro_csv(tmp_path):
    e = hydro.HydroExperiment(levels=(2, 3), rate=rate_indicator(), u0_coarse=hydro.bump_profile(),
                              coarse_level=1, t=0.01, replicas=4, seed=1)
    out = tmp_path / "r.csv"
    res = hydro.run_hydro(e, out)
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(hydro.RESULT_COLUMNS)
    assert len(lines) == 3 and len(res.rows) == 2
    again = hydro.run_hydro(e)
    for a, b in zip(res.rows, again.rows):
        assert a.as_csv()[:-1] == b.as_csv()[:-1]


def test_experiment_validation():
    base = dict(rate=rate_indicator(), u0_coarse=hydro.bump_profile(), coarse_level=1, t=0.01)
    with pytest.raises(ValidationError):
        hydro.HydroExperiment(levels=(0,), replicas=4, **base)
    with pytest.raises(ValidationError):
        hydro.HydroExperiment(levels=(2,), replicas=1, **base)
    with pytest.raises(ValidationError):
        hydro.HydroExperiment(levels=(2,), replicas=4, **{**base, "u0_coarse": -hydro.bump_profile()})
    with pytest.raises(ValidationError):
        hydro.local_equilibrium_init(build_graph(1), rate_linear(), -np.ones(6))


def test_zero_horizon_reproduces_initial_sampling():
    e = hydro.HydroExperiment(levels=(3,), rate=rate_indicator(), u0_coarse=hydro.bump_profile(),
                              coarse_level=1, t=0.0, replicas=6, seed=40)
    row = hydro.run_level(e, 3)
    g = build_graph(3)
    u = e.profile(3)
    direct = [hydro.hminus1_error(g, hydro.local_equilibrium_init(g, rate_indicator(), u,
                                                                  rng=np.random.default_rng(40 + r)), u)
              for r in range(6)]
    assert row.init.mean == pytest.approx(np.mean(direct), rel=1e-14)
    assert row.err.mean == row.init.mean


def test_seed_sets_agree_in_distribution():
    """Advisory KS sanity: two disjoint seed sets give the same error law."""
    from scipy.stats import ks_2samp

    g = build_graph(3)
    u = harmonic_extension(hydro.bump_profile(), 1, 3)

    def errs(base):
        return [hydro.hminus1_error(g, hydro.local_equilibrium_init(g, rate_indicator(), u, seed=base + r), u)
                for r in range(150)]

    assert ks_2samp(errs(0), errs(10_000)).pvalue > 0.01
