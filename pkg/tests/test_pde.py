import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from gasketlab import build_graph
from gasketlab import pde
from gasketlab.errors import DomainError, ValidationError
from gasketlab.hydro import bump_profile
from gasketlab.operators import dirichlet_matrix, harmonic_extension, harmonic_function, smallest_eigenpairs


def _random_u0(g, seed, top=2.0, alpha=(0.0, 0.0, 0.0)):
    u = np.random.default_rng(seed).uniform(0, top, g.n_vertices)
    u[list(g.boundary)] = alpha
    return u


def test_linear_rk4_matches_matrix_exponential():
    g = build_graph(3)
    u0 = _random_u0(g, 0)
    prob = pde.PdeProblem(g, u0, pde.phi_linear(), T=0.02, dt=2e-5, sample_times=[0.005, 0.01])
    tr = pde.integrate(prob)
    A = dirichlet_matrix(g).toarray()
    I = g.interior
    for t, u in zip(tr.times, tr.fields):
        ref = scipy.linalg.expm(-t * A) @ u0[I]
        assert np.abs(u[I] - ref).max() < 1e-9
    ref = pde.spectral_solution(g, u0, tr.times)
    assert np.abs(ref - tr.fields).max() < 1e-9
    # the default (stability-limited) step is coarse for the stiffest modes
    coarse = pde.integrate(pde.PdeProblem(g, u0, pde.phi_linear(), T=0.02, sample_times=[0.01]))
    assert np.abs(coarse.fields - pde.spectral_solution(g, u0, coarse.times)).max() < 1e-2


def test_implicit_scheme_first_order():
    g = build_graph(2)
    u0 = _random_u0(g, 1)
    ref = pde.spectral_solution(g, u0, [0.01])[0]
    errs = []
    for dt in (1e-3, 5e-4):
        prob = pde.PdeProblem(g, u0, pde.phi_linear(), T=0.01, scheme="implicit", dt=dt,
                              sample_times=[0.01])
        errs.append(np.abs(pde.integrate(prob).fields[-1] - ref).max())
    assert errs[1] < errs[0]
    assert 1.6 < errs[0] / errs[1] < 2.4


def test_nonlinear_schemes_agree():
    g = build_graph(2)
    u0 = _random_u0(g, 2)
    phi = pde.phi_zr_geometric(2.0)
    a = pde.integrate(pde.PdeProblem(g, u0, phi, T=0.01, sample_times=[0.01]))
    b = pde.integrate(pde.PdeProblem(g, u0, phi, T=0.01, scheme="implicit", dt=2e-5, sample_times=[0.01]))
    assert np.abs(a.fields[-1] - b.fields[-1]).max() < 2e-3


@settings(max_examples=10)
@given(st.integers(0, 10_000))
def test_energy_inequality(seed):
    g = build_graph(3)
    phi = pde.phi_zr_geometric(2.0)
    tr = pde.integrate(pde.PdeProblem(g, _random_u0(g, seed), phi, T=0.02))
    lhs, rhs = pde.energy_report(tr, phi.eps0)
    assert lhs <= rhs * (1 + 1e-6)
    assert np.all(np.diff(tr.l2_sq) <= 1e-12)


@settings(max_examples=10)
@given(st.integers(0, 10_000), st.tuples(*[st.floats(0, 2)] * 3))
def test_maximum_principle(seed, alpha):
    g = build_graph(3)
    tr = pde.integrate(pde.PdeProblem(g, _random_u0(g, seed, alpha=alpha), pde.phi_zr_geometric(2.0),
                                      T=0.01, alpha=alpha))
    assert pde.max_principle_violation(tr, g) <= 1e-9


def test_hminus1_contraction():
    g = build_graph(3)
    prob = pde.PdeProblem(g, _random_u0(g, 3), pde.phi_zr_geometric(2.0), T=0.02)
    res = pde.contraction_check(prob, _random_u0(g, 4))
    assert res.max_increase() <= 1e-8
    assert res.hminus1_sq[-1] < res.hminus1_sq[0]


def test_harmonic_data_is_stationary_for_linear_flux():
    g = build_graph(3)
    alpha = (0.5, 1.0, 1.5)
    u0 = harmonic_function(g, *alpha)
    tr = pde.integrate(pde.PdeProblem(g, u0, pde.phi_linear(), T=0.01, alpha=alpha))
    assert np.abs(tr.fields - u0).max() < 1e-12


def test_phi_harmonic_profile_is_stationary():
    g = build_graph(3)
    alpha = (0.5, 1.0, 1.5)
    phi = pde.phi_zr_geometric(2.0)
    w = harmonic_function(g, *phi(np.array(alpha)))
    u0 = phi.invert(w)
    u0[list(g.boundary)] = alpha
    T = 0.02
    tr = pde.integrate(pde.PdeProblem(g, u0, phi, T=T, alpha=alpha))
    assert np.abs(tr.fields - u0).max() <= 1e-8 * T


def test_schemes_agree_at_default_steps():
    # smooth: harmonic extension of a coarse bump, compatible with α = 0
    g = build_graph(3)
    u0 = harmonic_extension(bump_profile(), 1, 3)
    phi = pde.phi_zr_geometric(2.0)
    a = pde.integrate(pde.PdeProblem(g, u0, phi, T=0.02))
    b = pde.integrate(pde.PdeProblem(g, u0, phi, T=0.02, scheme="implicit"))
    rel = np.abs(a.fields - b.fields).max() / np.abs(a.fields).max()
    assert rel <= 1e-3


def test_decay_rate_linear():
    g = build_graph(3)
    lam1 = smallest_eigenpairs(g, 1)[0][0]
    u0 = _random_u0(g, 5)
    tr = pde.integrate(pde.PdeProblem(g, u0, pde.phi_linear(), T=0.3))
    late = tr.times >= 0.15
    rate = pde.fitted_decay_rate(tr.times[late], np.sqrt(tr.l2_sq[late]))
    assert rate == pytest.approx(lam1, rel=0.01)


def test_trace_at_sample():
    g = build_graph(2)
    tr = pde.integrate(pde.PdeProblem(g, _random_u0(g, 6), pde.phi_linear(), T=0.01, sample_times=[0.004]))
    assert 0.004 in tr.times
    assert np.array_equal(tr.at(0.004), tr.fields[list(tr.times).index(0.004)])


def test_phi_table():
    u = np.linspace(0, 3, 13)
    phi = pde.phi_from_table(u, u / (1 + u))
    assert phi(u) == pytest.approx(u / (1 + u), abs=1e-14)
    mid = np.array([0.37, 1.9])
    assert phi(mid) == pytest.approx(mid / (1 + mid), abs=2e-4)
    assert phi.invert(phi(mid)) == pytest.approx(mid, abs=1e-9)
    phi.check_ellipticity()
    with pytest.raises(ValidationError):
        pde.phi_from_table([0, 1, 1], [0, 1, 2])


def test_phi_properties():
    phi = pde.phi_zr_geometric(2.0)
    assert phi.eps0 == pytest.approx(1 / 9)
    phi.check_ellipticity()
    assert phi(np.array([-1.0]))[0] == 0.0
    assert phi.invert(np.array([0.5]))[0] == pytest.approx(1.0)


def test_problem_validation():
    g = build_graph(2)
    u0 = _random_u0(g, 7)
    with pytest.raises(ValidationError):
        pde.PdeProblem(g, u0, pde.phi_linear(), T=0.0)
    with pytest.raises(ValidationError):
        pde.PdeProblem(g, u0, pde.phi_linear(), T=0.1, alpha=(1.0, 0.0, 0.0))
    with pytest.raises(ValidationError):
        pde.PdeProblem(g, -u0 - 1, pde.phi_linear(), T=0.1)
    with pytest.raises(ValidationError):
        pde.PdeProblem(g, u0, pde.phi_linear(), T=0.1, scheme="euler")
    tr = pde.integrate(pde.PdeProblem(g, harmonic_function(g, 1, 1, 1), pde.phi_linear(), T=0.01,
                                      alpha=(1, 1, 1)))
    with pytest.raises(DomainError):
        pde.energy_report(tr, 1.0)
