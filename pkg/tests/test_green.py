from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gasketlab import Address, build_graph
from gasketlab import green as gr
from gasketlab.errors import DomainError
from gasketlab.operators import apply_laplacian


def test_level_one_closed_form():
    # -Δ_1 restricted to the interior is 5 (5 I - J), so G = 3^1 (5(5I - J))^{-1} = 3/25 (I + J/2)
    g = build_graph(1)
    G = gr.green_matrix(g)
    I = g.interior
    expect = 3.0 / 25.0 * (np.eye(3) + 0.5 * np.ones((3, 3)))
    assert np.allclose(G[np.ix_(I, I)], expect, atol=1e-14)
    assert np.all(G[list(g.boundary)] == 0.0)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_column_solves_poisson(n):
    g = build_graph(n)
    y = int(g.interior[len(g.interior) // 3])
    col = gr.green_column_direct(g, y)
    lap = -apply_laplacian(g, col.values)
    delta = np.zeros(g.n_vertices)
    delta[y] = 3.0**n
    assert np.abs(lap[g.interior] - delta[g.interior]).max() < 1e-8 * 3**n
    assert col.residual < 1e-8


def test_symmetric_positive():
    G = gr.green_matrix(build_graph(3))
    assert np.allclose(G, G.T, atol=1e-14)
    assert G.min() >= 0.0


@pytest.mark.parametrize("n", [2, 3, 4])
def test_nesting(n):
    g, h = build_graph(n), build_graph(n + 1)
    Gn, Gh = gr.green_matrix(g), gr.green_matrix(h)
    idx = [h.index_of(g.address(v).at_level(n + 1)) for v in range(g.n_vertices)]
    assert np.abs(Gh[np.ix_(idx, idx)] - Gn).max() < 1e-12


@given(st.data())
def test_recursive_matches_direct(data):
    n = 3
    g = build_graph(n)
    G = gr.green_matrix(g)
    x = data.draw(st.integers(0, g.n_vertices - 1))
    y = data.draw(st.integers(0, g.n_vertices - 1))
    ax, ay = g.address(x), g.address(y)
    try:
        val = gr.green_recursive(ax, ay, fallback=False)
    except DomainError:
        # pairs split across sub-triangles need the direct fallback
        val = gr.green_recursive(ax, ay, fallback=True)
    assert val == pytest.approx(G[x, y], abs=1e-12)


def test_harmonic_coefficients_are_a_partition_of_unity():
    for i, j in [(1, 1), (3, 1), (2, 0), (0, 5)]:
        h = gr.harmonic_coefficients(Address(3, i, j))
        assert h.sum() == pytest.approx(1.0, abs=1e-14)
        assert np.all(h >= -1e-15)


def test_hminus1_matches_quadratic_form():
    """‖v‖²₋₁ = 3^{-2n} vᵀ G v."""
    g = build_graph(3)
    G = gr.green_matrix(g)
    rng = np.random.default_rng(1)
    for _ in range(5):
        v = rng.normal(size=g.n_vertices)
        v[list(g.boundary)] = 0.0
        expect = v @ G @ v / 9.0**3
        assert gr.hminus1_norm_sq(g, v) == pytest.approx(expect, rel=1e-11)
    V = rng.normal(size=(4, g.n_vertices))
    V[:, list(g.boundary)] = 0.0
    many = gr.hminus1_norm_sq_many(g, V)
    assert many == pytest.approx([gr.hminus1_norm_sq(g, v) for v in V], rel=1e-12)


def test_hminus1_rejects_corner_mass():
    g = build_graph(2)
    v = np.zeros(g.n_vertices)
    v[g.boundary[0]] = 1.0
    with pytest.raises(DomainError):
        gr.hminus1_norm_sq(g, v)


def test_diagonal_cache_roundtrip(tmp_path):
    g = build_graph(4)
    direct = np.diag(gr.green_matrix(g))
    d1 = gr.green_diagonal(g, cache_dir=tmp_path)
    assert np.allclose(d1, direct, atol=1e-13)
    assert (tmp_path / "green_diag_n4.csv").exists()
    d2 = gr.green_diagonal(g, cache_dir=tmp_path)
    assert np.array_equal(d1, d2)
    lap = gr.green_laplacian_diagonal(g, cache_dir=tmp_path)
    assert np.allclose(lap[g.interior], apply_laplacian(g, direct)[g.interior], atol=1e-9)


def test_exact_fixed_point():
    a, b = Fraction(3, 7), Fraction(-3, 14)
    assert gr.diagonal_recursion_step(a, b) == (a, b)
    assert np.allclose(gr.DIAGONAL_FIXED_POINT, [3 / 7, -3 / 14], atol=1e-15)


def test_recursion_eigenvalues():
    lam = sorted(np.linalg.eigvals(gr.RECURSION_MATRIX).real)
    assert lam == pytest.approx([1 / 15, 3 / 5], abs=1e-14)


@given(st.floats(-5, 5), st.floats(-5, 5))
def test_diagonal_iteration_converges_from_anywhere(a0, b0):
    rows = gr.iterate_diagonal(120, start=(a0, b0))
    assert rows[-1, 1] == pytest.approx(3 / 7, abs=1e-12)
    assert rows[-1, 2] == pytest.approx(-3 / 14, abs=1e-12)


@given(st.floats(-2, 2))
def test_corner_fixed_point_formula(gamma):
    alpha, beta = gr.corner_fixed_point(gamma)
    assert alpha == pytest.approx(17 / 14 + 2 * gamma, abs=1e-12)
    nxt = gr.corner_recursion_step(alpha, beta, gamma)
    assert nxt[0] == pytest.approx(alpha, abs=1e-12) and nxt[1] == pytest.approx(beta, abs=1e-12)


def test_neighborhood_rejects_corner():
    g = build_graph(2)
    with pytest.raises(DomainError):
        gr.neighborhood(g, g.boundary[1])


def test_direct_sequence_cap():
    with pytest.raises(DomainError):
        gr.diagonal_sequence_direct(Address(2, 1, 1), 3, gr.MAX_DIAGONAL_LEVEL + 1)


def test_direct_sequence_moves_toward_limit():
    seq = gr.diagonal_sequence_direct(Address(2, 1, 1), 3, 6)
    err = np.abs(seq.a - 3 / 7)
    assert np.all(np.diff(err) < 0)


@pytest.mark.parametrize("k", range(12))
def test_local_update_against_direct(k):
    g = build_graph(2)
    x0 = int(g.interior[k])
    upd, idx = gr.local_green_update_at(g, x0)
    Gf = gr.green_matrix(build_graph(3))
    for c, (fx, fy) in enumerate(idx):
        assert np.abs(upd.yy[c] - Gf[np.ix_(fy, fy)]).max() < 1e-12
        assert np.abs(upd.yx[c] - Gf[np.ix_(fy, fx)]).max() < 1e-12


def test_local_update_zero_inputs():
    n = 2
    upd = gr.local_green_update([np.zeros((3, 3)), np.zeros((3, 3))], n)
    base = 0.3 * 0.6 ** (n + 1)
    for c in range(2):
        assert np.diag(upd.yy[c]) == pytest.approx([base] * 3, abs=1e-15)
        assert np.all(upd.yx[c] == 0.0)


def test_local_update_weight_on_shared_vertex():
    """y₀ opposite x₀ has harmonic weights (1/5, 2/5, 2/5), so G₀₀ enters G(y₀,y₀) with 1/25."""
    n = 3
    M = np.zeros((3, 3))
    M[0, 0] = 1.0
    upd = gr.local_green_update([M, np.zeros((3, 3))], n)
    assert upd.yy[0][0, 0] == pytest.approx(1 / 25 + 0.3 * 0.6 ** (n + 1), abs=1e-15)
    M = np.zeros((3, 3))
    M[1, 2] = M[2, 1] = 1.0
    upd = gr.local_green_update([M, np.zeros((3, 3))], n)
    assert upd.yy[0][0, 0] == pytest.approx(8 / 25 + 0.3 * 0.6 ** (n + 1), abs=1e-15)


def test_diagonal_bounded_uniformly():
    tops = {n: gr.green_diagonal(build_graph(n)).max() for n in range(3, 8)}
    for n in range(4, 8):
        assert tops[n] / tops[n - 1] <= 1.05


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_neighbour_difference_bound(n):
    g = build_graph(n)
    d = gr.green_diagonal(g)
    a, b = g.edges[:, 0], g.edges[:, 1]
    assert np.abs(d[a] - d[b]).max() <= 2 * 0.6**n


@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_diagonal_laplacian_constant(n):
    g = build_graph(n)
    lap = gr.green_laplacian_diagonal(g)
    assert np.abs(lap[g.interior] / 3.0**n).max() <= 8.0


@given(st.floats(-10, 10), st.floats(-10, 10))
def test_recursion_contracts_at_three_fifths(a0, b0):
    rows = gr.iterate_diagonal(40, start=(a0, b0))
    dist = np.hypot(rows[:, 1] - 3 / 7, rows[:, 2] + 3 / 14)
    # the matrix is not normal, so allow a bounded transient constant
    C = 3.0 * max(dist[0], 1e-300)
    assert np.all(dist <= C * 0.6 ** rows[:, 0] + 1e-14)


def test_hminus1_rayleigh_bound():
    from gasketlab.operators import inner, smallest_eigenpairs

    for n in (2, 3, 4):
        g = build_graph(n)
        lam1 = smallest_eigenpairs(g, 1)[0][0]
        rng = np.random.default_rng(n)
        for _ in range(50):
            v = rng.normal(size=g.n_vertices)
            v[list(g.boundary)] = 0.0
            # ‖v‖²₋₁ = <v, (-Δ)⁻¹ v>_n ≤ 3⁻ⁿ Σ v² / λ₁
            assert gr.hminus1_norm_sq(g, v) <= np.sum(v * v) * 3.0**-n / lam1 * (1 + 1e-12)
        # equality at the first eigenfield
        e1 = smallest_eigenpairs(g, 1)[0][1]
        assert gr.hminus1_norm_sq(g, e1) == pytest.approx(inner(g, e1, e1) / lam1, rel=1e-10)
