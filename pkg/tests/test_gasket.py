from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gasketlab import Address, block_of, build_graph
from gasketlab.errors import DomainError, ValidationError
from gasketlab.gasket import (
    block_assignment,
    coordinates,
    corner_address,
    enumerate_blocks,
    graph_to_json,
    vertex_count,
)


@pytest.mark.parametrize("n", range(0, 7))
def test_counts(n):
    g = build_graph(n)
    assert g.n_vertices == 3 * (3**n + 1) // 2 == vertex_count(n)
    assert g.n_edges == 3 ** (n + 1)
    assert len(g.cells) == 3**n


def test_level_two_counts():
    g = build_graph(2)
    assert (g.n_vertices, g.n_edges) == (15, 27)


@pytest.mark.parametrize("n", range(1, 6))
def test_degrees(n):
    g = build_graph(n)
    deg = np.asarray(g.degree)
    assert sorted(deg[list(g.boundary)]) == [2, 2, 2]
    assert np.all(deg[g.interior] == 4)
    # handshake
    assert deg.sum() == 2 * g.n_edges


def test_corners():
    g = build_graph(3)
    for c, (i, j) in enumerate([(0, 0), (0, 8), (8, 0)]):
        assert tuple(g.lattice[g.boundary[c]]) == (i, j)
        assert corner_address(3, c) == Address(3, i, j)


def test_corner_coordinates():
    g = build_graph(2)
    h = Fraction(1, 2)
    got = [coordinates(g, v) for v in g.boundary]
    assert got == [(Fraction(0), Fraction(0)), (h, h), (Fraction(1), Fraction(0))]


def test_midpoints_are_dyadic():
    g = build_graph(3)
    for v in range(g.n_vertices):
        x, y = coordinates(g, v)
        assert (x * 16).denominator == 1 and (y * 16).denominator == 1
        assert 0 <= y <= min(x, 1 - x)


@given(st.integers(0, 5), st.data())
def test_nesting(n, data):
    """V_n ⊂ V_{n+1} with the same addresses."""
    g, h = build_graph(n), build_graph(n + 1)
    v = data.draw(st.integers(0, g.n_vertices - 1))
    a = g.address(v)
    w = h.index_of(a.at_level(n + 1))
    assert h.address(w).coarsest() == a.coarsest()
    assert g.index_of(a) == v


def test_address_validation():
    with pytest.raises(ValidationError):
        build_graph(-1)
    with pytest.raises((ValidationError, KeyError)):
        build_graph(3).index_of(Address(3, 3, 3))


@given(st.integers(1, 5), st.data())
def test_block_partition(n, data):
    k = data.draw(st.integers(0, n))
    g = build_graph(n)
    blocks = enumerate_blocks(g, k)
    assert len(blocks) == 3 ** (n - k)
    assert all(b.size == vertex_count(k) for b in blocks)
    # every vertex is assigned to a block that contains it
    assign = block_assignment(g, k)
    for v in range(g.n_vertices):
        assert v in blocks[assign[v]].members


def test_block_of_membership():
    g = build_graph(4)
    for v in range(g.n_vertices):
        for k in range(5):
            b = block_of(g, v, k)
            assert v in b.members
            assert len(b.corners) == 3
    with pytest.raises(DomainError):
        block_of(g, 0, 5)


def test_block_tie_break_deterministic():
    g = build_graph(3)
    v = g.index_of(Address(1, 1, 1).at_level(3))
    assert block_of(g, v, 2).index == block_of(g, v, 2).index
    assert len(g.cells_of(v)) == 2


def test_json_shape():
    g = build_graph(1)
    d = graph_to_json(g)
    assert d["n_vertices"] == 6 and d["n_edges"] == 9
    assert len(d["vertices"]) == 6 and len(d["cells"]) == 3
    for p, q, n in d["vertices"]:
        assert n == 1 and 0 <= q <= p + q
