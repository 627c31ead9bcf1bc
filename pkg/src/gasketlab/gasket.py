"""Level-n graph approximations of the Sierpinski gasket.

Vertices are stored as integer lattice pairs ``(i, j)`` at a fixed level
``n``; the planar point is ``(i*e1 + j*e2) / 2**n`` with ``e1 = (1, 0)`` and
``e2 = (1/2, sqrt(3)/2)``. The three outer corners are

    a0 = (0, 0)        lattice (0, 0)
    a1 = (1/2, √3/2)   lattice (0, 2**n)
    a2 = (1, 0)        lattice (2**n, 0)

Cells (the ``3**n`` smallest triangles) are kept in address order: the
children of cell ``c`` at level ``m`` are ``3*c + s`` at level ``m + 1``,
where ``s`` is the index of the contraction toward ``a_s``. Consequently a
level-``(n - k)`` triangle is a contiguous run of ``3**k`` level-n cells.
"""

from __future__ import annotations

import functools
import json
import os
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import CapacityError, DomainError, ValidationError

DEFAULT_MAX_LEVEL = 12

__all__ = [
    "Address",
    "GasketGraph",
    "TriangleBlock",
    "build_graph",
    "block_of",
    "coordinates",
    "enumerate_blocks",
    "max_level",
    "vertex_count",
    "graph_to_json",
]


def max_level() -> int:
    """Level cap; ``GASKET_MAX_LEVEL`` overrides the default of 12."""
    raw = os.environ.get("GASKET_MAX_LEVEL")
    if raw is None:
        return DEFAULT_MAX_LEVEL
    try:
        return int(raw)
    except ValueError as exc:
        raise ValidationError(f"GASKET_MAX_LEVEL must be an integer, got {raw!r}") from exc


def vertex_count(n: int) -> int:
    """``|V_n| = 3 (3**n + 1) / 2``."""
    return 3 * (3**n + 1) // 2


@dataclass(frozen=True, order=True)
class Address:
    """A vertex of ``V_n`` as an integer lattice pair at level ``n``."""

    level: int
    i: int
    j: int

    def __post_init__(self):
        side = 1 << self.level
        if self.level < 0 or self.i < 0 or self.j < 0 or self.i + self.j > side:
            raise DomainError(f"lattice point ({self.i}, {self.j}) outside the level-{self.level} triangle")

    def at_level(self, m: int) -> "Address":
        """The same planar point written at a finer (or equal) level ``m``."""
        if m < self.level:
            c = self.coarsest()
            if c.level > m:
                raise DomainError(f"{self} is not a point of V_{m}")
            return c.at_level(m)
        s = m - self.level
        return Address(m, self.i << s, self.j << s)

    def coarsest(self) -> "Address":
        """Rewrite at the smallest level where the lattice pair is integral."""
        lvl, i, j = self.level, self.i, self.j
        while lvl > 0 and i % 2 == 0 and j % 2 == 0:
            lvl, i, j = lvl - 1, i // 2, j // 2
        return Address(lvl, i, j)

    def point(self) -> tuple[Fraction, Fraction]:
        """Exact planar point ``(x, y / sqrt(3))``."""
        den = 1 << (self.level + 1)
        return Fraction(2 * self.i + self.j, den), Fraction(self.j, den)


def corner_address(n: int, c: int) -> Address:
    side = 1 << n
    return (Address(n, 0, 0), Address(n, 0, side), Address(n, side, 0))[c]


@dataclass(frozen=True, eq=False)
class GasketGraph:
    """Immutable level-n approximation ``Γ_n``.

    Attributes
    ----------
    level : int
    lattice : ndarray, shape (V, 2)
        Lattice pairs ``(i, j)``, sorted by ``(j, i)``.
    neighbors : ndarray, shape (V, 4)
        Neighbor indices, padded with ``-1`` for the degree-2 corners.
    degree : ndarray, shape (V,)
    boundary : tuple of int
        Indices of ``a0, a1, a2``.
    cells : ndarray, shape (3**n, 3)
        Vertex indices of every smallest triangle; column ``s`` holds the
        image of ``a_s``.
    edges : ndarray, shape (3**(n+1), 2)
    """

    level: int
    lattice: np.ndarray
    neighbors: np.ndarray
    degree: np.ndarray
    boundary: tuple
    cells: np.ndarray
    edges: np.ndarray
    _vertex_cells: np.ndarray = field(repr=False)

    @property
    def n_vertices(self) -> int:
        return len(self.lattice)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def measure_weight(self) -> float:
        return 3.0 ** (-self.level)

    @functools.cached_property
    def interior(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[list(self.boundary)] = False
        return np.flatnonzero(mask)

    @functools.cached_property
    def interior_mask(self) -> np.ndarray:
        mask = np.ones(self.n_vertices, dtype=bool)
        mask[list(self.boundary)] = False
        return mask

    @functools.cached_property
    def xy(self) -> np.ndarray:
        """Floating-point planar coordinates, for plotting only."""
        i = self.lattice[:, 0].astype(float)
        j = self.lattice[:, 1].astype(float)
        side = float(1 << self.level)
        return np.column_stack([(i + 0.5 * j) / side, (np.sqrt(3.0) / 2.0) * j / side])

    def index_of(self, addr: Address | tuple) -> int:
        """Vertex index of an address (any level at which it is representable)."""
        if not isinstance(addr, Address):
            addr = Address(self.level, int(addr[0]), int(addr[1]))
        if addr.level != self.level:
            addr = addr.at_level(self.level)
        key = addr.j * ((1 << self.level) + 1) + addr.i
        pos = int(np.searchsorted(self._keys, key))
        if pos >= len(self._keys) or self._keys[pos] != key:
            raise DomainError(f"{addr} is not a vertex of Γ_{self.level}")
        return pos

    def address(self, v: int) -> Address:
        i, j = self.lattice[v]
        return Address(self.level, int(i), int(j))

    def neighbors_of(self, v: int) -> np.ndarray:
        row = self.neighbors[v]
        return row[row >= 0]

    def cells_of(self, v: int) -> np.ndarray:
        row = self._vertex_cells[v]
        return row[row >= 0]

    @functools.cached_property
    def _keys(self) -> np.ndarray:
        return self.lattice[:, 1] * ((1 << self.level) + 1) + self.lattice[:, 0]

    @functools.cached_property
    def coarse_level(self) -> np.ndarray:
        """Smallest ``m`` with vertex ``v`` in ``V_m``."""
        out = np.empty(self.n_vertices, dtype=np.int64)
        for v, (i, j) in enumerate(self.lattice):
            out[v] = Address(self.level, int(i), int(j)).coarsest().level
        return out


def _subdivide(cells: np.ndarray) -> np.ndarray:
    """One refinement step on lattice corner triples (coordinates doubled)."""
    p = cells  # (C, 3, 2)
    children = np.empty((len(p), 3, 3, 2), dtype=np.int64)
    for s in range(3):
        for k in range(3):
            children[:, s, k] = p[:, s] + p[:, k]
    return children.reshape(-1, 3, 2)


@functools.lru_cache(maxsize=None)
def _build(n: int) -> GasketGraph:
    cells_xy = np.array([[[0, 0], [0, 1], [1, 0]]], dtype=np.int64)
    for _ in range(n):
        cells_xy = _subdivide(cells_xy)
    side = 1 << n
    flat = cells_xy.reshape(-1, 2)
    keys = flat[:, 1] * (side + 1) + flat[:, 0]
    ukeys, inverse = np.unique(keys, return_inverse=True)
    lattice = np.column_stack([ukeys % (side + 1), ukeys // (side + 1)]).astype(np.int64)
    cells = inverse.reshape(-1, 3).astype(np.int64)

    e = np.concatenate([cells[:, [0, 1]], cells[:, [1, 2]], cells[:, [2, 0]]])
    e.sort(axis=1)
    edges = e[np.lexsort((e[:, 1], e[:, 0]))]

    nv = len(lattice)
    neighbors = -np.ones((nv, 4), dtype=np.int64)
    degree = np.zeros(nv, dtype=np.int64)
    for a, b in edges:
        neighbors[a, degree[a]] = b
        degree[a] += 1
        neighbors[b, degree[b]] = a
        degree[b] += 1
    # ascending neighbor order, padding last
    big = np.iinfo(np.int64).max
    neighbors = np.sort(np.where(neighbors < 0, big, neighbors), axis=1)
    neighbors[neighbors == big] = -1

    vertex_cells = -np.ones((nv, 2), dtype=np.int64)
    fill = np.zeros(nv, dtype=np.int64)
    for c, tri in enumerate(cells):
        for v in tri:
            vertex_cells[v, fill[v]] = c
            fill[v] += 1

    def key(i, j):
        return j * (side + 1) + i

    boundary = tuple(int(np.searchsorted(ukeys, key(i, j))) for i, j in ((0, 0), (0, side), (side, 0)))
    for arr in (lattice, neighbors, degree, cells, edges, vertex_cells):
        arr.setflags(write=False)
    return GasketGraph(
        level=n,
        lattice=lattice,
        neighbors=neighbors,
        degree=degree,
        boundary=boundary,
        cells=cells,
        edges=edges,
        _vertex_cells=vertex_cells,
    )


def build_graph(n: int) -> GasketGraph:
    """Construct ``Γ_n`` by recursive subdivision of the unit triangle.

    Graphs are cached; repeated calls return the same immutable object.

    Raises
    ------
    CapacityError
        If ``n`` exceeds :func:`max_level`.
    """
    if not isinstance(n, (int, np.integer)) or n < 0:
        raise ValidationError(f"level must be a non-negative integer, got {n!r}")
    cap = max_level()
    if n > cap:
        raise CapacityError(f"level {n} exceeds the configured maximum {cap} (set GASKET_MAX_LEVEL)")
    return _build(int(n))


def coordinates(g: GasketGraph, v: int) -> tuple[Fraction, Fraction]:
    """Exact position of vertex ``v`` as ``(x, y / sqrt(3))``.

    Both components are dyadic rationals, so ``a2 -> (1, 0)`` and
    ``a1 -> (1/2, 1/2)`` (i.e. ``y = sqrt(3)/2``).
    """
    if not 0 <= v < g.n_vertices:
        raise DomainError(f"vertex index {v} out of range")
    return g.address(v).point()


@dataclass(frozen=True)
class TriangleBlock:
    """The vertices of ``Γ_n`` inside one level-``(n - k)`` triangle."""

    level: int
    scale: int
    index: int
    members: np.ndarray
    corners: tuple

    @property
    def size(self) -> int:
        return len(self.members)


def _check_scale(g: GasketGraph, k: int):
    if not 0 <= k <= g.level:
        raise DomainError(f"block scale k={k} must lie in [0, {g.level}]")


def _make_block(g: GasketGraph, k: int, b: int) -> TriangleBlock:
    span = 3**k
    run = g.cells[b * span:(b + 1) * span]
    members = np.unique(run)
    members.setflags(write=False)
    offset = (span - 1) // 2
    corners = tuple(int(g.cells[b * span + s * offset, s]) for s in range(3))
    return TriangleBlock(level=g.level, scale=k, index=b, members=members, corners=corners)


def block_of(g: GasketGraph, v: int, k: int) -> TriangleBlock:
    """The level-``(n - k)`` triangle assigned to vertex ``v``.

    A vertex of ``V_{n-k}`` other than the outer corners lies in two such
    triangles; the one whose corner centroid is lexicographically larger in
    ``(x, y)`` is chosen.
    """
    _check_scale(g, k)
    span = 3**k
    candidates = sorted({int(c) // span for c in g.cells_of(v)})
    if len(candidates) == 1:
        return _make_block(g, k, candidates[0])

    def centroid_key(b):
        corners = [g.cells[b * span + s * ((span - 1) // 2), s] for s in range(3)]
        i = sum(int(g.lattice[c, 0]) for c in corners)
        j = sum(int(g.lattice[c, 1]) for c in corners)
        return (2 * i + j, j)

    return _make_block(g, k, max(candidates, key=centroid_key))


def enumerate_blocks(g: GasketGraph, k: int) -> list[TriangleBlock]:
    """All ``3**(n-k)`` level-``(n-k)`` triangles, in address order."""
    _check_scale(g, k)
    return [_make_block(g, k, b) for b in range(3 ** (g.level - k))]


def block_assignment(g: GasketGraph, k: int) -> np.ndarray:
    """Index of ``block_of(g, v, k)`` for every vertex ``v``."""
    _check_scale(g, k)
    span = 3**k
    out = np.empty(g.n_vertices, dtype=np.int64)
    for v in range(g.n_vertices):
        cs = g.cells_of(v)
        if len(cs) == 1 or cs[0] // span == cs[1] // span:
            out[v] = cs[0] // span
        else:
            out[v] = block_of(g, v, k).index
    return out


def graph_to_json(g: GasketGraph) -> dict:
    """JSON-ready description of ``g``.

    Vertex ``v`` is written as ``[p, q, n]`` meaning the exact point
    ``x = p / 2**(n+1)``, ``y = q * sqrt(3) / 2**(n+1)``.
    """
    n = g.level
    verts = [[int(2 * i + j), int(j), n] for i, j in g.lattice]
    return {
        "level": n,
        "n_vertices": g.n_vertices,
        "n_edges": g.n_edges,
        "coordinate_encoding": "x = p / 2**(n+1), y = q * sqrt(3) / 2**(n+1)",
        "vertices": verts,
        "lattice": g.lattice.tolist(),
        "edges": g.edges.tolist(),
        "boundary": list(g.boundary),
        "cells": g.cells.tolist(),
    }


def dump_graph(g: GasketGraph, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(graph_to_json(g), fh, separators=(",", ":"))
        fh.write("\n")
