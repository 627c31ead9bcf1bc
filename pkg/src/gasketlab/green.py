"""Dirichlet Green function on ``Γ_n`` and its diagonal asymptotics.

Sign convention: ``-Δ_n G(., y) = 3**n δ_y`` on ``V_n \\ V_0`` with
``G(a_i, y) = 0``. Then ``G >= 0`` and ``w = 3**-n Σ_y G(., y) f(y)``
solves ``-Δ_n w = f``. Because a level-n column extends harmonically to
every finer level, ``G(x, y)`` does not depend on the level at which it is
computed.
"""

from __future__ import annotations

import csv
import functools
import os
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .errors import DomainError, SolverError
from .gasket import Address, GasketGraph, build_graph, corner_address
from .operators import (
    _factor,
    apply_laplacian,
    as_values,
    dirichlet_matrix,
    factorized_solve,
    solve_dirichlet,
)

# linear part of the (a_n, b_n) recursion and its affine offset
RECURSION_MATRIX = np.array([[1.0 / 3.0, 8.0 / 15.0], [2.0 / 15.0, 1.0 / 3.0]])
DIAGONAL_OFFSET = np.array([2.0 / 5.0, -1.0 / 5.0])
DIAGONAL_FIXED_POINT = (3.0 / 7.0, -3.0 / 14.0)
MAX_DIAGONAL_LEVEL = 8


@dataclass(frozen=True)
class GreenColumn:
    level: int
    source: int
    values: np.ndarray
    residual: float


@dataclass(frozen=True)
class DiagonalSeq:
    """``a_n = Δ_n G(x)/3**n`` and ``b_n = Γ_n(x)/3**n`` along levels."""

    vertex: Address
    levels: np.ndarray
    a: np.ndarray
    b: np.ndarray


def green_column_direct(g: GasketGraph, y: int, *, method="direct") -> GreenColumn:
    """Column ``G(., y)`` from one sparse Dirichlet solve."""
    if not 0 <= y < g.n_vertices or not g.interior_mask[y]:
        raise DomainError(f"source {y} must be an interior vertex of Γ_{g.level}")
    f = np.zeros(g.n_vertices)
    f[y] = 3.0**g.level
    report = solve_dirichlet(g, f, method=method, rtol=1e-13)
    col = report.solution
    A = dirichlet_matrix(g)
    res = float(np.abs(A @ col[g.interior] - f[g.interior]).max())
    if res > 1e-9 * 3.0**g.level:
        raise SolverError(f"Green column residual {res:.3e} above tolerance", residual=res)
    return GreenColumn(level=g.level, source=y, values=col, residual=res)


def green_matrix(g: GasketGraph) -> np.ndarray:
    """Dense ``G`` over all of ``V_n`` (small levels only; oracle use)."""
    if g.level > 6:
        raise DomainError("dense Green matrices are limited to n <= 6")
    A = dirichlet_matrix(g).toarray()
    inv = np.linalg.inv(A) * 3.0**g.level
    G = np.zeros((g.n_vertices, g.n_vertices))
    G[np.ix_(g.interior, g.interior)] = inv
    return G


def _diagonal_from_solves(g: GasketGraph) -> np.ndarray:
    interior = g.interior
    m = len(interior)
    lu = _factor(g)
    diag = np.empty(m)
    block = 256
    for start in range(0, m, block):
        cols = np.arange(start, min(start + block, m))
        rhs = np.zeros((m, len(cols)))
        rhs[cols, np.arange(len(cols))] = 1.0
        sol = lu.solve(rhs)
        diag[cols] = sol[cols, np.arange(len(cols))]
    out = np.zeros(g.n_vertices)
    out[interior] = diag * 3.0**g.level
    return out


@functools.lru_cache(maxsize=None)
def _diagonal_cached(g: GasketGraph) -> np.ndarray:
    d = _diagonal_from_solves(g)
    d.setflags(write=False)
    return d


def green_diagonal(g: GasketGraph, cache_dir=None) -> np.ndarray:
    """``G(x, x)`` for every vertex (zero at the corners).

    With ``cache_dir`` the values, together with ``Δ_n G(x)``, are read from
    or written to ``green_diag_n{n}.csv`` keyed by ``(n, i, j)``.
    """
    if cache_dir is None:
        return _diagonal_cached(g)
    return _load_or_store(g, cache_dir)[0]


def green_laplacian_diagonal(g: GasketGraph, cache_dir=None) -> np.ndarray:
    """``Δ_n G(x)`` with ``G(x) = G(x, x)``; corner entries are zero."""
    if cache_dir is not None:
        return _load_or_store(g, cache_dir)[1]
    lap = apply_laplacian(g, green_diagonal(g))
    lap[list(g.boundary)] = 0.0
    return lap


def _load_or_store(g: GasketGraph, cache_dir):
    path = os.path.join(cache_dir, f"green_diag_n{g.level}.csv")
    if os.path.exists(path):
        diag = np.zeros(g.n_vertices)
        lap = np.zeros(g.n_vertices)
        with open(path, newline="") as fh:
            for row in csv.DictReader(fh):
                v = g.index_of(Address(int(row["n"]), int(row["i"]), int(row["j"])))
                diag[v] = float(row["G"])
                lap[v] = float(row["lapG"])
        return diag, lap
    diag = np.array(_diagonal_cached(g))
    lap = green_laplacian_diagonal(g)
    os.makedirs(cache_dir, exist_ok=True)
    with open(path, "w", newline="\n") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["n", "i", "j", "G", "lapG"])
        for v, (i, j) in enumerate(g.lattice):
            w.writerow([g.level, int(i), int(j), repr(float(diag[v])), repr(float(lap[v]))])
    return diag, lap


# -- H_{-1} norm -------------------------------------------------------------


def hminus1_norm_sq(g: GasketGraph, v) -> float:
    """``||v||²_{-1,n} = 3**-2n Σ_{x,y} v(x) v(y) G(x, y)``.

    Evaluated as ``3**-n Σ_x v(x) w(x)`` with ``-Δ_n w = v``, one sparse
    solve; ``v`` must vanish at the corners.
    """
    v = as_values(g, v)
    if np.any(np.abs(v[list(g.boundary)]) > 0.0):
        raise DomainError("H_{-1} norm requires a field vanishing on V_0")
    vi = v[g.interior]
    w = factorized_solve(g, vi)
    return max(float(vi @ w) * 3.0 ** (-g.level), 0.0)


def hminus1_norm_sq_many(g: GasketGraph, V) -> np.ndarray:
    """Row-wise :func:`hminus1_norm_sq` for a stack of fields."""
    V = np.atleast_2d(np.asarray(V, dtype=float))
    if np.any(V[:, list(g.boundary)] != 0.0):
        raise DomainError("H_{-1} norm requires fields vanishing on V_0")
    vi = V[:, g.interior]
    W = _factor(g).solve(np.ascontiguousarray(vi.T)).T
    return np.maximum(np.einsum("ij,ij->i", vi, W) * 3.0 ** (-g.level), 0.0)


# -- self-similar recursion --------------------------------------------------


def _subcell_of(addr: Address):
    """Sub-triangle indices ``s`` with ``addr`` in ``φ_s(K)``."""
    half = 1 << (addr.level - 1)
    out = []
    if addr.i + addr.j <= half:
        out.append(0)
    if addr.j >= half:
        out.append(1)
    if addr.i >= half:
        out.append(2)
    return out


def _preimage(addr: Address, s: int) -> Address:
    half = 1 << (addr.level - 1)
    di, dj = ((0, 0), (0, half), (half, 0))[s]
    return Address(addr.level - 1, addr.i - di, addr.j - dj)


def _corner_index(addr: Address):
    side = 1 << addr.level
    return {(0, 0): 0, (0, side): 1, (side, 0): 2}.get((addr.i, addr.j))


def _harmonic_transfer(s: int) -> np.ndarray:
    """``T[k, l] = h^l(φ_s(a_k))``."""
    T = np.zeros((3, 3))
    for k in range(3):
        if k == s:
            T[k, s] = 1.0
            continue
        m = 3 - s - k
        T[k, s] = T[k, k] = 2.0 / 5.0
        T[k, m] = 1.0 / 5.0
    return T


_TRANSFER = tuple(_harmonic_transfer(s) for s in range(3))


@functools.lru_cache(maxsize=200_000)
def _harmonic_coefficients(level: int, i: int, j: int) -> tuple:
    addr = Address(level, i, j)
    c = _corner_index(addr)
    if c is not None:
        e = [0.0, 0.0, 0.0]
        e[c] = 1.0
        return tuple(e)
    s = _subcell_of(addr)[0]
    pre = _preimage(addr, s)
    return tuple(np.asarray(_harmonic_coefficients(pre.level, pre.i, pre.j)) @ _TRANSFER[s])


def harmonic_coefficients(addr: Address) -> np.ndarray:
    """``(h^0(x), h^1(x), h^2(x))`` for the harmonic basis ``h^i(a_j) = δ_ij``."""
    return np.array(_harmonic_coefficients(addr.level, addr.i, addr.j))


@functools.lru_cache(maxsize=1)
def _level_one_table() -> np.ndarray:
    """``T[s][k, j] = G(φ_s(a_k), φ_s(a_j))`` from the level-1 Green matrix."""
    g1 = build_graph(1)
    cols = {y: green_column_direct(g1, y).values for y in g1.interior}
    table = np.zeros((3, 3, 3))
    for s in range(3):
        pts = []
        for k in range(3):
            ak, as_ = corner_address(0, k), corner_address(0, s)
            pts.append(g1.index_of(Address(1, ak.i + as_.i, ak.j + as_.j)))
        for k in range(3):
            for j in range(3):
                col = cols.get(pts[j])
                table[s, k, j] = 0.0 if col is None else col[pts[k]]
    return table


def green_recursive(x: Address, y: Address, *, fallback=True) -> float:
    """``G(x, y)`` through the self-similar scaling identity.

    While ``x`` and ``y`` share a sub-triangle ``φ_s(K)`` one uses

        G(φ_s x', φ_s y') = 3/5 G(x', y') + Σ_{j,k} h^k(x') h^j(y') G(φ_s a_k, φ_s a_j).

    A pair in different sub-triangles is evaluated by a direct solve at the
    current level; ``fallback=False`` raises :class:`DomainError` instead.
    """
    n = max(x.level, y.level)
    x, y = x.at_level(n), y.at_level(n)
    table = _level_one_table()
    total, factor = 0.0, 1.0
    while n > 0:
        if _corner_index(x) is not None or _corner_index(y) is not None:
            return total
        common = sorted(set(_subcell_of(x)) & set(_subcell_of(y)))
        if not common:
            if not fallback:
                raise DomainError(f"{x} and {y} lie in different sub-triangles")
            g = build_graph(n)
            col = _column_cached(g, g.index_of(y))
            return total + factor * float(col[g.index_of(x)])
        s = common[0]
        xp, yp = _preimage(x, s), _preimage(y, s)
        cx, cy = harmonic_coefficients(xp), harmonic_coefficients(yp)
        total += factor * float(cx @ table[s] @ cy)
        factor *= 3.0 / 5.0
        x, y, n = xp, yp, n - 1
    return total


@functools.lru_cache(maxsize=4096)
def _column_cached(g: GasketGraph, y: int) -> np.ndarray:
    return green_column_direct(g, y).values


# -- diagonal recursions -----------------------------------------------------


def diagonal_recursion_step(a: float, b: float) -> tuple[float, float]:
    """One level of ``(a_n, b_n) -> (a_{n+1}, b_{n+1})``.

    Accepts floats or :class:`fractions.Fraction` (exact arithmetic).
    """
    if isinstance(a, Fraction) or isinstance(b, Fraction):
        F = Fraction
        return (F(2, 5) + F(a) / 3 + F(8, 15) * F(b), F(-1, 5) + F(2, 15) * F(a) + F(b) / 3)
    return (2.0 / 5.0 + a / 3.0 + 8.0 * b / 15.0, -1.0 / 5.0 + 2.0 * a / 15.0 + b / 3.0)


def iterate_diagonal(steps: int, start=(0.0, 0.0)) -> np.ndarray:
    """Rows ``(k, a_k, b_k)`` for ``k = 0..steps``."""
    a, b = start
    rows = [(0, a, b)]
    for k in range(1, steps + 1):
        a, b = diagonal_recursion_step(a, b)
        rows.append((k, a, b))
    return np.array(rows, dtype=float)


def corner_recursion_step(alpha, beta, gamma):
    """One level of the one-sided recursion for ``(α_n, β_n, γ_n)``."""
    return (
        3.0 / 5.0 + alpha / 3.0 + 8.0 * beta / 15.0 + 4.0 * gamma / 5.0,
        1.0 / 10.0 + 2.0 * alpha / 15.0 + beta / 3.0 + 2.0 * gamma / 5.0,
        gamma,
    )


def iterate_corner(steps: int, start=(0.0, 0.0, -0.5)) -> np.ndarray:
    """Rows ``(k, α_k, β_k, γ_k)`` for ``k = 0..steps``."""
    state = tuple(float(s) for s in start)
    rows = [(0,) + state]
    for k in range(1, steps + 1):
        state = corner_recursion_step(*state)
        rows.append((k,) + state)
    return np.array(rows, dtype=float)


def affine_fixed_point(offset) -> np.ndarray:
    """Solution of ``a = offset + M a`` for the recursion matrix ``M``."""
    return np.linalg.solve(np.eye(2) - RECURSION_MATRIX, np.asarray(offset, dtype=float))


def corner_fixed_point(gamma: float) -> np.ndarray:
    """Limit ``(α, β)`` of the one-sided recursion for fixed ``γ``."""
    return affine_fixed_point([3.0 / 5.0 + 4.0 * gamma / 5.0, 1.0 / 10.0 + 2.0 * gamma / 5.0])


# -- neighbourhoods and direct diagonal sequences ----------------------------


def neighborhood(g: GasketGraph, x0: int):
    """The two level-n cells meeting at ``x0``.

    Returns a list of two ``(cell, (x1, x2))`` pairs, ordered so that the
    first cell has the lexicographically larger corner centroid.
    """
    if not g.interior_mask[x0]:
        raise DomainError(f"vertex {x0} is a corner; its neighbourhood is a single cell")
    out = []
    for c in g.cells_of(x0):
        tri = [int(v) for v in g.cells[c]]
        k = tri.index(int(x0))
        others = tuple(tri[(k + d) % 3] for d in (1, 2))
        out.append((int(c), others))

    def key(item):
        tri = g.cells[item[0]]
        i = sum(int(g.lattice[v, 0]) for v in tri)
        j = sum(int(g.lattice[v, 1]) for v in tri)
        return (2 * i + j, j)

    out.sort(key=key, reverse=True)
    return out


def _entry(g: GasketGraph, x: int, y: int) -> float:
    if not (g.interior_mask[x] and g.interior_mask[y]):
        return 0.0
    return float(_column_cached(g, y)[x])


def diagonal_sequence_direct(x: Address, n_min: int, n_max: int) -> DiagonalSeq:
    """``a_n`` and ``b_n`` at vertex ``x`` from direct Green solves."""
    if n_max > MAX_DIAGONAL_LEVEL:
        raise DomainError(f"n_max={n_max} exceeds the diagonal-sequence cap {MAX_DIAGONAL_LEVEL}")
    if x.coarsest().level > n_min:
        raise DomainError(f"{x} is not a vertex of V_{n_min}")
    levels, a_vals, b_vals = [], [], []
    for n in range(n_min, n_max + 1):
        g = build_graph(n)
        x0 = g.index_of(x)
        g00 = _entry(g, x0, x0)
        lap = sum(_entry(g, int(y), int(y)) - g00 for y in g.neighbors_of(x0))
        gam = sum(_entry(g, x1, x2) for _, (x1, x2) in neighborhood(g, x0)) - 2.0 * g00
        levels.append(n)
        a_vals.append((5.0 / 3.0) ** n * lap)
        b_vals.append((5.0 / 3.0) ** n * gam)
    return DiagonalSeq(vertex=x, levels=np.array(levels), a=np.array(a_vals), b=np.array(b_vals))


def corner_sequence_direct(x: Address, n_min: int, n_max: int, side: int = 0) -> np.ndarray:
    """Rows ``(n, α_n, β_n, γ_n)`` on one of the two cells at ``x``.

    ``side`` selects the cell at level ``n_min`` (0: larger centroid); at
    finer levels the sub-cell of it that still contains ``x`` is followed.
    """
    rows = []
    cell = None
    for n in range(n_min, n_max + 1):
        g = build_graph(n)
        x0 = g.index_of(x)
        cells = neighborhood(g, x0)
        if cell is None:
            cell, (x1, x2) = cells[side]
        else:
            cell, (x1, x2) = next(item for item in cells if item[0] // 3 == cell)
        g00 = _entry(g, x0, x0)
        s = (5.0 / 3.0) ** n
        rows.append(
            (
                n,
                s * (_entry(g, x1, x1) + _entry(g, x2, x2) - 2 * g00),
                s * (_entry(g, x1, x2) - g00),
                s * (_entry(g, x0, x1) + _entry(g, x0, x2) - 2 * g00),
            )
        )
    return np.array(rows)


# -- one-level local update --------------------------------------------------


@dataclass(frozen=True)
class LocalGreenUpdate:
    """Level-(n+1) Green values on the two cells around ``x0``.

    ``yy[c][l, m] = G(y_l, y_m)`` and ``yx[c][l, i] = G(y_l, x_i)`` for cell
    ``c``, where ``y_l`` is the midpoint opposite ``x_l`` and ``x_0`` is the
    shared vertex.
    """

    yy: tuple
    yx: tuple


def _update_cell(G: np.ndarray, n: int):
    G = np.asarray(G, dtype=float)
    S = G.sum(axis=0)
    # harmonic continuation of the columns G(., x_i) to the midpoints
    yx = (2.0 * S[None, :] - G) / 5.0
    base = (3.0 / 5.0) ** (n + 1)
    yy = np.empty((3, 3))
    for m in range(3):
        w = np.full(3, 2.0 / 5.0)
        w[m] = 1.0 / 5.0
        for l in range(3):
            yy[l, m] = base * (3.0 / 10.0 if l == m else 1.0 / 10.0) + yx[l] @ w
    return yy, yx


def local_green_update(G_cells, n: int) -> LocalGreenUpdate:
    """Advance the Green values around ``x0`` from level n to n+1.

    Parameters
    ----------
    G_cells : sequence of 3x3 arrays
        For each cell at ``x0``, the matrix ``G(x_i, x_j)`` over its corners
        ordered ``(x0, x1, x2)``. Entries at outer corners are zero.
    n : int
        Level of the input values.
    """
    out = [_update_cell(G, n) for G in G_cells]
    return LocalGreenUpdate(yy=tuple(o[0] for o in out), yx=tuple(o[1] for o in out))


def local_green_update_at(g: GasketGraph, x0: int) -> tuple[LocalGreenUpdate, list]:
    """Build the inputs at ``x0`` from direct columns and apply the update.

    Returns the update and, per cell, the level-(n+1) indices of
    ``(x0, x1, x2)`` and ``(y0, y1, y2)`` for comparison.
    """
    nb = neighborhood(g, x0)
    fine = build_graph(g.level + 1)
    mats, index_sets = [], []
    for _, (x1, x2) in nb:
        xs = (int(x0), x1, x2)
        mats.append(np.array([[_entry(g, a, b) for b in xs] for a in xs]))
        lat = [g.lattice[v] for v in xs]
        fx = tuple(fine.index_of(Address(fine.level, *(2 * l))) for l in lat)
        fy = tuple(
            fine.index_of(Address(fine.level, *(lat[(l + 1) % 3] + lat[(l + 2) % 3]))) for l in range(3)
        )
        index_sets.append((fx, fy))
    return local_green_update(mats, g.level), index_sets
