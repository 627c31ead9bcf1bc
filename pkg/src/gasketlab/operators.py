"""Discrete Laplacian, Dirichlet forms and Dirichlet problems on ``Γ_n``.

Conventions (all factors kept literal):

* ``Δ_n u(x) = 5**n * Σ_{y~x} (u(y) - u(x))`` at every vertex;
* ``E_n(u, v) = (5/3)**n * Σ_{edges xy} (u(y) - u(x)) (v(y) - v(x))``;
* ``<u, v>_n = 3**-n * Σ_x u(x) v(x)``;
* ``∂^i_n u = (5/3)**n * Σ_{y~a_i} (u(y) - u(a_i))`` (inward difference).

Fields are plain float arrays of length ``|V_n|`` indexed like the graph's
vertices. :class:`Field` tags such an array with its level for I/O.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DomainError, LevelMismatchError, SolverError, ValidationError
from .gasket import GasketGraph, TriangleBlock, build_graph

HOLDER_EXPONENT = math.log(5.0 / 3.0) / (2.0 * math.log(2.0))
DEFAULT_RTOL = 1e-10


@dataclass(frozen=True)
class Field:
    """Values on the vertices of ``Γ_level``."""

    level: int
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(vals)):
            raise ValidationError("field values must be finite")
        object.__setattr__(self, "values", vals)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return len(self.values)


@dataclass(frozen=True)
class DirichletSolveReport:
    solution: np.ndarray
    residual: float
    iterations: int


def as_values(g: GasketGraph, u) -> np.ndarray:
    """Validate ``u`` against ``g`` and return it as a float array."""
    if isinstance(u, Field) and u.level != g.level:
        raise LevelMismatchError(f"field lives on level {u.level}, graph on level {g.level}")
    arr = np.asarray(u, dtype=float)
    if arr.shape != (g.n_vertices,):
        raise LevelMismatchError(
            f"field of length {arr.shape} does not match |V_{g.level}| = {g.n_vertices}"
        )
    return arr


def apply_laplacian(g: GasketGraph, u) -> np.ndarray:
    """``Δ_n u`` at every vertex, corners included."""
    u = as_values(g, u)
    nb = g.neighbors
    mask = nb >= 0
    total = np.where(mask, u[np.where(mask, nb, 0)], 0.0).sum(axis=1)
    return 5.0**g.level * (total - g.degree * u)


def apply_dirichlet_laplacian(g: GasketGraph, u) -> np.ndarray:
    """``Δ_n^D u``: the Laplacian with the corner rows set to zero."""
    out = apply_laplacian(g, u)
    out[list(g.boundary)] = 0.0
    return out


def inner(g: GasketGraph, u, v) -> float:
    """``<u, v>_n = 3**-n Σ_x u(x) v(x)``."""
    return float(np.dot(as_values(g, u), as_values(g, v))) * 3.0 ** (-g.level)


def dirichlet_form(g: GasketGraph, u, v=None) -> float:
    """``E_n(u, v)``; with ``v`` omitted, the energy ``E_n(u, u)``."""
    u = as_values(g, u)
    v = u if v is None else as_values(g, v)
    a, b = g.edges[:, 0], g.edges[:, 1]
    return (5.0 / 3.0) ** g.level * float(np.dot(u[b] - u[a], v[b] - v[a]))


def normal_derivative(g: GasketGraph, u, i: int) -> float:
    """``∂^i_n u = (5/3)**n Σ_{y~a_i} (u(y) - u(a_i))``."""
    if i not in (0, 1, 2):
        raise DomainError(f"corner index must be 0, 1 or 2, got {i}")
    u = as_values(g, u)
    a = g.boundary[i]
    nb = g.neighbors_of(a)
    return (5.0 / 3.0) ** g.level * float(np.sum(u[nb] - u[a]))


def integration_by_parts_defect(g: GasketGraph, u, v) -> float:
    """Residual of the discrete Green identity.

    Returns ``<u, Δ^D v> - <v, Δ^D u> + Σ_i (u(a_i) ∂^i v - v(a_i) ∂^i u)``,
    which vanishes identically with the inward normal derivative used here.
    """
    u = as_values(g, u)
    v = as_values(g, v)
    lhs = inner(g, u, apply_dirichlet_laplacian(g, v)) - inner(g, v, apply_dirichlet_laplacian(g, u))
    bnd = sum(
        u[g.boundary[i]] * normal_derivative(g, v, i) - v[g.boundary[i]] * normal_derivative(g, u, i)
        for i in range(3)
    )
    return lhs + bnd


def _lift(coarse: GasketGraph, fine: GasketGraph) -> np.ndarray:
    """Index in ``fine`` of every vertex of ``coarse``."""
    s = fine.level - coarse.level
    lat = coarse.lattice << s
    keys = lat[:, 1] * ((1 << fine.level) + 1) + lat[:, 0]
    return np.searchsorted(fine._keys, keys)


def refine_harmonic(g: GasketGraph, values) -> np.ndarray:
    """Extend ``values`` on ``V_m`` to ``V_{m+1}`` by the 1/5-2/5 rule.

    The midpoint opposite corner ``x_i`` of each level-m cell receives
    ``(2σ - u(x_i)) / 5`` with ``σ`` the sum of the three corner values.
    """
    u = as_values(g, values)
    fine = build_graph(g.level + 1)
    out = np.empty(fine.n_vertices)
    out[_lift(g, fine)] = u
    parent = g.cells  # (C, 3) indices in g
    child = fine.cells.reshape(-1, 3, 3)  # child s, corner k
    corner_vals = u[parent]
    sigma = corner_vals.sum(axis=1)
    for a, b, m in ((1, 2, 0), (0, 2, 1), (0, 1, 2)):
        out[child[:, a, b]] = (2.0 * sigma - corner_vals[:, m]) / 5.0
    return out


def harmonic_extension(values, m: int, n: int) -> np.ndarray:
    """Energy-preserving extension of a level-m field to level ``n >= m``."""
    if n < m:
        raise DomainError(f"target level {n} below source level {m}")
    g = build_graph(m)
    u = as_values(g, values)
    for p in range(m, n):
        u = refine_harmonic(build_graph(p), u)
    return u


def harmonic_function(g: GasketGraph, b0: float, b1: float, b2: float) -> np.ndarray:
    """The discrete harmonic field with corner values ``(b0, b1, b2)``."""
    g0 = build_graph(0)
    corners = np.empty(3)
    corners[list(g0.boundary)] = [b0, b1, b2]
    return harmonic_extension(corners, 0, g.level)


def restrict(values, n: int, m: int) -> np.ndarray:
    """Values of a level-n field at the vertices of ``V_m`` (``m <= n``)."""
    fine = build_graph(n)
    return as_values(fine, values)[_lift(build_graph(m), fine)]


# -- Dirichlet problems ------------------------------------------------------


@functools.lru_cache(maxsize=None)
def _interior_system(g: GasketGraph):
    """``-Δ_n`` restricted to interior rows/columns, and the boundary coupling."""
    interior = g.interior
    pos = -np.ones(g.n_vertices, dtype=np.int64)
    pos[interior] = np.arange(len(interior))
    scale = 5.0**g.level
    rows, cols, vals = [], [], []
    brows, bcols, bvals = [], [], []
    for r, x in enumerate(interior):
        rows.append(r)
        cols.append(r)
        vals.append(scale * g.degree[x])
        for y in g.neighbors_of(x):
            if pos[y] >= 0:
                rows.append(r)
                cols.append(pos[y])
                vals.append(-scale)
            else:
                brows.append(r)
                bcols.append(g.boundary.index(int(y)))
                bvals.append(scale)
    m = len(interior)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(m, m))
    B = sp.csr_matrix((bvals, (brows, bcols)), shape=(m, 3))
    return A, B


def dirichlet_matrix(g: GasketGraph) -> sp.csr_matrix:
    """Sparse SPD matrix of ``-Δ_n^D`` on the interior vertices."""
    return _interior_system(g)[0]


@functools.lru_cache(maxsize=16)
def _factor(g: GasketGraph):
    return spla.splu(dirichlet_matrix(g).tocsc())


def factorized_solve(g: GasketGraph, rhs: np.ndarray) -> np.ndarray:
    """Direct solve of ``(-Δ_n^D) w = rhs`` on the interior (cached LU)."""
    return _factor(g).solve(np.asarray(rhs, dtype=float))


def pcg(A, b, *, rtol=DEFAULT_RTOL, maxiter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients for SPD ``A``.

    Returns ``(x, relative_residual, iterations)``; raises
    :class:`SolverError` when ``maxiter`` is exhausted.
    """
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b), 0.0, 0
    if maxiter is None:
        maxiter = 10 * len(b) + 100
    dinv = 1.0 / A.diagonal()
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    p = z.copy()
    rz = float(r @ z)
    rel = np.linalg.norm(r) / bnorm
    it = 0
    while rel > rtol:
        if it >= maxiter:
            raise SolverError(
                f"CG did not converge in {maxiter} iterations (relative residual {rel:.3e})",
                residual=rel,
                iterations=it,
            )
        Ap = A @ p
        step = rz / float(p @ Ap)
        x += step * p
        r -= step * Ap
        it += 1
        rel = np.linalg.norm(r) / bnorm
        z = dinv * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, rel, it


def solve_dirichlet(g: GasketGraph, f, boundary=(0.0, 0.0, 0.0), *, method="cg", rtol=DEFAULT_RTOL, maxiter=None):
    """Solve ``-Δ_n w = f`` on ``V_n \\ V_0`` with ``w(a_i) = b_i``.

    Parameters
    ----------
    f : array_like
        Full-length field (corner entries ignored) or interior-length array.
    boundary : sequence of 3 floats
    method : {"cg", "direct"}
        Preconditioned CG (default) or the cached sparse LU factorization.

    Returns
    -------
    DirichletSolveReport
    """
    f = np.asarray(f, dtype=float)
    interior = g.interior
    if f.shape == (g.n_vertices,):
        f_int = f[interior]
    elif f.shape == (len(interior),):
        f_int = f
    else:
        raise LevelMismatchError(f"source of shape {f.shape} does not fit Γ_{g.level}")
    if not np.all(np.isfinite(f_int)):
        raise ValidationError("source must be finite")
    bvals = np.asarray(boundary, dtype=float)
    A, B = _interior_system(g)
    rhs = f_int + B @ bvals
    if method == "cg":
        w_int, _, iters = pcg(A, rhs, rtol=rtol, maxiter=maxiter)
    elif method == "direct":
        w_int, iters = factorized_solve(g, rhs), 0
    else:
        raise ValidationError(f"unknown solve method {method!r}")
    bnorm = np.linalg.norm(rhs)
    res = np.linalg.norm(rhs - A @ w_int) / bnorm if bnorm > 0 else 0.0
    w = np.empty(g.n_vertices)
    w[interior] = w_int
    w[list(g.boundary)] = bvals
    return DirichletSolveReport(solution=w, residual=float(res), iterations=int(iters))


def smallest_eigenpairs(g: GasketGraph, count: int):
    """Lowest eigenpairs of ``-Δ_n^D``.

    Eigenfields are zero at the corners and orthonormal in ``<., .>_n``.

    Returns
    -------
    list of (float, ndarray)
        Ascending eigenvalues with their eigenfields.
    """
    interior = g.interior
    m = len(interior)
    if not 1 <= count <= m:
        raise DomainError(f"count must lie in [1, {m}], got {count}")
    A = dirichlet_matrix(g)
    if m <= 2500:
        lam, vec = scipy.linalg.eigh(A.toarray(), subset_by_index=[0, count - 1])
    else:
        lam, vec = spla.eigsh(A, k=count, sigma=0.0, which="LM", tol=1e-13)
        order = np.argsort(lam)
        lam, vec = lam[order], vec[:, order]
    out = []
    for k in range(count):
        v = np.zeros(g.n_vertices)
        v[interior] = vec[:, k] * 3.0 ** (g.level / 2.0)
        resid = np.linalg.norm(A @ v[interior] - lam[k] * v[interior])
        if resid > 1e-8 * np.linalg.norm(v[interior]) * max(1.0, abs(lam[k])):
            raise SolverError(f"eigenpair {k} residual {resid:.3e} too large", residual=resid)
        out.append((float(lam[k]), v))
    return out


def holder_ratio(g: GasketGraph, u) -> float:
    """Empirical Hölder constant ``sup |u(x)-u(y)| / |x-y|^α / E_n(u,u)^½``.

    ``α = log(5/3) / (2 log 2)``; pairs are scanned in chunks to bound memory.
    """
    u = as_values(g, u)
    energy = dirichlet_form(g, u)
    if energy <= 0.0:
        raise DomainError("Hölder ratio undefined for zero-energy (constant) fields")
    xy = g.xy
    best = 0.0
    chunk = max(1, 2_000_000 // g.n_vertices)
    for start in range(0, g.n_vertices, chunk):
        sl = slice(start, start + chunk)
        d = np.sqrt(((xy[sl, None, :] - xy[None, :, :]) ** 2).sum(axis=-1))
        du = np.abs(u[sl, None] - u[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            q = np.where(d > 0, du / d**HOLDER_EXPONENT, 0.0)
        best = max(best, float(q.max()))
    return best / math.sqrt(energy)


def triangle_energy(g: GasketGraph, u, block: TriangleBlock) -> float:
    """Finite-level energy of ``u`` carried by the edges inside ``block``."""
    if block.level != g.level:
        raise LevelMismatchError(f"block from level {block.level}, graph level {g.level}")
    u = as_values(g, u)
    span = 3**block.scale
    run = g.cells[block.index * span:(block.index + 1) * span]
    total = 0.0
    for a, b in ((0, 1), (1, 2), (2, 0)):
        d = u[run[:, b]] - u[run[:, a]]
        total += float(np.dot(d, d))
    return (5.0 / 3.0) ** g.level * total
