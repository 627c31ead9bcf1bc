"""The discrete nonlinear heat equation ``du/dt = Δ_n φ(u)`` on ``Γ_n``.

Interior values evolve, corner values stay at ``α_i``. The default scheme
is classical RK4 with ``dt = θ ε₀ 5**-n / 2``; the right-hand side has
Jacobian entries of size ``4·5**n·φ'``, so the step must scale like
``5**-n``. Backward Euler with Newton iterations covers stiffer ranges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import PchipInterpolator
from scipy.optimize import brentq

from .errors import DivergenceError, DomainError, SolverError, ValidationError
from .gasket import GasketGraph
from .green import hminus1_norm_sq_many
from .operators import _interior_system, as_values, dirichlet_form, inner, smallest_eigenpairs

DEFAULT_THETA = 0.5


@dataclass(frozen=True)
class PhiFunction:
    """Macroscopic flux ``φ`` with its derivative and ellipticity ``ε₀``.

    ``ε₀ <= φ' <= 1/ε₀`` is required on ``[0, u_max]``.
    """

    name: str
    value: object
    derivative: object
    eps0: float
    u_max: float = math.inf
    inverse: object = None

    def __post_init__(self):
        if not 0.0 < self.eps0 <= 1.0:
            raise ValidationError(f"ε₀ must lie in (0, 1], got {self.eps0}")
        if float(self.value(np.array([0.0]))[0]) < 0.0:
            raise ValidationError("φ(0) must be non-negative")

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        return self.value(np.maximum(u, 0.0))

    def prime(self, u):
        u = np.asarray(u, dtype=float)
        return self.derivative(np.maximum(u, 0.0))

    def invert(self, phi):
        """``φ⁻¹`` (closed form when known, otherwise bracketed root finding)."""
        phi = np.asarray(phi, dtype=float)
        if self.inverse is not None:
            return self.inverse(phi)
        out = np.empty_like(phi)
        for idx, target in np.ndenumerate(phi):
            f = lambda s: float(self(np.array([s]))[0]) - target  # noqa: E731
            hi = self.u_max if math.isfinite(self.u_max) else 1.0
            while f(hi) < 0.0:
                hi *= 2.0
                if hi > 1e12:
                    raise DomainError(f"φ⁻¹({target}) out of reach")
            out[idx] = brentq(f, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps)
        return out

    def check_ellipticity(self, samples: int = 2049) -> None:
        """Raise :class:`ValidationError` if sampled ``φ'`` leaves ``[ε₀, 1/ε₀]``."""
        top = self.u_max if math.isfinite(self.u_max) else 10.0
        d = self.prime(np.linspace(0.0, top, samples))
        if d.min() < self.eps0 * (1 - 1e-12) or d.max() > (1 + 1e-12) / self.eps0:
            raise ValidationError(
                f"φ' ranges over [{d.min():.4g}, {d.max():.4g}], inconsistent with ε₀={self.eps0:.4g}"
            )


def phi_linear() -> PhiFunction:
    return PhiFunction("linear", lambda u: np.array(u, dtype=float), lambda u: np.ones_like(u), 1.0,
                       inverse=lambda p: np.array(p, dtype=float))


def phi_zr_geometric(u_max: float = 2.0) -> PhiFunction:
    """``φ(u) = u/(1+u)``, the flux of the indicator-rate zero-range process.

    ``ε₀ = (1+u_max)**-2`` on the working range ``[0, u_max]``.
    """
    if not u_max > 0:
        raise ValidationError("u_max must be positive")
    return PhiFunction(
        "zr-geometric",
        lambda u: u / (1.0 + u),
        lambda u: 1.0 / (1.0 + u) ** 2,
        1.0 / (1.0 + u_max) ** 2,
        u_max=u_max,
        inverse=lambda p: p / (1.0 - p),
    )


def phi_from_table(u, phi, eps0=None) -> PhiFunction:
    """Monotone piecewise-cubic ``φ`` through the points ``(u_k, φ_k)``."""
    u = np.asarray(u, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if u.ndim != 1 or u.shape != phi.shape or len(u) < 2:
        raise ValidationError("φ table needs two matching 1-d columns with at least 2 rows")
    if u[0] != 0.0 or np.any(np.diff(u) <= 0) or np.any(np.diff(phi) <= 0):
        raise ValidationError("φ table must start at u=0 and be strictly increasing in both columns")
    spline = PchipInterpolator(u, phi, extrapolate=True)
    deriv = spline.derivative()
    if eps0 is None:
        d = deriv(np.linspace(u[0], u[-1], 4097))
        eps0 = float(min(d.min(), 1.0 / d.max(), 1.0))
    # inverted by root finding so φ⁻¹∘φ is exact to round-off
    return PhiFunction("custom-table", spline, deriv, float(eps0), u_max=float(u[-1]))


@dataclass
class PdeProblem:
    """Cauchy-Dirichlet problem on ``Γ_n``.

    ``u0`` must be non-negative with ``u0(a_i) = α_i``. ``scheme`` is
    ``"rk4"`` or ``"implicit"``; ``dt`` overrides the default step.
    """

    graph: GasketGraph
    u0: np.ndarray
    phi: PhiFunction
    T: float
    alpha: tuple = (0.0, 0.0, 0.0)
    scheme: str = "rk4"
    theta: float = DEFAULT_THETA
    dt: float | None = None
    n_geometric: int = 20
    n_uniform: int = 20
    sample_times: np.ndarray | None = None
    newton_tol: float = 1e-12
    newton_maxiter: int = 50

    def __post_init__(self):
        g = self.graph
        self.u0 = np.array(as_values(g, self.u0), dtype=float)
        self.alpha = tuple(float(a) for a in self.alpha)
        if not self.T > 0:
            raise ValidationError(f"horizon T must be positive, got {self.T}")
        if min(self.alpha) < 0:
            raise ValidationError("boundary values must be non-negative")
        if np.any(self.u0 < 0) or not np.all(np.isfinite(self.u0)):
            raise ValidationError("initial field must be finite and non-negative")
        if np.any(np.abs(self.u0[list(g.boundary)] - np.array(self.alpha)) > 1e-12 * (1 + max(self.alpha))):
            raise ValidationError("initial field must equal α_i at the corners")
        if self.scheme not in ("rk4", "implicit"):
            raise ValidationError(f"unknown scheme {self.scheme!r}")

    def default_dt(self) -> float:
        return self.theta * self.phi.eps0 * 5.0 ** (-self.graph.level) / 2.0

    def times(self) -> np.ndarray:
        """Hybrid geometric plus uniform sample grid on ``[0, T]``."""
        if self.sample_times is not None:
            t = np.unique(np.concatenate([[0.0], np.asarray(self.sample_times, float), [self.T]]))
        else:
            geo = self.T * np.geomspace(1e-3, 1.0, self.n_geometric) if self.n_geometric else []
            uni = np.linspace(0.0, self.T, self.n_uniform + 1)
            t = np.unique(np.concatenate([[0.0], geo, uni]))
        if t[0] < 0 or t[-1] > self.T * (1 + 1e-15):
            raise ValidationError("sample times must lie in [0, T]")
        return t


@dataclass
class PdeTrace:
    """Samples of ``u_t`` with ``‖u_t‖²_0`` and ``∫_0^t ‖u_s‖²_1 ds``."""

    level: int
    times: np.ndarray
    fields: np.ndarray
    l2_sq: np.ndarray
    energy_integral: np.ndarray
    alpha: tuple = (0.0, 0.0, 0.0)
    steps: int = 0
    meta: dict = field(default_factory=dict)

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-12 * max(1.0, abs(t)):
            raise DomainError(f"time {t} is not a sample time of the trace")
        return self.fields[k]


class _Rhs:
    """Interior right-hand side ``B φ(α) - A φ(u)`` of ``du/dt = Δ_n φ(u)``."""

    def __init__(self, g: GasketGraph, phi: PhiFunction, alpha):
        A, B = _interior_system(g)
        self.A = A.tocsr()
        self.phi = phi
        self.src = B @ phi(np.asarray(alpha, dtype=float))

    def __call__(self, u):
        return self.src - self.A @ self.phi(u)


def _energy(g: GasketGraph, full: np.ndarray, u_int: np.ndarray) -> float:
    full[g.interior] = u_int
    return dirichlet_form(g, full)


def integrate(problem: PdeProblem) -> PdeTrace:
    """Evolve ``problem`` to ``T`` and sample on its time grid.

    The step is shortened so every sample time is hit exactly. The energy
    integral is accumulated by the trapezoid rule at every step.
    """
    g = problem.graph
    times = problem.times()
    dt_max = problem.dt if problem.dt is not None else problem.default_dt()
    if not dt_max > 0 or dt_max < 1e-300:
        raise SolverError(f"step size {dt_max!r} underflows")
    rhs = _Rhs(g, problem.phi, problem.alpha)
    interior = g.interior
    full = problem.u0.copy()
    u = full[interior].copy()

    fields = np.empty((len(times), g.n_vertices))
    l2 = np.empty(len(times))
    eint = np.empty(len(times))
    fields[0] = full
    l2[0] = inner(g, full, full)
    eint[0] = 0.0
    acc = 0.0
    e_prev = _energy(g, full, u)
    steps = 0
    implicit = _BackwardEuler(g, problem, rhs) if problem.scheme == "implicit" else None
    for k in range(1, len(times)):
        span = times[k] - times[k - 1]
        m = max(1, math.ceil(span / dt_max - 1e-9))
        h = span / m
        for _ in range(m):
            if implicit is None:
                k1 = rhs(u)
                k2 = rhs(u + 0.5 * h * k1)
                k3 = rhs(u + 0.5 * h * k2)
                k4 = rhs(u + h * k3)
                u = u + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            else:
                u = implicit.step(u, h)
            steps += 1
            e_new = _energy(g, full, u)
            acc += 0.5 * h * (e_prev + e_new)
            e_prev = e_new
        if not np.all(np.isfinite(u)):
            raise DivergenceError(f"solution blew up before t={times[k]:.6g}")
        full[interior] = u
        fields[k] = full
        l2[k] = inner(g, full, full)
        eint[k] = acc
    return PdeTrace(
        level=g.level,
        times=times,
        fields=fields,
        l2_sq=l2,
        energy_integral=eint,
        alpha=problem.alpha,
        steps=steps,
        meta={"scheme": problem.scheme, "dt_max": dt_max, "phi": problem.phi.name, "eps0": problem.phi.eps0},
    )


class _BackwardEuler:
    def __init__(self, g, problem, rhs):
        self.A = rhs.A
        self.rhs = rhs
        self.phi = problem.phi
        self.tol = problem.newton_tol
        self.maxiter = problem.newton_maxiter
        self.eye = sp.identity(self.A.shape[0], format="csr")

    def step(self, u_old, h):
        u = u_old.copy()
        scale = 1.0 + float(np.abs(u_old).max(initial=0.0))
        for it in range(self.maxiter):
            F = u - u_old - h * self.rhs(u)
            if np.abs(F).max(initial=0.0) <= self.tol * scale:
                return u
            J = self.eye + h * (self.A @ sp.diags(self.phi.prime(u)))
            u = u - spla.spsolve(J.tocsc(), F)
        F = u - u_old - h * self.rhs(u)
        res = float(np.abs(F).max(initial=0.0))
        if res <= self.tol * scale:
            return u
        raise SolverError(f"Newton did not converge (residual {res:.3e})", residual=res, iterations=self.maxiter)


# -- estimates ---------------------------------------------------------------


def energy_report(trace: PdeTrace, eps0: float) -> tuple[float, float]:
    """Both sides of ``‖u_T‖² + 2ε₀ ∫_0^T E_n(u_t) dt <= ‖u_0‖²``."""
    if any(a != 0.0 for a in trace.alpha):
        raise DomainError("the energy estimate is stated for zero boundary values")
    lhs = float(trace.l2_sq[-1] + 2.0 * eps0 * trace.energy_integral[-1])
    return lhs, float(trace.l2_sq[0])


def max_principle_violation(trace: PdeTrace, g: GasketGraph) -> float:
    """Largest excursion of ``u`` outside ``[min(u0, α), max(u0, α)]``."""
    u0 = trace.fields[0]
    lo = min(u0.min(), min(trace.alpha))
    hi = max(u0.max(), max(trace.alpha))
    return float(max(lo - trace.fields.min(), trace.fields.max() - hi, 0.0))


@dataclass
class ContractionResult:
    times: np.ndarray
    hminus1_sq: np.ndarray

    def max_increase(self) -> float:
        d = np.diff(self.hminus1_sq)
        return float(max(d.max(initial=0.0), 0.0))


def contraction_check(problem: PdeProblem, v0) -> ContractionResult:
    """``‖u_t - v_t‖²_{-1,n}`` along the flows from ``problem.u0`` and ``v0``."""
    other = PdeProblem(**{**problem.__dict__, "u0": v0})
    tu = integrate(problem)
    tv = integrate(other)
    diff = tu.fields - tv.fields
    diff[:, list(problem.graph.boundary)] = 0.0
    return ContractionResult(times=tu.times, hminus1_sq=hminus1_norm_sq_many(problem.graph, diff))


def spectral_solution(g: GasketGraph, u0, times) -> np.ndarray:
    """Exact linear flow ``u_t = exp(t Δ_n^D) u_0`` for ``φ(u) = u``, ``α = 0``."""
    u0 = as_values(g, u0)
    if np.any(u0[list(g.boundary)] != 0.0):
        raise DomainError("spectral oracle needs zero boundary values")
    m = len(g.interior)
    pairs = smallest_eigenpairs(g, m)
    lam = np.array([p[0] for p in pairs])
    basis = np.array([p[1] for p in pairs])
    coef = basis @ u0 * 3.0 ** (-g.level)
    times = np.asarray(times, dtype=float)
    return (np.exp(-np.outer(times, lam)) * coef) @ basis


def fitted_decay_rate(times, values) -> float:
    """Least-squares slope of ``-log(values)`` against ``times``."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = values > 0
    if keep.sum() < 2:
        raise DomainError("need at least two positive samples to fit a decay rate")
    slope = np.polyfit(times[keep], np.log(values[keep]), 1)[0]
    return float(-slope)
