"""Matrix solutions of -Y'' + Q Y = lam Y, boundary forms, Weyl matrix, D-kernel.

The ODE is integrated with a sixth-order Magnus scheme (three Gauss nodes per
step) on a uniform grid of [0, pi]. The per-step Magnus exponent is affine in
lam, so it is precomputed once per (problem, grid) as Omega0 + lam * Omega1.
"""
from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .errors import (DimensionError, IntegrationDivergenceError, NearPoleError,
                     ResolutionError, ValidationError)
from .potentials import ClosedFormPotential, GridPotential, Potential, hermitian_part

DEFAULT_POINTS = 2048
MAX_STEP_PHASE = 0.5
D_KERNEL_SWITCH = 1e-6
OMEGA_GROUP_TOL = 1e-9

_GAUSS = np.array([0.5 - np.sqrt(15) / 10, 0.5, 0.5 + np.sqrt(15) / 10])
_BATCH = 64
_threads = 1


def set_threads(n: int) -> None:
    """Cap the number of worker threads used for batched integrations."""
    global _threads
    _threads = max(1, int(n))


@dataclass(frozen=True)
class Grid:
    """Uniform partition of [0, pi] with `points` nodes."""

    points: int = DEFAULT_POINTS

    def __post_init__(self):
        if self.points < 3:
            raise ValidationError("a grid needs at least 3 points")

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, np.pi, self.points)

    @property
    def step(self) -> float:
        return np.pi / (self.points - 1)


def as_grid(grid) -> Grid:
    if grid is None:
        return Grid()
    if isinstance(grid, Grid):
        return grid
    return Grid(int(grid))


class OmegaClass:
    """Diagonal nondecreasing omega with its groups of equal values.

    group_bounds holds 0-based group starts followed by m, so group s covers
    indices group_bounds[s] .. group_bounds[s+1]-1.
    """

    def __init__(self, omega_values, tol: float = OMEGA_GROUP_TOL):
        w = np.asarray(omega_values, dtype=float).ravel()
        if w.size == 0:
            raise ValidationError("omega needs at least one value")
        if np.any(np.diff(w) < -tol * max(1.0, np.max(np.abs(w)))):
            raise ValidationError("omega values must be nondecreasing")
        scale = tol * max(1.0, float(np.max(np.abs(w))))
        bounds = [0]
        for q in range(1, w.size):
            if w[q] - w[bounds[-1]] > scale:
                bounds.append(q)
        bounds.append(w.size)
        # snap values inside a group to the group's first value
        w = w.copy()
        for s in range(len(bounds) - 1):
            w[bounds[s]:bounds[s + 1]] = w[bounds[s]]
        w.setflags(write=False)
        self.omega_values = w
        self.group_bounds = tuple(bounds)
        self.m = w.size
        self.p = len(bounds) - 1
        proj = np.zeros((self.p, self.m, self.m))
        for s in range(self.p):
            idx = np.arange(bounds[s], bounds[s + 1])
            proj[s, idx, idx] = 1.0
        proj.setflags(write=False)
        self.group_projectors = proj

    @classmethod
    def from_matrix(cls, w, tol: float = 1e-9) -> "OmegaClass":
        w = np.atleast_2d(np.asarray(w, dtype=complex))
        off = w - np.diag(np.diag(w))
        if np.max(np.abs(off)) > tol * max(1.0, np.max(np.abs(w))):
            raise ValidationError("omega matrix is not diagonal")
        return cls(np.real(np.diag(w)))

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.omega_values)

    def groups(self):
        b = self.group_bounds
        return [range(b[s], b[s + 1]) for s in range(self.p)]

    def group_of(self, q: int) -> int:
        return int(np.searchsorted(self.group_bounds, q, side="right") - 1)

    def representative(self, q: int) -> int:
        return self.group_bounds[self.group_of(q)]

    def __eq__(self, other):
        return isinstance(other, OmegaClass) and np.array_equal(self.omega_values, other.omega_values)

    def __hash__(self):
        return hash(self.omega_values.tobytes())

    def __repr__(self):
        return f"OmegaClass({self.omega_values.tolist()})"


def _as_potential(Q, m_hint=None) -> Potential:
    if isinstance(Q, Potential):
        return Q
    a = np.asarray(Q, dtype=complex)
    if a.ndim <= 2 and (a.ndim < 2 or a.shape[0] == a.shape[-1]) and (m_hint is None or a.size == m_hint ** 2):
        return ClosedFormPotential.constant(np.atleast_2d(a))
    return GridPotential(a)


class Problem:
    """Boundary value problem -Y'' + Q Y = lam Y, Y'(0) = h Y(0), Y'(pi) = -H Y(pi).

    Q may be a Potential, an (m, m) constant or grid samples (points, m, m).
    h and H are symmetrized on ingestion. `omega` is the OmegaClass when
    h + H + (1/2) int Q is diagonal nondecreasing, otherwise None.
    """

    def __init__(self, Q, h, H):
        h = np.atleast_2d(np.asarray(h, dtype=complex))
        H = np.atleast_2d(np.asarray(H, dtype=complex))
        if h.shape != H.shape or h.shape[0] != h.shape[1]:
            raise DimensionError("h and H must be square matrices of equal size")
        self.Q = _as_potential(Q, h.shape[0])
        if self.Q.m != h.shape[0]:
            raise DimensionError(f"potential is {self.Q.m}x{self.Q.m} but h is {h.shape[0]}x{h.shape[0]}")
        self.h = hermitian_part(h, "h")
        self.H = hermitian_part(H, "H")
        self.h.setflags(write=False)
        self.H.setflags(write=False)
        self.m = h.shape[0]
        w = self.h + self.H + 0.5 * self.Q.integral()
        w.setflags(write=False)
        self.omega_matrix = w
        try:
            self.omega = OmegaClass.from_matrix(w)
        except ValidationError:
            self.omega = None
        self._plans = {}
        self._lock = threading.Lock()

    @property
    def is_real(self) -> bool:
        return bool(self.Q.is_real and not np.any(np.imag(self.h)) and not np.any(np.imag(self.H)))

    def plan(self, points: int):
        """Magnus exponents (Omega0, Omega1) for a grid with `points` nodes."""
        with self._lock:
            p = self._plans.get(points)
            if p is None:
                p = _magnus_plan(self.Q, self.m, points)
                self._plans[points] = p
        return p

    def __repr__(self):
        return f"Problem(m={self.m}, Q={type(self.Q).__name__})"


def _commutator(a, b):
    return a @ b - b @ a


def _magnus_plan(Q: Potential, m: int, points: int):
    steps = points - 1
    dx = np.pi / steps
    x0 = np.arange(steps) * dx
    qs = [Q(x0 + c * dx) for c in _GAUSS]
    out = []
    eye = np.eye(m)
    for lam in (0.0, 1.0):
        a = []
        for q in qs:
            A = np.zeros((steps, 2 * m, 2 * m), dtype=complex)
            A[:, :m, m:] = eye
            A[:, m:, :m] = q - lam * eye
            a.append(A)
        a1 = dx * a[1]
        a2 = np.sqrt(15.0) * dx / 3.0 * (a[2] - a[0])
        a3 = 10.0 * dx / 3.0 * (a[2] - 2.0 * a[1] + a[0])
        c1 = _commutator(a1, a2)
        c2 = -_commutator(a1, 2.0 * a3 + c1) / 60.0
        out.append(a1 + a3 / 12.0 + _commutator(-20.0 * a1 - a3 + c1, a2 + c2) / 240.0)
    o0 = np.ascontiguousarray(out[0])
    o1 = np.ascontiguousarray(out[1] - out[0])
    return o0, o1


def _shoot(problem: Problem, lams, z0, points: int, store: bool):
    """Integrate the first-order system for a batch of lam.

    z0 has shape (2m, k) or (B, 2m, k) and holds [Y(0); Y'(0)]. Returns the
    balanced, damped states (B, P, 2m, k) where P = points if store else 1,
    together with the balancing scale s = max(1, |rho|) and damping rate
    |Im rho| per lam. The true state at x_i is diag(I, s I) z * exp(|Im rho| x_i).
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    B = lams.size
    m = problem.m
    n = 2 * m
    z0 = np.asarray(z0, dtype=complex)
    if z0.ndim == 2:
        z0 = np.broadcast_to(z0, (B,) + z0.shape)
    if z0.shape[:2] != (B, n):
        raise DimensionError("initial data must have 2m rows")
    k = z0.shape[2]
    rho = np.sqrt(lams)
    scale = np.maximum(1.0, np.abs(rho))
    dx = np.pi / (points - 1)
    if np.any(scale * dx > MAX_STEP_PHASE):
        bad = lams[np.argmax(scale)]
        raise ResolutionError(f"grid with {points} points is too coarse for lambda={bad}")
    rate = np.abs(rho.imag)
    damp = np.exp(-rate * dx)
    o0, o1 = problem.plan(points)
    zb = z0.copy()
    zb[:, m:, :] /= scale[:, None, None]
    zb = np.moveaxis(zb, 0, -1)
    chunks = [slice(i, min(i + _BATCH, B)) for i in range(0, B, _BATCH)]

    def run(sl):
        zr = np.ascontiguousarray(zb[..., sl].real)
        zi = np.ascontiguousarray(zb[..., sl].imag)
        lr = np.ascontiguousarray(lams[sl].real)
        li = np.ascontiguousarray(lams[sl].imag)
        outr, outi = _kernels.propagate(o0, o1, lr, li, scale[sl], damp[sl], zr, zi, store)
        return np.moveaxis(outr + 1j * outi, -1, 0)

    if _threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=_threads) as ex:
            parts = list(ex.map(run, chunks))
    else:
        parts = [run(sl) for sl in chunks]
    out = np.concatenate(parts, axis=0)
    if not np.all(np.isfinite(out)):
        raise IntegrationDivergenceError("non-finite values during integration")
    return out, scale, rate


@dataclass(frozen=True, eq=False)
class MatrixSolution:
    """Samples of a matrix solution Y and Y' on a uniform grid."""

    lam: complex
    x: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    q_values: np.ndarray = field(repr=False)

    def __post_init__(self):
        for a in (self.x, self.values, self.derivatives, self.q_values):
            a.setflags(write=False)

    @property
    def m(self) -> int:
        return self.values.shape[-1]

    @property
    def step(self) -> float:
        return float(self.x[1] - self.x[0])

    def second_derivatives(self) -> np.ndarray:
        return (self.q_values - self.lam * np.eye(self.values.shape[1])) @ self.values

    def ode_residual(self) -> float:
        """Max of |-Y'' + (Q - lam) Y| at interior nodes, with Y'' from differencing Y'."""
        d2 = (self.derivatives[2:] - self.derivatives[:-2]) / (2 * self.step)
        r = -d2 + (self.q_values[1:-1] - self.lam * np.eye(self.values.shape[1])) @ self.values[1:-1]
        return float(np.max(np.abs(r)))

    def index_of(self, x: float) -> int:
        i = int(round(float(x) / self.step))
        if i < 0 or i >= self.x.size or abs(self.x[i] - x) > 1e-9 * max(1.0, self.step):
            raise ValueError(f"x={x} is not a grid point")
        return i


def _solutions_from_states(problem, lams, states, scale, rate, points, cols):
    x = np.linspace(0.0, np.pi, points)
    m = problem.m
    qv = problem.Q(x)
    sols = []
    for b, lam in enumerate(lams):
        g = np.exp(rate[b] * x)[:, None, None]
        z = states[b][..., cols]
        sols.append(MatrixSolution(complex(lam), x, z[:, :m, :] * g, z[:, m:, :] * (g * scale[b]), qv))
    return sols


def integrate_many(problem: Problem, lams, y0, dy0, grid=None) -> list:
    """integrate_solution for several lam sharing the same initial data."""
    grid = as_grid(grid)
    m = problem.m
    y0 = np.broadcast_to(np.asarray(y0, dtype=complex), (m, m))
    dy0 = np.broadcast_to(np.asarray(dy0, dtype=complex), (m, m))
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    z0 = np.concatenate([y0, dy0], axis=0)
    states, scale, rate = _shoot(problem, lams, z0, grid.points, True)
    sols = _solutions_from_states(problem, lams, states, scale, rate, grid.points, slice(None))
    for s in sols:
        # initial values are exact by construction; remove balancing round-off
        object.__setattr__(s, "values", _with_row0(s.values, y0))
        object.__setattr__(s, "derivatives", _with_row0(s.derivatives, dy0))
    return sols


def _with_row0(a, v):
    a = np.array(a)
    a[0] = v
    a.setflags(write=False)
    return a


def integrate_solution(problem: Problem, lam: complex, y0, dy0, grid=None) -> MatrixSolution:
    """Solve -Y'' + QY = lam Y with Y(0) = y0, Y'(0) = dy0 on the grid."""
    return integrate_many(problem, [lam], y0, dy0, grid)[0]


def phi_solution(problem: Problem, lam, grid=None) -> MatrixSolution:
    """phi(x, lam): phi(0) = I, phi'(0) = h."""
    return integrate_solution(problem, lam, np.eye(problem.m), problem.h, grid)


def s_solution(problem: Problem, lam, grid=None) -> MatrixSolution:
    """S(x, lam): S(0) = 0, S'(0) = I."""
    return integrate_solution(problem, lam, np.zeros((problem.m, problem.m)), np.eye(problem.m), grid)


def boundary_form_U(sol: MatrixSolution, h) -> np.ndarray:
    """U(Y) = Y'(0) - h Y(0)."""
    return sol.derivatives[0] - np.asarray(h) @ sol.values[0]


def boundary_form_V(sol: MatrixSolution, H) -> np.ndarray:
    """V(Y) = Y'(pi) + H Y(pi)."""
    return sol.derivatives[-1] + np.asarray(H) @ sol.values[-1]


def boundary_values(problem: Problem, lams, points: int = DEFAULT_POINTS):
    """Scaled V(phi) and V(S) for a batch of lam.

    Returns (Vphi, VS, log_factor) with the true matrices equal to
    Vphi * exp(log_factor) and VS * exp(log_factor).
    """
    m = problem.m
    z0 = np.zeros((2 * m, 2 * m), dtype=complex)
    z0[:m, :m] = np.eye(m)
    z0[m:, :m] = problem.h
    z0[m:, m:] = np.eye(m)
    states, scale, rate = _shoot(problem, lams, z0, points, False)
    z = states[:, 0]
    top = z[:, :m, :]
    bot = z[:, m:, :] * scale[:, None, None]
    V = bot + problem.H @ top
    return V[:, :, :m], V[:, :, m:], rate * np.pi


def scaled_characteristic(problem: Problem, lams, points: int = DEFAULT_POINTS):
    """det V(phi) divided by the positive factor exp(m pi |Im rho|) (1 + |rho|)^m.

    Dividing by a positive factor keeps the argument, so winding numbers and
    real-axis signs are those of the characteristic function. Returns
    (values, log_factor).
    """
    lams = np.atleast_1d(np.asarray(lams, dtype=complex))
    vphi, _, logf = boundary_values(problem, lams, points)
    g = 1.0 + np.abs(np.sqrt(lams))
    d = np.linalg.det(vphi / g[:, None, None])
    return d, problem.m * (logf + np.log(g))


def characteristic_function(problem: Problem, lam, grid=None):
    """Delta(lam) = det V(phi(., lam)). Accepts a scalar or an array of lam."""
    grid = as_grid(grid)
    arr = np.asarray(lam, dtype=complex)
    d, logf = scaled_characteristic(problem, arr.ravel(), grid.points)
    out = d * np.exp(logf)
    return complex(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)


def _check_poles(lam, eigenvalues, guard):
    if eigenvalues is None:
        return
    ev = np.asarray(eigenvalues, dtype=complex).ravel()
    if ev.size == 0:
        return
    d = np.abs(ev - lam)
    j = int(np.argmin(d))
    if d[j] <= guard * max(1.0, abs(ev[j])):
        raise NearPoleError(lam, ev[j].real if ev[j].imag == 0 else ev[j])


def weyl_matrix(problem: Problem, lam, grid=None, eigenvalues=None, pole_guard: float = 1e-9,
                max_condition: float = 1e13) -> np.ndarray:
    """M(lam) = -V(phi)^{-1} V(S).

    Raises NearPoleError when lam lies within pole_guard (relative) of one of
    the given eigenvalues, or when V(phi) is numerically singular.
    """
    grid = as_grid(grid)
    lam = complex(lam)
    _check_poles(lam, eigenvalues, pole_guard)
    vphi, vs, _ = boundary_values(problem, [lam], grid.points)
    sv = np.linalg.svd(vphi[0], compute_uv=False)
    scale = max(sv[0], np.linalg.norm(vs[0], 2) * (1.0 + np.sqrt(abs(lam))))
    if sv[-1] * max_condition <= scale:
        raise NearPoleError(lam, None, f"V(phi) is singular at lambda={lam!r}")
    return -np.linalg.solve(vphi[0], vs[0])


def weyl_matrices(problem: Problem, lams, points: int = DEFAULT_POINTS) -> np.ndarray:
    """Batched M(lam) without pole checks (used on contours)."""
    vphi, vs, _ = boundary_values(problem, lams, points)
    return -np.linalg.solve(vphi, vs)


def weyl_solution(problem: Problem, lam, grid=None, eigenvalues=None) -> MatrixSolution:
    """Phi = phi M + S, the solution with U(Phi) = I and V(Phi) = 0."""
    grid = as_grid(grid)
    M = weyl_matrix(problem, lam, grid, eigenvalues)
    phi = phi_solution(problem, lam, grid)
    s = s_solution(problem, lam, grid)
    return MatrixSolution(complex(lam), phi.x, phi.values @ M + s.values,
                          phi.derivatives @ M + s.derivatives, phi.q_values)


def _hermite_increments(fa, fb, da, db, sa, sb, dx):
    # exact for quintics: two-point Hermite rule using f, f', f''
    return 0.5 * dx * (fa + fb) + dx ** 2 / 10.0 * (da - db) + dx ** 3 / 120.0 * (sa + sb)


def gram_integral(sol_a: MatrixSolution, sol_b: MatrixSolution) -> np.ndarray:
    """Cumulative int_0^x A(t)* B(t) dt on the grid, shape (points, m, m).

    With A = phi(., conj(mu)) and B = phi(., lam) this is D(x, lam, mu).
    """
    if sol_a.x.shape != sol_b.x.shape or not np.allclose(sol_a.x, sol_b.x):
        raise DimensionError("solutions live on different grids")
    za = np.conj(np.swapaxes(sol_a.values, -1, -2))
    dza = np.conj(np.swapaxes(sol_a.derivatives, -1, -2))
    dda = np.conj(np.swapaxes(sol_a.second_derivatives(), -1, -2))
    yb, dyb, ddb = sol_b.values, sol_b.derivatives, sol_b.second_derivatives()
    f = za @ yb
    df = dza @ yb + za @ dyb
    d2f = dda @ yb + 2.0 * dza @ dyb + za @ ddb
    inc = _hermite_increments(f[:-1], f[1:], df[:-1], df[1:], d2f[:-1], d2f[1:], sol_a.step)
    out = np.zeros_like(f)
    out[1:] = np.cumsum(inc, axis=0)
    return out


def bilinear_form(sol_a: MatrixSolution, sol_b: MatrixSolution) -> np.ndarray:
    """<Z, Y> = Z'Y - ZY' with Z = A*, on the whole grid."""
    za = np.conj(np.swapaxes(sol_a.values, -1, -2))
    dza = np.conj(np.swapaxes(sol_a.derivatives, -1, -2))
    return dza @ sol_b.values - za @ sol_b.derivatives


def d_kernel_on_grid(sol_a: MatrixSolution, sol_b: MatrixSolution, switch: float = D_KERNEL_SWITCH) -> np.ndarray:
    """D(x, lam, mu) at every grid node; sol_a is phi at conj(mu), sol_b is phi at lam."""
    mu = np.conj(sol_a.lam)
    lam = sol_b.lam
    if abs(lam - mu) < switch:
        return gram_integral(sol_a, sol_b)
    return bilinear_form(sol_a, sol_b) / (lam - mu)


def d_kernel(sol_a: MatrixSolution, sol_b: MatrixSolution, x: float, switch: float = D_KERNEL_SWITCH) -> np.ndarray:
    """D(x, lam, mu) = <phi*(x, conj mu), phi(x, lam)> / (lam - mu).

    sol_a must hold phi(., conj(mu)) (for real mu simply phi(., mu)) and sol_b
    phi(., lam). For |lam - mu| < switch the integral form is used.
    """
    i = sol_b.index_of(x)
    mu = np.conj(sol_a.lam)
    lam = sol_b.lam
    if abs(lam - mu) < switch:
        return gram_integral(sol_a, sol_b)[i]
    za = np.conj(sol_a.values[i].T)
    dza = np.conj(sol_a.derivatives[i].T)
    return (dza @ sol_b.values[i] - za @ sol_b.derivatives[i]) / (lam - mu)


# ---------------------------------------------------------------------------
# model problem: Q = (2/pi) omega, h = H = 0


def model_problem(omega: OmegaClass) -> Problem:
    m = omega.m
    return Problem(ClosedFormPotential.constant(2.0 / np.pi * omega.matrix), np.zeros((m, m)), np.zeros((m, m)))


def sin_over(w, x):
    """sin(w x) / w with the limit x at w = 0; broadcasts."""
    w = np.asarray(w, dtype=complex)
    x = np.asarray(x, dtype=float)
    wx = w * x
    small = np.abs(wx) < 0.1
    safe_w = np.where(small, 1.0, w)
    direct = np.sin(wx) / safe_w
    z = wx * wx
    series = x * (1 - z / 6 * (1 - z / 20 * (1 - z / 42 * (1 - z / 72 * (1 - z / 110)))))
    return np.where(small, series, direct)


def model_mu(omega: OmegaClass, lam) -> np.ndarray:
    """mu_q = sqrt(lam - 2 omega_q / pi), principal branch; shape lam.shape + (m,)."""
    lam = np.asarray(lam, dtype=complex)
    return np.sqrt(lam[..., None] - 2.0 / np.pi * omega.omega_values)


def model_solution(omega: OmegaClass, lam, grid=None, kind: str = "phi") -> MatrixSolution:
    """Closed-form phi (kind='phi') or S (kind='S') of the model problem."""
    grid = as_grid(grid)
    x = grid.x
    mu = model_mu(omega, lam)
    xm = x[:, None]
    if kind == "phi":
        v = np.cos(mu * xm)
        d = -mu * mu * sin_over(mu, xm)
    elif kind == "S":
        v = sin_over(mu, xm)
        d = np.cos(mu * xm).astype(complex)
    else:
        raise ValueError("kind must be 'phi' or 'S'")
    eye = np.eye(omega.m)
    q = np.broadcast_to(2.0 / np.pi * omega.matrix.astype(complex), (x.size, omega.m, omega.m))
    return MatrixSolution(complex(lam), x, v[:, :, None] * eye, d[:, :, None] * eye, np.array(q))


def model_channel_kernel(c, x, lam, mu):
    """int_0^x cos(a t) cos(b t) dt with a = sqrt(lam - c), b = sqrt(mu - c); broadcasts."""
    a = np.sqrt(np.asarray(lam, dtype=complex) - c)
    b = np.sqrt(np.asarray(mu, dtype=complex) - c)
    s = a + b
    diff = np.where(s == 0, 0.0, (np.asarray(lam, dtype=complex) - mu) / np.where(s == 0, 1.0, s))
    return 0.5 * (sin_over(diff, x) + sin_over(s, x))


def model_d_kernel(omega: OmegaClass, x, lam, mu) -> np.ndarray:
    """Model D-kernel D~(x, lam, mu), a diagonal m x m matrix."""
    c = 2.0 / np.pi * omega.omega_values
    return np.diag(model_channel_kernel(c, float(x), lam, mu))
