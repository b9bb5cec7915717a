"""Reconstruction of (Q, h, H) from spectral data by the truncated main equation.

Index set V: triples (n, q, i) with n <= N, q < m, i in {0, 1}; i = 0 refers to
the given data and i = 1 to the model data. Flat block position is
n * 2m + 2q + i. All blocks are m x m matrices.
"""
from __future__ import annotations

import logging
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, IllConditionedError, NearPoleError, ValidationError
from .operator_core import OmegaClass, model_channel_kernel, model_mu, sin_over
from .spectral_data import SpectralData, same_value

log = logging.getLogger(__name__)

MAX_CONDITION = 1e12
RESIDUAL_TOL = 1e-10
NEAR_SWITCH = 1e-3
DEFAULT_X_POINTS = 1024
XI_NOISE = 1e-8


def model_spectral_data(omega: OmegaClass, N: int) -> SpectralData:
    """Spectral data of Q = (2/pi) omega, h = H = 0 up to n = N."""
    m = omega.m
    n = np.arange(N + 1)
    lam = n[:, None] ** 2 + 2.0 / np.pi * omega.omega_values[None, :]
    c = np.where(n == 0, 1.0 / np.pi, 2.0 / np.pi)
    own = np.zeros((N + 1, m, m, m))
    for q in range(m):
        own[:, q, q, q] = c
    alpha = own.copy()
    # shared residue for coinciding values
    tmp = SpectralData(omega, lam, alpha)
    for g in tmp.value_groups():
        if len(g) > 1:
            s = sum(own[nq] for nq in g)
            for nq in g:
                alpha[nq] = s
    return SpectralData(omega, lam, alpha)


@dataclass(frozen=True)
class XiWeights:
    xi: np.ndarray
    chi: np.ndarray
    Omega: float


def compute_xi(data: SpectralData, model_data: SpectralData) -> XiWeights:
    """Per-cluster distance xi_n between the data and the model data."""
    if data.m != model_data.m:
        raise DimensionError("data and model data have different m")
    if data.N_max != model_data.N_max:
        raise ValidationError("data and model data cover different index ranges")
    r, rt = data.rho, model_data.rho
    reps = [data.omega.representative(q) for q in range(data.m)]
    xi = np.sum(np.abs(r - rt), axis=1)
    xi = xi + np.sum(np.abs(r - r[:, reps]), axis=1) + np.sum(np.abs(rt - rt[:, reps]), axis=1)
    da = data.alpha_groups() - model_data.alpha_groups()
    xi = xi + np.sum(np.max(np.abs(da), axis=(2, 3)), axis=1)
    chi = np.where(xi != 0, 1.0 / np.where(xi != 0, xi, 1.0), 0.0)
    n = np.arange(xi.size)
    return XiWeights(xi, chi, float(np.sqrt(np.sum(((n + 1) * xi) ** 2))))


def block_transforms(omega: OmegaClass, xi: XiWeights):
    """X_n (phi -> psi) and Y_n (psi -> phi), each of shape (N+1, 2m, 2m)."""
    m = omega.m
    N1 = xi.xi.size
    X = np.zeros((N1, 2 * m, 2 * m))
    Y = np.zeros((N1, 2 * m, 2 * m))
    for n in range(N1):
        ch, x = xi.chi[n], xi.xi[n]
        for q in range(m):
            r = omega.representative(q)
            q0, q1, r0, r1 = 2 * q, 2 * q + 1, 2 * r, 2 * r + 1
            if q == r:
                X[n, r0, r0] = ch
                X[n, r1, r0] = -ch
                X[n, r1, r1] = 1.0
                Y[n, r1, r1] = 1.0
                Y[n, r1, r0] = 1.0
                Y[n, r0, r0] = x
            else:
                for i in (0, 1):
                    X[n, 2 * q + i, 2 * q + i] = ch
                    X[n, 2 * r + i, 2 * q + i] = -ch
                Y[n, r1, q1] = 1.0
                Y[n, q1, q1] = x
                Y[n, r1, q0] = 1.0
                Y[n, r0, q0] = x
                Y[n, q0, q0] = x
    return X, Y


@dataclass
class _Tables:
    """x-independent quantities shared by all per-x systems."""

    omega: OmegaClass
    N: int
    lam: np.ndarray      # (V,)
    ap: np.ndarray       # (V, m, m) alpha' per index
    sign: np.ndarray     # (V,)
    X: np.ndarray        # (N+1, 2m, 2m)
    Y: np.ndarray
    xi: XiWeights
    real: bool
    near: tuple          # index arrays of (u, v, q) needing the stable kernel form
    shifted: np.ndarray  # (V, m) lam_u - c_q
    W: np.ndarray = None  # (N+1, m_y, 2m_d, 2m_c * m_x): Y[k, c, d] sign alpha'[(k, d), x, y]


def _cluster_apply(T, arr):
    """new[(k, b)] = sum_a T[k, a, b] arr[(k, a)] for arr with leading axis V = (N+1) * 2m."""
    N1, w, _ = T.shape
    shp = arr.shape
    out = np.matmul(np.swapaxes(T, 1, 2), arr.reshape(N1, w, -1))
    return out.reshape(shp)


def _tables(data: SpectralData, model_data: SpectralData, xi: XiWeights, N: int) -> _Tables:
    m = data.m
    d = data.truncated(N)
    md = model_data.truncated(N)
    V = 2 * m * (N + 1)
    lam = np.empty(V)
    ap = np.empty((V, m, m), dtype=complex)
    lam[0::2] = np.real(d.lam).ravel()
    lam[1::2] = np.real(md.lam).ravel()
    ap[0::2] = d.alpha_prime.reshape(-1, m, m)
    ap[1::2] = md.alpha_prime.reshape(-1, m, m)
    sign = np.tile([1.0, -1.0], V // 2)
    sub = XiWeights(xi.xi[:N + 1], xi.chi[:N + 1], xi.Omega)
    X, Y = block_transforms(data.omega, sub)
    real = not np.any(np.imag(ap))
    if real:
        ap = ap.real
    c = 2.0 / np.pi * data.omega.omega_values
    dl = lam[:, None] - lam[None, :]
    near2 = np.abs(dl) < NEAR_SWITCH * np.maximum(1.0, np.abs(lam[:, None]))
    iu, iv = np.nonzero(near2)
    iq = np.tile(np.arange(m), iu.size)
    near = (np.repeat(iu, m), np.repeat(iv, m), iq)
    t = _Tables(data.omega, N, lam, ap, sign, X, Y, sub, real, near, lam[:, None] - c[None, :])
    S = (sign[:, None, None] * ap).reshape(N + 1, 2 * m, m, m)  # [k, d, x, y]
    W = np.einsum("kcd,kdxy->kydcx", Y, S)
    t.W = np.ascontiguousarray(W.reshape(N + 1, m, 2 * m, 2 * m * m))
    return t


def _channel_values(t: _Tables, x: float):
    """cos(a x), sin(a x)/a and d/dx cos(a x) per index and channel, a = sqrt(lam - c)."""
    a = np.sqrt(t.shifted.astype(complex))
    # lam is real, so both values are real (cosh/sinh below the channel threshold)
    cu = np.cos(a * x).real
    su = sin_over(a, x).real
    dcu = -t.shifted * su
    return cu, su, dcu


def _kernel_matrix(t: _Tables, x: float, cu, su):
    """D~(x, lam_u, lam_v) per channel, shape (V, V, m) indexed [u, v, q]."""
    lam = t.lam
    num = t.shifted[:, None, :] * su[:, None, :] * cu[None, :, :] - t.shifted[None, :, :] * su[None, :, :] * cu[:, None, :]
    dl = lam[:, None] - lam[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        D = num / dl[:, :, None]
    iu, iv, iq = t.near
    if iu.size:
        c = 2.0 / np.pi * t.omega.omega_values[iq]
        D[iu, iv, iq] = model_channel_kernel(c, x, lam[iu], lam[iv]).real
    return D


class MainEquationSystem:
    """psi~ blocks and R~ at one x.

    Internally R~ is kept as the matrix G with G[(u, y), (v, x)] = R~_{v,u}[x, y],
    so that the stacked transposed blocks of psi R~ equal G @ stack(psi).
    """

    def __init__(self, x, psi_tilde_T, G, tables, phi_tilde, dpsi_tilde_T=None, dG=None, dphi_tilde=None,
                 diag_psi_tilde=None):
        self.x = x
        self.diag_psi_tilde = diag_psi_tilde
        self.psi_tilde_T = psi_tilde_T
        self.G = G
        self.tables = tables
        self.phi_tilde = phi_tilde
        self.dpsi_tilde_T = dpsi_tilde_T
        self.dG = dG
        self.dphi_tilde = dphi_tilde

    @property
    def size(self) -> int:
        return self.tables.lam.size

    @property
    def m(self) -> int:
        return self.tables.omega.m

    @property
    def psi_tilde(self) -> np.ndarray:
        return _unstack_T(self.psi_tilde_T, self.size, self.m)

    @property
    def R_tilde(self) -> np.ndarray:
        """Blocks R~[v, u] as an array (V, V, m, m)."""
        V, m = self.size, self.m
        return self.G.reshape(V, m, V, m).transpose(2, 0, 3, 1)

    @property
    def dR_tilde(self) -> np.ndarray:
        """Blocks of d/dx R~ (assembled on demand; the solver does not need them)."""
        if self.dG is None:
            t = self.tables
            cu, _, _ = _channel_values(t, self.x)
            self.dG = _sandwich(t, cu[:, None, :] * cu[None, :, :])
        V, m = self.size, self.m
        return self.dG.reshape(V, m, V, m).transpose(2, 0, 3, 1)


def _sandwich(t: _Tables, D):
    """G[(u,y),(v,x)] = R_{v,u}[x,y] = sum Y[v,v'] sign_v' alpha'_v'[x,y] D[u',v',y] X[u',u]."""
    V, m = t.lam.size, t.omega.m
    N1 = t.N + 1
    DX = _cluster_apply(t.X, D)                                   # [u, v', y]
    DXk = DX.reshape(V, N1, 2 * m, m).transpose(1, 3, 0, 2)      # [k, y, u, d]
    out = np.matmul(DXk, t.W)                                     # [k, y, u, (c, x)]
    return out.transpose(2, 1, 0, 3).reshape(V * m, V * m)


def _assemble(t: _Tables, x: float, derivative: bool = True) -> MainEquationSystem:
    m = t.omega.m
    V = t.lam.size
    cu, su, dcu = _channel_values(t, x)
    D = _kernel_matrix(t, x, cu, su)
    G = _sandwich(t, D)
    eye = np.eye(m)
    phit = cu[:, :, None] * eye
    cux = _cluster_apply(t.X, cu)
    psitT = (cux[:, :, None] * eye).reshape(V * m, m)
    sysm = MainEquationSystem(x, psitT, G, t, phit, diag_psi_tilde=cux)
    if derivative:
        sysm.dphi_tilde = dcu[:, :, None] * eye
        sysm.dpsi_tilde_T = (_cluster_apply(t.X, dcu)[:, :, None] * eye).reshape(V * m, m)
    return sysm


def build_system(data: SpectralData, model_data: SpectralData, xi: XiWeights, x: float, N_trunc: int) -> MainEquationSystem:
    """Assemble psi~ and R~ at the point x for the indices n <= N_trunc."""
    return _assemble(_tables(data, model_data, xi, N_trunc), float(x))


def _stack_T(blocks):
    V, m, _ = blocks.shape
    return blocks.transpose(0, 2, 1).reshape(V * m, m)


def _unstack_T(col, V, m):
    return col.reshape(V, m, m).transpose(0, 2, 1)


@dataclass
class SolvedSystem:
    psi_T: np.ndarray
    residual: float
    condition: float
    lu: tuple = field(repr=False, default=None)
    keep: np.ndarray = field(repr=False, default=None)
    known: np.ndarray = field(repr=False, default=None)

    @property
    def psi(self) -> np.ndarray:
        V = self.psi_T.shape[0] // self.psi_T.shape[1]
        return _unstack_T(self.psi_T, V, self.psi_T.shape[1])


def _gecon(lu, anorm):
    fn = sla.get_lapack_funcs("gecon", (lu,))
    rcond, info = fn(lu, anorm, norm="1")
    return np.inf if rcond == 0 else 1.0 / rcond


def _real_if_possible(b, A):
    if np.isrealobj(A) and np.iscomplexobj(b) and not np.any(b.imag):
        return b.real
    return b


def _partition(G, m):
    """Rows of G (stacked unknowns) whose equation is the identity: psi_u = psi~_u."""
    V = G.shape[0] // m
    zero = ~np.any(G.reshape(V, m * G.shape[1]), axis=1)
    known = np.repeat(zero, m)
    return np.nonzero(~known)[0], np.nonzero(known)[0]


def _reduced_solve(G, lu, keep, known, b):
    x = np.empty(b.shape, dtype=np.result_type(b, G))
    x[known] = b[known]
    rhs = b[keep]
    if known.size:
        rhs = rhs - G[np.ix_(keep, known)] @ b[known]
    if keep.size:
        x[keep] = sla.lu_solve(lu, rhs, check_finite=False)
    return x


def solve_main_equation(sysm: MainEquationSystem, max_condition: float = MAX_CONDITION,
                        residual_tol: float = RESIDUAL_TOL) -> SolvedSystem:
    """Solve psi~ = psi (I + R~) for psi.

    Unknowns whose column of R~ vanishes (the chi_n = 0 blocks) satisfy
    psi_u = psi~_u; they are substituted before factorizing the rest.
    """
    G = sysm.G
    keep, known = _partition(G, sysm.m)
    b = _real_if_possible(sysm.psi_tilde_T, G)
    A = G[np.ix_(keep, keep)]
    A[np.diag_indices_from(A)] += 1.0
    cond = 1.0
    lu = None
    if keep.size:
        anorm = np.max(np.sum(np.abs(A), axis=0))
        with warnings.catch_warnings():
            # exact singularity is reported through the condition estimate below
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            lu = sla.lu_factor(A, overwrite_a=True, check_finite=False)
        cond = _gecon(lu[0], anorm)
    if cond > max_condition:
        raise IllConditionedError(
            f"I + R at x={sysm.x:.6g} has condition estimate {cond:.3e}; increase N_trunc or re-validate the data",
            x=sysm.x, condition=cond)
    sol = _reduced_solve(G, lu, keep, known, b)
    res = np.linalg.norm(sol + G @ sol - b) / max(np.linalg.norm(b), 1e-300)
    if res > residual_tol:
        raise IllConditionedError(f"main equation residual {res:.3e} at x={sysm.x:.6g}", x=sysm.x, condition=cond)
    return SolvedSystem(sol, float(res), float(cond), lu, keep, known)


def derivative_system(sysm: MainEquationSystem, solved: SolvedSystem) -> np.ndarray:
    """psi' (stacked transposed) from psi~' = psi' (I + R~) + psi R~'.

    Since d/dx D~(x, lam, mu) = phi~*(x, mu) phi~(x, lam), the product psi R~'
    collapses to eps0(x) psi~_u blockwise, so R~' is never formed.
    """
    t = sysm.tables
    V, m = t.lam.size, t.omega.m
    phi = recover_phi(solved.psi_T, t)
    e0 = np.sum(_eps0_terms(t, phi, sysm.phi_tilde), axis=0)
    prod = (sysm.diag_psi_tilde[:, :, None] * e0.T[None]).reshape(V * m, m)
    b = _real_if_possible(sysm.dpsi_tilde_T - prod, sysm.G)
    return _reduced_solve(sysm.G, solved.lu, solved.keep, solved.known, b)


def recover_phi(psi_T: np.ndarray, tables) -> np.ndarray:
    """phi blocks (V, m, m) from stacked transposed psi: phi_n = psi_n Y_n."""
    t = tables
    V, m = t.lam.size, t.omega.m
    return _unstack_T(_cluster_apply(t.Y, psi_T.reshape(V, m, m)).reshape(V * m, m), V, m)


def _eps0_terms(t: _Tables, phi, phit):
    # (-1)^j phi_u alpha'_u phit_u^*
    return t.sign[:, None, None] * (phi @ t.ap) @ np.conj(np.swapaxes(phit, -1, -2))


def epsilon_derivative(phi, dphi, tables: _Tables, phit, dphit) -> np.ndarray:
    """eps = -2 eps0' with eps0' summed term by term from phi, phi', phi~, phi~'."""
    t = tables
    a = t.sign[:, None, None] * (dphi @ t.ap) @ np.conj(np.swapaxes(phit, -1, -2))
    b = t.sign[:, None, None] * (phi @ t.ap) @ np.conj(np.swapaxes(dphit, -1, -2))
    return -2.0 * np.sum(a + b, axis=0)


def fd_derivative(values: np.ndarray, dx: float) -> np.ndarray:
    """Fourth-order finite differences along axis 0 with one-sided end stencils."""
    f = values
    d = np.empty_like(f)
    d[2:-2] = (f[:-4] - 8 * f[1:-3] + 8 * f[3:-1] - f[4:]) / (12 * dx)
    d[0] = (-25 * f[0] + 48 * f[1] - 36 * f[2] + 16 * f[3] - 3 * f[4]) / (12 * dx)
    d[1] = (-3 * f[0] - 10 * f[1] + 18 * f[2] - 6 * f[3] + f[4]) / (12 * dx)
    d[-1] = (25 * f[-1] - 48 * f[-2] + 36 * f[-3] - 16 * f[-4] + 3 * f[-5]) / (12 * dx)
    d[-2] = (3 * f[-1] + 10 * f[-2] - 18 * f[-3] + 6 * f[-4] - f[-5]) / (12 * dx)
    return d


@dataclass
class ReconstructionResult:
    """Recovered potential on the x-grid, boundary matrices and diagnostics."""

    x: np.ndarray
    Q: np.ndarray
    h: np.ndarray
    H: np.ndarray
    eps0: np.ndarray
    eps: np.ndarray
    omega: OmegaClass
    N_trunc: int
    xi: XiWeights
    residuals: np.ndarray
    conditions: np.ndarray
    hermitian_defect: float
    derivative: str
    notes: list = field(default_factory=list)

    def problem(self):
        from .operator_core import Problem
        return Problem(self.Q, self.h, self.H)


def _per_x(t: _Tables, x: float, derivative: bool):
    sysm = _assemble(t, x, derivative)
    sol = solve_main_equation(sysm)
    phi = recover_phi(sol.psi_T, t)
    e0 = np.sum(_eps0_terms(t, phi, sysm.phi_tilde), axis=0)
    eps = None
    if derivative:
        dphi = recover_phi(derivative_system(sysm, sol), t)
        eps = epsilon_derivative(phi, dphi, t, sysm.phi_tilde, sysm.dphi_tilde)
    return e0, eps, sol.residual, sol.condition


def reconstruct(data: SpectralData, model_problem=None, N_trunc: int | None = None, x_grid=DEFAULT_X_POINTS,
                derivative: str = "analytic", threads: int = 1) -> ReconstructionResult:
    """Recover (Q, h, H) from spectral data.

    Data beyond N_trunc is replaced by model data. The model is always
    Q = (2/pi) omega, h = H = 0 with omega taken from the data; a model_problem
    argument, if given, must have that omega.
    """
    omega = data.omega
    if model_problem is not None and getattr(model_problem, "omega", omega) != omega:
        raise ValidationError("model problem omega differs from the data omega")
    N = data.N_max if N_trunc is None else int(N_trunc)
    if N > data.N_max:
        raise ValidationError(f"N_trunc={N} exceeds the data order {data.N_max}")
    if derivative not in ("analytic", "fd"):
        raise ValueError("derivative must be 'analytic' or 'fd'")
    x = np.linspace(0.0, np.pi, x_grid) if np.isscalar(x_grid) else np.asarray(x_grid, dtype=float)
    d = data.truncated(N)
    md = model_spectral_data(omega, N)
    xi = compute_xi(d, md)
    t = _tables(d, md, xi, N)
    m = omega.m
    analytic = derivative == "analytic"

    def work(xv):
        return _per_x(t, float(xv), analytic)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(work, x))
    else:
        out = [work(xv) for xv in x]
    eps0 = np.array([o[0] for o in out])
    ends = [eps0[0] if x[0] == 0.0 else None, eps0[-1] if abs(x[-1] - np.pi) < 1e-14 else None]
    for k, xe in ((0, 0.0), (1, np.pi)):
        if ends[k] is None:
            ends[k] = _per_x(t, xe, False)[0]
    res = np.array([o[2] for o in out])
    cond = np.array([o[3] for o in out])
    notes = []
    if analytic:
        eps = np.array([o[1] for o in out])
    else:
        if np.ptp(np.diff(x)) > 1e-12:
            raise ValueError("finite-difference derivative needs a uniform x-grid")
        eps = -2.0 * fd_derivative(eps0, x[1] - x[0])
        notes.append("eps from finite differences of eps0")
    herm = float(np.max(np.abs(eps - np.conj(np.swapaxes(eps, -1, -2)))))
    Qt = 2.0 / np.pi * omega.matrix
    Q = Qt[None] + 0.5 * (eps + np.conj(np.swapaxes(eps, -1, -2)))
    h = -ends[0]
    H = ends[1]
    h = 0.5 * (h + np.conj(h.T))
    H = 0.5 * (H + np.conj(H.T))
    if not np.any(np.imag(Q)) and not np.any(np.imag(h)) and not np.any(np.imag(H)):
        Q, h, H = Q.real, h.real, H.real
    # tail check: contributions of the last clusters should be small
    last = np.max(xi.xi[-max(1, (N + 1) // 10):])
    if N >= 4 and last > max(0.5 * np.max(xi.xi[1:]), XI_NOISE):
        msg = "xi_n does not decay over the last clusters; truncation may be inaccurate"
        warnings.warn(msg)
        notes.append(msg)
    return ReconstructionResult(x, Q, h, H, eps0, eps, omega, N, xi, res, cond, herm, derivative, notes)


def model_weyl_matrix(omega: OmegaClass, lam) -> np.ndarray:
    """Weyl matrix of the model problem, diag(cos(mu pi) / (mu sin(mu pi)))."""
    mu = model_mu(omega, lam)
    return np.diag(np.cos(mu * np.pi) / (mu * mu * sin_over(mu, np.pi)))


def weyl_from_data(data: SpectralData, model_data: SpectralData, lam, pole_guard: float = 1e-9) -> np.ndarray:
    """Truncated partial fractions of M around the model Weyl matrix."""
    lam = complex(lam)
    N = min(data.N_max, model_data.N_max)
    d = data.truncated(N)
    md = model_data.truncated(N)
    poles = np.concatenate([np.ravel(d.lam), np.ravel(md.lam)])
    j = int(np.argmin(np.abs(poles - lam)))
    if abs(poles[j] - lam) <= pole_guard * max(1.0, abs(poles[j])):
        raise NearPoleError(lam, float(np.real(poles[j])))
    M = model_weyl_matrix(data.omega, lam).astype(complex)
    M += np.einsum("nqab,nq->ab", d.alpha_prime, 1.0 / (lam - d.lam))
    M -= np.einsum("nqab,nq->ab", md.alpha_prime, 1.0 / (lam - md.lam))
    return M


def _true_kernel(problem, lam, points: int, ix: np.ndarray):
    """D(x_i, lam_u, lam_v) of a known problem for real lam, shape (len(ix), V, V, m, m) indexed [., v, u]."""
    from .operator_core import Grid, gram_integral, integrate_many

    m = problem.m
    sols = integrate_many(problem, lam, np.eye(m), problem.h, Grid(points))
    Y = np.stack([s.values[ix] for s in sols], axis=1)           # [x, u, a, b]
    dY = np.stack([s.derivatives[ix] for s in sols], axis=1)
    Yh = np.conj(np.swapaxes(Y, -1, -2))
    dYh = np.conj(np.swapaxes(dY, -1, -2))
    B = np.einsum("pvab,pubc->pvuac", dYh, Y) - np.einsum("pvab,pubc->pvuac", Yh, dY)
    dl = lam[None, :] - lam[:, None]                              # [v, u] -> lam_u - lam_v
    near = np.abs(dl) < D_SWITCH_REL * np.maximum(1.0, np.abs(lam[:, None]))
    with np.errstate(divide="ignore", invalid="ignore"):
        D = B / dl[None, :, :, None, None]
    for v, u in zip(*np.nonzero(near)):
        D[:, v, u] = gram_integral(sols[v], sols[u])[ix]
    return D


D_SWITCH_REL = 1e-6


def identity_residual(problem, data: SpectralData, N: int, x_points=None, points: int = 2048) -> float:
    """Truncated defect of F~- - F- - F- F~- for a known problem and its data.

    F_{v,u} = alpha'_v D(x, lam_u, lam_v) with the true kernel, F~ the same with
    the model kernel, F- carries the sign (-1)^j. The norm is the induced norm on
    bounded block row sequences (max over columns of the summed block norms),
    maximized over the x points.
    """
    model_data = model_spectral_data(data.omega, data.N_max)
    xi = compute_xi(data, model_data)
    t = _tables(data, model_data, xi, N)
    m, V = t.omega.m, t.lam.size
    if x_points is None:
        x_points = np.linspace(0.0, np.pi, 9)[1:]
    grid_x = np.linspace(0.0, np.pi, points)
    ix = np.unique(np.rint(np.asarray(x_points) / (np.pi / (points - 1))).astype(int))
    Dtrue = _true_kernel(problem, t.lam, points, ix)
    sa = t.sign[:, None, None] * t.ap                               # [v, a, b]
    worst = 0.0
    for p, i in enumerate(ix):
        cu, su, _ = _channel_values(t, grid_x[i])
        Dm = _kernel_matrix(t, grid_x[i], cu, su)                   # [u, v, q]
        Fm = sa[:, None, :, :] * Dm.transpose(1, 0, 2)[:, :, None, :]   # [v, u, a, b]
        F = np.einsum("vab,vubc->vuac", sa, Dtrue[p])
        A = lambda Z: Z.transpose(0, 2, 1, 3).reshape(V * m, V * m)
        R = A(Fm) - A(F) - A(F) @ A(Fm)
        blocks = np.linalg.norm(R.reshape(V, m, V, m).transpose(0, 2, 1, 3), ord=2, axis=(2, 3))
        worst = max(worst, float(np.max(blocks.sum(axis=0))))
    return worst
