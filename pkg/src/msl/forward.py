"""Eigenvalues, residues of the Weyl matrix and assembly of spectral data."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .errors import GapError, LocalizationError, ValidationError
from .operator_core import DEFAULT_POINTS, Problem, as_grid, boundary_values
from .potentials import Potential, hermitian_part
from .spectral_data import SpectralData

log = logging.getLogger(__name__)

MERGE_TOL = 1e-8
RANK_TOL = 1e-6
RESIDUE_NODES = 64
RESIDUE_TOL = 1e-9
WINDOW_NODES = 64
MAX_WINDOW_NODES = 1024
NORMALIZE_HERMITIAN_TOL = 1e-8


class ConjugatedPotential(Potential):
    """x -> U* Q(x) U for a fixed unitary U."""

    def __init__(self, Q: Potential, U):
        self.base = Q
        self.U = np.asarray(U, dtype=complex)
        self.m = Q.m

    def _raw(self, x):
        return np.conj(self.U.T) @ self.base(x) @ self.U

    def _raw_integral(self):
        return np.conj(self.U.T) @ self.base.integral() @ self.U


def normalize_to_A_omega(Q, h, H):
    """Conjugate (Q, h, H) by a unitary U so that h + H + (1/2) int Q is diagonal nondecreasing.

    Returns (problem, U); the new problem has potential U* Q U and boundary
    matrices U* h U, U* H U.
    """
    for name, a in (("h", h), ("H", H)):
        a = np.atleast_2d(np.asarray(a, dtype=complex))
        if np.max(np.abs(a - np.conj(a.T))) > NORMALIZE_HERMITIAN_TOL * max(1.0, np.max(np.abs(a))):
            raise ValidationError(f"{name} is not Hermitian")
    base = Problem(Q, h, H)
    xs = np.linspace(0.0, np.pi, 33)
    raw = base.Q._raw(xs)
    if np.max(np.abs(raw - np.conj(np.swapaxes(raw, -1, -2)))) > NORMALIZE_HERMITIAN_TOL * max(1.0, np.max(np.abs(raw))):
        raise ValidationError("Q is not Hermitian")
    w = base.omega_matrix
    m = base.m
    off = w - np.diag(np.diag(w))
    if np.max(np.abs(off)) <= 1e-12 * max(1.0, np.max(np.abs(w))):
        order = np.argsort(np.real(np.diag(w)), kind="stable")
        U = np.eye(m)[:, order]
    else:
        _, U = np.linalg.eigh(w)
    if np.array_equal(U, np.eye(m)):
        return base, np.eye(m, dtype=complex)
    U = np.asarray(U, dtype=complex)
    Uh = np.conj(U.T)
    prob = Problem(ConjugatedPotential(base.Q, U), Uh @ base.h @ U, Uh @ base.H @ U)
    if prob.omega is None:
        raise ValidationError("could not diagonalize h + H + (1/2) int Q")
    return prob, U


# ---------------------------------------------------------------------------
# eigenvalue search


def spectrum_lower_bound(problem: Problem) -> float:
    """A value strictly below the smallest eigenvalue (quadratic form estimate)."""
    xs = np.linspace(0.0, np.pi, 4097)
    qmin = float(np.min(np.linalg.eigvalsh(problem.Q(xs))))
    a = max(0.0, -float(np.min(np.linalg.eigvalsh(problem.h)))) + max(0.0, -float(np.min(np.linalg.eigvalsh(problem.H))))
    return qmin - a * (a + max(a, 1.0 / np.pi)) - 1.0


def _scaled_det(vphi, lams):
    g = 1.0 + np.abs(np.sqrt(np.asarray(lams, dtype=complex)))
    return np.linalg.det(vphi / g[:, None, None])


def _eval(problem, lams, points):
    lams = np.asarray(lams, dtype=complex)
    vphi, vs, logf = boundary_values(problem, lams, points)
    return vphi, vs, logf, _scaled_det(vphi, lams)


def _real_delta(problem, lams, points):
    lams = np.asarray(lams, dtype=float)
    vphi, _, _, d = _eval(problem, lams.astype(complex), points)
    return d.real


def _pick_boundaries(problem, N, points):
    top = (N + 0.5) ** 2
    lo = spectrum_lower_bound(problem)
    wv = np.linalg.eigvalsh(problem.omega_matrix)
    shift = (wv[0] + wv[-1]) / np.pi
    tent = [(n - 0.5) ** 2 + shift for n in range(1, N + 1)]
    tent = [b for b in tent if lo + 0.5 < b < top - 0.5]
    cand = [lo] + tent + [top]
    # move interior boundaries to the largest |Delta| nearby so contours avoid roots
    offsets = np.linspace(-0.25, 0.25, 9)
    probe = []
    for i in range(1, len(cand)):
        w = min(cand[i] - cand[i - 1], (cand[i + 1] - cand[i]) if i + 1 < len(cand) else cand[i] - cand[i - 1])
        probe.append(cand[i] + w * offsets if i + 1 < len(cand) else cand[i] + min(w, 1.0) * offsets)
    probe = np.array(probe)
    d = np.abs(_real_delta(problem, probe.ravel(), points)).reshape(probe.shape)
    bounds = [lo]
    for i in range(len(probe) - 1):
        bounds.append(float(probe[i, np.argmax(d[i])]))
    mid = len(offsets) // 2
    if d[-1, mid] < 1e-6 * np.max(d[-1]):
        raise LocalizationError(f"an eigenvalue lies on the counting boundary {top}", interval=(top, top))
    bounds.append(top)
    return np.array(bounds)


def _nodes(c, r, K):
    w = np.exp(2j * np.pi * (np.arange(K) + 0.5) / K)
    return c + r * w, w


def _winding(dvals):
    steps = np.angle(np.roll(dvals, -1) / dvals)
    tot = np.sum(steps) / (2 * np.pi)
    return int(round(tot)), float(np.max(np.abs(steps))), abs(tot - round(tot))


def _beyn(tinv, w, r, c, k, m):
    """Eigenvalues inside the circle from contour moments of T^{-1}."""
    K = w.size
    L = max(1, -(-k // m)) + 1
    mom = [(r / K) * np.einsum("j,jab->ab", w ** (p + 1), tinv) for p in range(2 * L)]
    H0 = np.block([[mom[i + j] for j in range(L)] for i in range(L)])
    H1 = np.block([[mom[i + j + 1] for j in range(L)] for i in range(L)])
    U, s, Vh = np.linalg.svd(H0)
    if k == 0:
        return np.array([]), s
    Uk, sk, Vk = U[:, :k], s[:k], Vh[:k].conj().T
    Bm = Uk.conj().T @ H1 @ Vk / sk
    nu = np.linalg.eigvals(Bm)
    return c + r * nu, s


def _analyze(problem, c, r, K, points, m):
    z, w = _nodes(c, r, K)
    vphi, _, logf, d = _eval(problem, z, points)
    wind, maxstep, frac = _winding(d)
    tinv = np.linalg.inv(vphi) * np.exp(-logf)[:, None, None]
    return z, w, d, tinv, wind, maxstep, frac


def _window_eigs(problem, a, b, points, m):
    c, r = 0.5 * (a + b), 0.5 * (b - a)
    K = WINDOW_NODES
    while True:
        z, w, d, tinv, wind, maxstep, frac = _analyze(problem, c, r, K, points, m)
        ok = maxstep < 1.0 and frac < 0.05
        if ok:
            ev, s = _beyn(tinv, w, r, c, wind, m)
            ev2, _ = _beyn(tinv[::2], w[::2], r, c, wind, m)
            wind2, _, _ = _winding(d[::2])
            agree = wind2 == wind and (wind == 0 or np.max(np.abs(np.sort(ev.real) - np.sort(ev2.real))) < 1e-7 * max(1.0, r))
            inside = wind == 0 or np.all(np.abs(ev - c) < r * (1 - 1e-9))
            if agree and inside:
                if wind and np.max(np.abs(ev.imag)) > 1e-6 * max(1.0, r):
                    log.warning("window [%g, %g]: eigenvalue estimates with imaginary parts up to %g", a, b, np.max(np.abs(ev.imag)))
                return np.sort(ev.real), wind
        if K >= MAX_WINDOW_NODES:
            raise LocalizationError(f"contour around [{a}, {b}] did not converge", interval=(a, b))
        K *= 2


def _merge(ev, tol=MERGE_TOL):
    out = []
    for v in np.sort(ev):
        if out and abs(v - out[-1][0]) <= tol * max(1.0, abs(v)):
            vals = out[-1][2] + [v]
            out[-1] = (float(np.mean(vals)), out[-1][1] + 1, vals)
        else:
            out.append((float(v), 1, [v]))
    return [(v, k) for v, k, _ in out]


def _polish(problem, roots, points, iters=40):
    """Illinois iterations on the real characteristic function for simple roots."""
    roots = np.asarray(roots, dtype=float)
    if roots.size == 0:
        return roots
    scale = np.maximum(1.0, np.abs(roots))
    deltas = 1e-10 * 10.0 ** np.arange(6)
    pts = np.concatenate([roots[:, None] - scale[:, None] * deltas, roots[:, None] + scale[:, None] * deltas], axis=1)
    f = _real_delta(problem, pts.ravel(), points).reshape(pts.shape)
    nd = deltas.size
    lo = np.full(roots.size, np.nan)
    hi = np.full(roots.size, np.nan)
    flo = np.zeros(roots.size)
    fhi = np.zeros(roots.size)
    for i in range(roots.size):
        for j in range(nd):
            if f[i, j] == 0 or f[i, nd + j] == 0 or np.sign(f[i, j]) != np.sign(f[i, nd + j]):
                lo[i], hi[i], flo[i], fhi[i] = pts[i, j], pts[i, nd + j], f[i, j], f[i, nd + j]
                break
    act = np.isfinite(lo)
    out = roots.copy()
    side = np.zeros(roots.size, dtype=int)
    for _ in range(iters):
        idx = np.where(act & (hi - lo > 4e-16 * scale))[0]
        if idx.size == 0:
            break
        denom = fhi[idx] - flo[idx]
        xm = np.where(denom != 0, lo[idx] - flo[idx] * (hi[idx] - lo[idx]) / np.where(denom != 0, denom, 1), 0.5 * (lo[idx] + hi[idx]))
        bad = ~((xm > lo[idx]) & (xm < hi[idx]))
        xm[bad] = 0.5 * (lo[idx] + hi[idx])[bad]
        fm = _real_delta(problem, xm, points)
        for t, i in enumerate(idx):
            if fm[t] == 0:
                lo[i] = hi[i] = xm[t]
                continue
            if np.sign(fm[t]) == np.sign(flo[i]):
                lo[i], flo[i] = xm[t], fm[t]
                if side[i] == -1:
                    fhi[i] *= 0.5
                side[i] = -1
            else:
                hi[i], fhi[i] = xm[t], fm[t]
                if side[i] == 1:
                    flo[i] *= 0.5
                side[i] = 1
    for i in np.where(act)[0]:
        out[i] = lo[i] if abs(flo[i]) <= abs(fhi[i]) else hi[i]
    return out


def _refine_multiple(problem, centers, radii, ks, points, K=WINDOW_NODES):
    """Re-center multiple eigenvalues with contour moments on small circles."""
    m = problem.m
    out = []
    zs = [_nodes(c, r, K)[0] for c, r in zip(centers, radii)]
    vphi, _, logf, _ = _eval(problem, np.concatenate(zs), points)
    tinv = (np.linalg.inv(vphi) * np.exp(-logf)[:, None, None]).reshape(len(centers), K, m, m)
    w = _nodes(0.0, 1.0, K)[1]
    for t, (c, r, k) in enumerate(zip(centers, radii, ks)):
        ev, _ = _beyn(tinv[t], w, r, c, k, m)
        out.append(float(np.mean(ev.real)))
    return out


def locate_eigenvalues(problem: Problem, N: int, grid=None) -> list:
    """All eigenvalues below (N + 1/2)^2 as (lambda, multiplicity) pairs.

    Raises LocalizationError when the total multiplicity is not (N + 1) m.
    """
    points = as_grid(grid).points
    m = problem.m
    bounds = _pick_boundaries(problem, N, points)
    found = []
    counts = []
    for a, b in zip(bounds[:-1], bounds[1:]):
        ev, k = _window_eigs(problem, a, b, points, m)
        counts.append(k)
        found.extend(ev.tolist())
    merged = _merge(np.array(found))
    multi = [i for i, (v, k) in enumerate(merged) if k > 1]
    if multi:
        vals = np.array([v for v, _ in merged])
        gaps = _gaps(vals, bounds[-1])
        ref = _refine_multiple(problem, vals[multi], np.minimum(0.5 * gaps[multi], 0.5),
                               [merged[i][1] for i in multi], points)
        for i, v in zip(multi, ref):
            merged[i] = (float(v), merged[i][1])
    simple = [i for i, (v, k) in enumerate(merged) if k == 1]
    polished = _polish(problem, [merged[i][0] for i in simple], points)
    for i, v in zip(simple, polished):
        merged[i] = (float(v), 1)
    total = sum(k for _, k in merged)
    if total != (N + 1) * m:
        bad = [(float(a), float(b), k) for a, b, k in zip(bounds[:-1], bounds[1:], counts)]
        raise LocalizationError(
            f"found {total} eigenvalues below {(N + 0.5) ** 2}, expected {(N + 1) * m}; window counts {bad}",
            interval=(float(bounds[0]), float(bounds[-1])), found=total, expected=(N + 1) * m)
    return merged


# ---------------------------------------------------------------------------
# residues


@dataclass(frozen=True)
class ResidueInfo:
    alpha: np.ndarray
    winding: int
    rank: int
    error: float
    nodes: int
    radius: float


def _residue_batch(problem, centers, radii, K, points):
    zs, ws = [], []
    for c, r in zip(centers, radii):
        z, w = _nodes(c, r, K)
        zs.append(z)
        ws.append(w)
    z = np.concatenate(zs) if zs else np.zeros(0, complex)
    vphi, vs, _, d = _eval(problem, z, points)
    M = -np.linalg.solve(vphi, vs)
    return M.reshape(len(centers), K, problem.m, problem.m), d.reshape(len(centers), K), np.array(ws)


def _numerical_rank(a, tol=RANK_TOL):
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > tol * s[0])) if s[0] > 0 else 0


def residues(problem: Problem, lams, gaps, grid=None, nodes: int = RESIDUE_NODES) -> list:
    """Residues of M at several eigenvalues, each on a circle of radius min(gap/2, 0.5).

    The K-node trapezoid result is checked against the embedded K/2-node
    rule; on disagreement the node count is doubled once more.
    """
    points = as_grid(grid).points
    lams = np.asarray(lams, dtype=float)
    radii = np.minimum(0.5 * np.asarray(gaps, dtype=float), 0.5)
    out = [None] * lams.size
    todo = np.arange(lams.size)
    K = nodes
    while todo.size:
        M, d, w = _residue_batch(problem, lams[todo], radii[todo], K, points)
        nxt = []
        for t, i in enumerate(todo):
            r = radii[i]
            full = (r / K) * np.einsum("j,jab->ab", w[t], M[t])
            half = (2 * r / K) * np.einsum("j,jab->ab", w[t][::2], M[t][::2])
            err = float(np.max(np.abs(full - half)))
            scale = max(float(np.max(np.abs(full))), 1e-300)
            wind, maxstep, frac = _winding(d[t])
            if (err > RESIDUE_TOL * scale or maxstep > 1.0) and K < 4 * nodes:
                nxt.append(i)
                continue
            if err > 1e-6 * scale:
                raise GapError(f"residue contour at lambda={lams[i]} (radius {r}) did not converge: {err:.2e}")
            alpha = hermitian_part(full, warn=False)
            out[i] = ResidueInfo(alpha, wind, _numerical_rank(alpha), err, K, float(r))
        todo = np.array(nxt, dtype=int)
        K *= 2
    return out


def residue_matrix(problem: Problem, lambda0: float, gap: float, grid=None, nodes: int = RESIDUE_NODES) -> np.ndarray:
    """alpha_0 = (1/2 pi i) times the contour integral of M around lambda0."""
    return residues(problem, [lambda0], [gap], grid, nodes)[0].alpha


def _gaps(values, top):
    v = np.asarray(values, dtype=float)
    g = np.full(v.size, np.inf)
    if v.size > 1:
        d = np.diff(v)
        g[:-1] = np.minimum(g[:-1], d)
        g[1:] = np.minimum(g[1:], d)
    g = np.minimum(g, 2.0 * (top - v))
    return g


def assemble_spectral_data(problem: Problem, N: int, grid=None) -> SpectralData:
    """Eigenvalues and residue matrices lam[n, q], alpha[n, q] for n <= N.

    Indices follow the model values n^2 + 2 omega_q / pi: the sorted
    eigenvalues are matched in order to the sorted model values, ties in
    the model broken lexicographically.
    """
    if problem.omega is None:
        raise ValidationError("h + H + (1/2) int Q is not diagonal nondecreasing; use normalize_to_A_omega first")
    grid = as_grid(grid)
    m = problem.m
    eigs = locate_eigenvalues(problem, N, grid)
    vals = np.array([v for v, _ in eigs])
    mult = np.array([k for _, k in eigs])
    infos = residues(problem, vals, _gaps(vals, (N + 0.5) ** 2), grid)
    notes = []
    for v, k, info in zip(vals, mult, infos):
        if info.winding != k or info.rank != k:
            msg = f"lambda={v:.12g}: multiplicity {k}, residue-circle winding {info.winding}, rank {info.rank}"
            log.warning(msg)
            notes.append(msg)
    flat_vals = np.repeat(vals, mult)
    flat_alpha = np.repeat(np.array([i.alpha for i in infos]), mult, axis=0)
    # k-th smallest eigenvalue takes the index of the k-th smallest model value
    w = problem.omega.omega_values
    pred = (np.arange(N + 1)[:, None] ** 2 + 2.0 / np.pi * w[None, :]).ravel()
    slot = np.lexsort((np.arange(pred.size), pred))
    lam = np.empty((N + 1) * m)
    alpha = np.empty(((N + 1) * m, m, m), dtype=complex)
    lam[slot] = flat_vals
    alpha[slot] = flat_alpha
    lam = lam.reshape(N + 1, m)
    alpha = alpha.reshape(N + 1, m, m, m)
    for n in range(N + 1):
        for q in range(m):
            pred = n ** 2 + 2 * w[q] / np.pi
            if n > 0:
                other = [(n + s) ** 2 + 2 * w[q] / np.pi for s in (-1, 1)]
                if min(abs(lam[n, q] - o) for o in other) < abs(lam[n, q] - pred):
                    msg = f"index ({n}, {q + 1}) assigned by ordering is closer to a neighbouring cluster"
                    log.info(msg)
                    notes.append(msg)
    diag = {"count": int(mult.sum()), "notes": notes, "residue_errors": [i.error for i in infos], "grid_points": grid.points}
    return SpectralData(problem.omega, lam, alpha, diag)


# ---------------------------------------------------------------------------
# asymptotics


@dataclass(frozen=True)
class AsymptoticsReport:
    """Remainders of the eigenvalue and residue asymptotics for n = 1..N."""

    n: np.ndarray
    kappa_nq: np.ndarray
    kappa_ns: np.ndarray
    partial_l2_lambda: np.ndarray
    partial_l2_alpha: np.ndarray
    slope_lambda: float
    slope_alpha: float
    growth_flag: bool


KAPPA_FLOOR = 1e-8  # remainders below this are round-off and carry no trend


def trend_slope(n, values, floor: float = KAPPA_FLOOR) -> float:
    """Least-squares slope of log(max(values, floor)) against log n."""
    n = np.asarray(n, dtype=float)
    v = np.maximum(np.asarray(values, dtype=float), floor)
    if n.size < 2:
        return 0.0
    return float(np.polyfit(np.log(n), np.log(v), 1)[0])


def asymptotics_report(data: SpectralData, slope_limit: float = 0.2) -> AsymptoticsReport:
    N = data.N_max
    n = np.arange(1, N + 1)
    rho = data.rho[1:]
    w = data.omega.omega_values
    kq = n[:, None] * (rho - n[:, None] - w[None, :] / (np.pi * n[:, None]))
    if np.max(np.abs(kq.imag), initial=0.0) == 0.0:
        kq = kq.real
    ag = data.alpha_groups()[1:]
    ks = n[:, None, None, None] * (ag - 2.0 / np.pi * data.omega.group_projectors[None])
    l2l = np.sqrt(np.cumsum(np.sum(np.abs(kq) ** 2, axis=1)))
    ksn = np.max(np.abs(ks), axis=(2, 3))
    l2a = np.sqrt(np.cumsum(np.sum(ksn ** 2, axis=1)))
    top = n >= n[-1] - max(2, n.size // 3) + 1 if n.size else n.astype(bool)
    sl = trend_slope(n[top], np.max(np.abs(kq), axis=1)[top]) if n.size > 2 else 0.0
    sa = trend_slope(n[top], np.max(ksn, axis=1)[top]) if n.size > 2 else 0.0
    return AsymptoticsReport(n, kq, ks, l2l, l2a, sl, sa, bool(sl > slope_limit or sa > slope_limit))
