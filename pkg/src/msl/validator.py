"""Checks of candidate spectral data against the characterization conditions.

Condition 1: asymptotics of lam_nq and of the grouped residues alpha_n^(s).
Condition 2: realness, Hermitian PSD residues, rank equal to multiplicity.
Condition 3: completeness of {gamma(lam_nq) alpha_nq = 0}, decided by the
determinant of the matrix P when the relations are separated for n > n0.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import polygamma

from .forward import KAPPA_FLOOR, trend_slope
from .operator_core import Grid, OmegaClass, Problem, boundary_form_V, gram_integral, integrate_many
from .spectral_data import SpectralData, same_value

PASS, FAIL, INCONCLUSIVE, INAPPLICABLE = "pass", "fail", "inconclusive", "inapplicable"

MIN_ORDER = 8
KAPPA_BOUND = 3.2
SLOPE_LIMIT = 0.2
HERMITIAN_TOL = 1e-10
PSD_TOL = 1e-8
RANK_TOL = 1e-6
SEPARATION_TOL = 1e-8
K_TAIL = 200
DET_THRESHOLD = 1e-10
ORTHOGONALITY_TOL = 1e-6


@dataclass
class ConditionReport:
    status: str
    message: str = ""
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.status == PASS

    def to_dict(self) -> dict:
        return {"status": self.status, "message": self.message, "details": _plain(self.details)}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


# condition 1

def kappa_sequences(data: SpectralData):
    """n, kappa_nq (N, m) and ||kappa_n^(s)|| (N, p) for n = 1..N_max."""
    N = data.N_max
    n = np.arange(1, N + 1)
    rho = data.rho[1:]
    w = data.omega.omega_values
    kq = n[:, None] * (rho - n[:, None] - w[None, :] / (np.pi * n[:, None]))
    ag = data.alpha_groups()[1:]
    ks = n[:, None, None, None] * (ag - 2.0 / np.pi * data.omega.group_projectors[None])
    return n, np.abs(kq), np.max(np.abs(ks), axis=(2, 3))


def check_condition1(data: SpectralData, bound: float = KAPPA_BOUND, slope_limit: float = SLOPE_LIMIT,
                     min_order: int = MIN_ORDER) -> ConditionReport:
    """Bounded, non-growing remainders of both asymptotic expansions."""
    if data.N_max < min_order:
        return ConditionReport(INCONCLUSIVE, f"N_max={data.N_max} < {min_order}: too few clusters for a trend test",
                               {"N_max": data.N_max})
    n, kq, ks = kappa_sequences(data)
    top = n > n[-1] // 2
    kq_max = kq.max(axis=1)
    ks_max = ks.max(axis=1)
    sl = trend_slope(n[top], kq_max[top], floor=KAPPA_FLOOR)
    sa = trend_slope(n[top], ks_max[top], floor=KAPPA_FLOOR)
    details = {"max_kappa_lambda": float(kq_max.max()), "max_kappa_alpha": float(ks_max.max()),
               "slope_lambda": sl, "slope_alpha": sa, "bound": bound, "slope_limit": slope_limit}
    problems = []
    if kq_max.max() > bound:
        problems.append(f"|kappa_nq| reaches {kq_max.max():.3g} > {bound:g} at n={int(n[np.argmax(kq_max)])}")
    if ks_max.max() > bound:
        problems.append(f"|kappa_n^(s)| reaches {ks_max.max():.3g} > {bound:g} at n={int(n[np.argmax(ks_max)])}")
    if sl > slope_limit:
        problems.append(f"kappa_nq grows over the top half (log-log slope {sl:.3f})")
    if sa > slope_limit:
        problems.append(f"kappa_n^(s) grows over the top half (log-log slope {sa:.3f})")
    if problems:
        return ConditionReport(FAIL, "; ".join(problems), details)
    return ConditionReport(PASS, "remainders bounded and not growing", details)


# condition 2

def _numerical_rank(a: np.ndarray, tol: float = RANK_TOL) -> int:
    s = np.linalg.svd(a, compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def check_condition2(data: SpectralData) -> ConditionReport:
    """Realness, alpha = alpha* >= 0, rank = multiplicity and shared residues."""
    lam = data.lam
    mult = data.multiplicity
    for n in range(data.N_max + 1):
        for q in range(data.m):
            where = {"n": n, "q": q + 1}
            if np.iscomplexobj(lam) and abs(lam[n, q].imag) > 0:
                return ConditionReport(FAIL, f"lambda_{n},{q + 1} is not real", where)
            a = data.alpha[n, q]
            scale = max(np.max(np.abs(a)), 1e-300)
            if np.max(np.abs(a - a.conj().T)) > HERMITIAN_TOL * scale:
                return ConditionReport(FAIL, f"alpha_{n},{q + 1} is not Hermitian", where)
            ev = np.linalg.eigvalsh(0.5 * (a + a.conj().T))
            if ev[0] < -PSD_TOL * scale:
                return ConditionReport(FAIL, f"alpha_{n},{q + 1} has a negative eigenvalue {ev[0]:.3g}", where)
            r = _numerical_rank(a)
            if r != mult[n, q]:
                return ConditionReport(FAIL, f"rank alpha_{n},{q + 1} = {r} but multiplicity is {mult[n, q]}",
                                       dict(where, rank=r, multiplicity=int(mult[n, q])))
    for g in data.value_groups():
        a0 = data.alpha[g[0]]
        for nq in g[1:]:
            if np.max(np.abs(data.alpha[nq] - a0)) > HERMITIAN_TOL * max(np.max(np.abs(a0)), 1e-300):
                n, q = nq
                return ConditionReport(FAIL, f"equal eigenvalues at ({g[0][0]},{g[0][1] + 1}) and ({n},{q + 1}) "
                                       "carry different residues", {"n": n, "q": q + 1})
    return ConditionReport(PASS, "real eigenvalues, Hermitian PSD residues with rank = multiplicity")


# condition 3

def full_multiplicity(data: SpectralData) -> bool:
    """All values within every cluster coincide and every residue has full rank."""
    for n in range(data.N_max + 1):
        if not all(same_value(data.lam[n, 0], data.lam[n, q]) for q in range(data.m)):
            return False
        if _numerical_rank(data.alpha[n, 0]) != data.m:
            return False
    return True


def _range_basis(a: np.ndarray, r: int) -> np.ndarray:
    w, v = np.linalg.eigh(0.5 * (a + a.conj().T))
    return v[:, np.argsort(w)[::-1][:r]]


def separation_defects(data: SpectralData) -> np.ndarray:
    """Per (n, q): distance of e_q from the range of alpha_nq.

    Zero means gamma(lam_nq) alpha_nq = 0 forces gamma_q(lam_nq) = 0.
    """
    out = np.zeros(data.lam.shape)
    mult = data.multiplicity
    for n in range(data.N_max + 1):
        for q in range(data.m):
            U = _range_basis(data.alpha[n, q], int(mult[n, q]))
            r = -U @ np.conj(U[q])
            r[q] += 1.0
            out[n, q] = float(np.linalg.norm(r))
    return out


def separation_order(data: SpectralData, tol: float = SEPARATION_TOL) -> int:
    """Smallest n0 >= -1 such that all clusters n > n0 are separated."""
    sep = np.all(separation_defects(data) <= tol, axis=1)
    bad = np.nonzero(~sep)[0]
    return int(bad[-1]) if bad.size else -1


def _product_factor(lam, lam_k):
    if abs(lam_k) < 1e-12:
        return lam_k - lam
    return 1.0 - lam / lam_k


def infinite_products(data: SpectralData, n0: int, lams, K_tail: int = K_TAIL) -> np.ndarray:
    """P_q(lam) = prod_{n > n0} (1 - lam / lam_nq), shape (len(lams), m).

    Data values are used up to N_max, the asymptotic values n^2 + 2 omega_q / pi
    up to K_tail, and the rest through log(1 - lam/k^2) ~ -lam / k^2.
    """
    lams = np.asarray(lams, dtype=complex)
    m = data.m
    w = data.omega.omega_values
    out = np.ones((lams.size, m), dtype=complex)
    for j, lam in enumerate(lams):
        for q in range(m):
            p = 1.0 + 0j
            for n in range(n0 + 1, data.N_max + 1):
                p *= _product_factor(lam, complex(data.lam[n, q]))
            k = np.arange(data.N_max + 1, max(K_tail, data.N_max) + 1)
            if k.size:
                p *= np.prod(1.0 - lam / (k ** 2 + 2.0 * w[q] / np.pi))
            kk = max(K_tail, data.N_max)
            p *= np.exp(-lam * polygamma(1, kk + 1))
            out[j, q] = p
    return out


def determinant_matrix(data: SpectralData, n0: int, K_tail: int = K_TAIL):
    """Rows of the linear system for the coefficients C_qk, k <= n0.

    Returns (P, column_scale) where P has one row per independent relation
    gamma(lam) u = 0 (u from the range of alpha at lam) over the distinct values
    with n <= n0, and columns ordered (q, k); the polynomial powers are taken
    of lam / column_scale.
    """
    m = data.m
    ncol = (n0 + 1) * m
    entries = [(n, q) for n in range(n0 + 1) for q in range(m)]
    values, bases = [], []
    mult = data.multiplicity
    seen = []
    for nq in entries:
        lam = complex(data.lam[nq])
        if any(same_value(lam, s) for s in seen):
            continue
        seen.append(lam)
        values.append(lam)
        bases.append(_range_basis(data.alpha[nq], int(mult[nq])))
    s = max(1.0, max(abs(v) for v in values)) if values else 1.0
    Pq = infinite_products(data, n0, values, K_tail)
    rows = []
    for lam, U, pq in zip(values, bases, Pq):
        powers = (lam / s) ** np.arange(n0 + 1)
        for i in range(U.shape[1]):
            u = U[:, i]
            rows.append(np.concatenate([u[q] * pq[q] * powers for q in range(m)]))
    P = np.array(rows, dtype=complex).reshape(-1, ncol)
    return P, s


def hadamard_ratio(P: np.ndarray) -> float:
    """|det P| / prod of column norms (Gram determinant for tall P); 1 for orthogonal columns."""
    if P.shape[1] == 0:
        return 1.0
    norms = np.linalg.norm(P, axis=0)
    if P.shape[0] < P.shape[1] or np.any(norms == 0.0):
        return 0.0
    R = np.linalg.qr(P / norms, mode="r")
    return float(np.exp(np.sum(np.log(np.abs(np.diag(R)) + 1e-300))))


def check_condition3(data: SpectralData, n0: int | None = None, K_tail: int = K_TAIL,
                     threshold: float = DET_THRESHOLD, separation_tol: float = SEPARATION_TOL) -> ConditionReport:
    """Finite determinant test for the completeness condition."""
    if full_multiplicity(data):
        return ConditionReport(PASS, "full multiplicities: the relations reduce to gamma(lam_n) = 0",
                               {"path": "full_multiplicity"})
    auto = separation_order(data, separation_tol)
    if n0 is None:
        n0 = auto
    elif n0 < auto:
        return ConditionReport(INAPPLICABLE, f"relations are not separated at n={auto} > n0={n0}",
                               {"separation_order": auto})
    if n0 >= data.N_max:
        return ConditionReport(INAPPLICABLE, "relations are not separated in the available tail; "
                               "the determinant test does not apply", {"separation_order": auto})
    if n0 < 0:
        return ConditionReport(PASS, "all relations are separated; each gamma_q vanishes on a full "
                               "eigenvalue sequence", {"path": "separated", "n0": n0})
    P, s = determinant_matrix(data, n0, K_tail)
    ratio = hadamard_ratio(P)
    details = {"path": "determinant", "n0": n0, "size": list(P.shape), "hadamard_ratio": ratio,
               "K_tail": K_tail, "threshold": threshold}
    if ratio > threshold:
        return ConditionReport(PASS, f"det P is nonzero (Hadamard ratio {ratio:.3e})", details)
    norms = np.linalg.norm(P, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    _, _, vh = np.linalg.svd(P / safe if P.shape[0] else np.zeros((1, P.shape[1])))
    c = np.conj(vh[-1]) / safe
    c = np.where(norms > 0, c, 0.0)
    if np.any(norms == 0):
        c = (norms == 0).astype(complex)
    k = np.arange(n0 + 1)
    C = (c.reshape(data.m, n0 + 1) / s ** k[None, :])
    C = C / C.flat[np.argmax(np.abs(C))]
    details["witness"] = {
        "coefficients": C,
        "form": "gamma_q(lam) = (sum_k C[q][k] lam^k) * prod_{n > n0} (1 - lam / lam_nq)",
    }
    return ConditionReport(FAIL, f"det P vanishes (Hadamard ratio {ratio:.3e}); a nonzero gamma satisfies "
                           "all relations", details)


# verification against a known problem

def verify_against_problem(data: SpectralData, problem: Problem, grid=None, n_max: int | None = None,
                           tol: float = ORTHOGONALITY_TOL) -> ConditionReport:
    """Orthogonality relations and V(phi) alpha = 0 for the entries up to n_max."""
    grid = Grid(2048) if grid is None else (grid if isinstance(grid, Grid) else Grid(int(grid)))
    N = data.N_max if n_max is None else min(n_max, data.N_max)
    reps = [nq for nq in data.distinct_support if nq[0] <= N]
    lams = np.array([float(np.real(data.lam[nq])) for nq in reps])
    alphas = np.array([data.alpha[nq] for nq in reps])
    sols = integrate_many(problem, lams, np.eye(problem.m), problem.h, grid)
    self_res = np.zeros(len(reps))
    kernel_res = np.zeros(len(reps))
    for i, (sol, a) in enumerate(zip(sols, alphas)):
        G = gram_integral(sol, sol)[-1]
        self_res[i] = np.max(np.abs(a.conj().T @ G @ a - a.conj().T))
        V = boundary_form_V(sol, problem.H)
        kernel_res[i] = np.max(np.abs(V @ a)) / (1.0 + np.sqrt(abs(lams[i])))
    # cross relation through the bilinear form: int phi*(l1) phi(l0) = [<phi*(l1), phi(l0)>]_0^pi / (l0 - l1)
    Y = np.stack([s.values[[0, -1]] for s in sols])        # [i, end, a, b]
    dY = np.stack([s.derivatives[[0, -1]] for s in sols])
    Yh = np.conj(np.swapaxes(Y, -1, -2))
    dYh = np.conj(np.swapaxes(dY, -1, -2))
    B = np.einsum("iexy,jeyz->eijxz", dYh, Y) - np.einsum("iexy,jeyz->eijxz", Yh, dY)
    B = B[1] - B[0]
    dl = lams[None, :] - lams[:, None]
    np.fill_diagonal(dl, np.inf)
    I = B / dl[:, :, None, None]
    cross = np.einsum("iyx,ijyz,jzw->ijxw", alphas.conj(), I, alphas)
    cross_res = np.max(np.abs(cross), axis=(2, 3))
    np.fill_diagonal(cross_res, 0.0)
    worst = {"self": float(self_res.max(initial=0.0)), "cross": float(cross_res.max(initial=0.0)),
             "left_kernel": float(kernel_res.max(initial=0.0))}
    details = dict(worst, n_max=N, tol=tol)
    if max(worst.values()) > tol:
        i = int(np.argmax(self_res)) if worst["self"] > tol else None
        details["first_entry"] = None if i is None else {"n": reps[i][0], "q": reps[i][1] + 1}
        return ConditionReport(FAIL, "orthogonality or left-kernel residual above tolerance", details)
    return ConditionReport(PASS, "orthogonality relations and left-kernel property hold", details)


@dataclass
class ValidationReport:
    condition1: ConditionReport
    condition2: ConditionReport
    condition3: ConditionReport
    residuals: ConditionReport | None = None

    @property
    def accepted(self) -> bool:
        """No condition failed (inconclusive or inapplicable results do not reject)."""
        parts = [self.condition1, self.condition2, self.condition3]
        if self.residuals is not None:
            parts.append(self.residuals)
        return all(p.status != FAIL for p in parts)

    def to_dict(self) -> dict:
        out = {
            "accepted": self.accepted,
            "condition1": self.condition1.status,
            "condition2": self.condition2.status,
            "condition3": self.condition3.status,
            "messages": {k: getattr(self, k).message for k in ("condition1", "condition2", "condition3")},
            "details": {k: getattr(self, k).to_dict()["details"] for k in ("condition1", "condition2", "condition3")},
            "witnesses": {},
            "residuals": None if self.residuals is None else self.residuals.to_dict(),
        }
        w = self.condition3.details.get("witness")
        if w is not None:
            out["witnesses"]["condition3"] = _plain(w)
            out["details"]["condition3"].pop("witness", None)
        return out


def validate(data: SpectralData, problem: Problem | None = None, n0: int | None = None, **kw) -> ValidationReport:
    """Run all three conditions (and the residual checks if the problem is known)."""
    c1 = check_condition1(data)
    c2 = check_condition2(data)
    c3 = check_condition3(data, n0=n0, **kw)
    res = verify_against_problem(data, problem) if problem is not None else None
    return ValidationReport(c1, c2, c3, res)


def sine_counterexample_data(N: int = 40, lam01: float = 0.0, lam02: float = -0.5) -> SpectralData:
    """m = 2 data with lam_n1 = lam_n2 = n^2 (n >= 1) and alpha_0q = diag(1/pi, 0).

    They satisfy conditions 1 and 2 but gamma = [0, sin(rho pi)/rho] annihilates them.
    """
    omega = OmegaClass([0.0, 0.0])
    n = np.arange(N + 1, dtype=float)
    lam = np.stack([n ** 2, n ** 2], axis=1)
    lam[0] = [min(lam01, lam02), max(lam01, lam02)]
    alpha = np.zeros((N + 1, 2, 2, 2))
    alpha[0, :] = np.diag([1.0 / np.pi, 0.0])
    alpha[1:, :] = 2.0 / np.pi * np.eye(2)
    return SpectralData(omega, lam, alpha)
