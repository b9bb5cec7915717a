"""SpectralData container with the distinct-value bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError
from .operator_core import OmegaClass

SAME_VALUE_TOL = 1e-10


def same_value(a: float, b: float, tol: float = SAME_VALUE_TOL) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigenvalues lam[n, q] and residue matrices alpha[n, q] for n = 0..N_max.

    Indices q are 0-based here (q = 0 .. m-1). Entries sharing an eigenvalue
    (up to SAME_VALUE_TOL, relative) form one distinct value; the
    lexicographically first index of each value is its representative and
    carries alpha_prime, all other alpha_prime entries are zero.
    """

    omega: OmegaClass
    lam: np.ndarray
    alpha: np.ndarray
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        lam = np.asarray(self.lam)
        if np.iscomplexobj(lam):
            if np.any(np.abs(lam.imag) > 0):
                # kept complex so that validators can report it
                lam = lam.astype(complex)
            else:
                lam = lam.real
        lam = np.array(lam, dtype=lam.dtype if np.iscomplexobj(lam) else float)
        alpha = np.array(self.alpha, dtype=complex)
        if lam.ndim != 2 or lam.shape[1] != self.omega.m:
            raise DimensionError(f"lam must have shape (N+1, {self.omega.m})")
        if alpha.shape != lam.shape + (self.omega.m, self.omega.m):
            raise DimensionError("alpha must have shape (N+1, m, m, m)")
        lam.setflags(write=False)
        alpha.setflags(write=False)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "_cache", {})

    @property
    def m(self) -> int:
        return self.omega.m

    @property
    def N_max(self) -> int:
        return self.lam.shape[0] - 1

    @property
    def rho(self) -> np.ndarray:
        """Principal square roots of the eigenvalues."""
        return np.sqrt(self.lam.astype(complex))

    def _groups(self):
        c = self._cache
        if "groups" not in c:
            flat = [(n, q) for n in range(self.N_max + 1) for q in range(self.m)]
            vals = np.array([self.lam[n, q] for n, q in flat])
            order = np.argsort(vals.real, kind="stable")
            groups = []
            cur = [flat[order[0]]]
            for a, b in zip(order[:-1], order[1:]):
                if same_value(vals[a], vals[b]):
                    cur.append(flat[b])
                else:
                    groups.append(sorted(cur))
                    cur = [flat[b]]
            groups.append(sorted(cur))
            groups.sort()
            c["groups"] = groups
        return c["groups"]

    def value_groups(self) -> list:
        """Lists of (n, q) sharing one eigenvalue, each sorted lexicographically."""
        return [list(g) for g in self._groups()]

    @property
    def representative(self) -> np.ndarray:
        c = self._cache
        if "rep" not in c:
            rep = np.zeros(self.lam.shape, dtype=bool)
            for g in self._groups():
                rep[g[0]] = True
            rep.setflags(write=False)
            c["rep"] = rep
        return c["rep"]

    @property
    def distinct_support(self) -> list:
        return [tuple(int(i) for i in g[0]) for g in self._groups()]

    @property
    def multiplicity(self) -> np.ndarray:
        c = self._cache
        if "mult" not in c:
            mult = np.zeros(self.lam.shape, dtype=int)
            for g in self._groups():
                for nq in g:
                    mult[nq] = len(g)
            mult.setflags(write=False)
            c["mult"] = mult
        return c["mult"]

    @property
    def alpha_prime(self) -> np.ndarray:
        c = self._cache
        if "ap" not in c:
            ap = self.alpha * self.representative[:, :, None, None]
            ap.setflags(write=False)
            c["ap"] = ap
        return c["ap"]

    def alpha_groups(self) -> np.ndarray:
        """alpha_n^(s) = sum of alpha_prime over q in group s; shape (N+1, p, m, m)."""
        b = self.omega.group_bounds
        ap = self.alpha_prime
        return np.stack([ap[:, b[s]:b[s + 1]].sum(axis=1) for s in range(self.omega.p)], axis=1)

    def truncated(self, N: int) -> "SpectralData":
        if N > self.N_max:
            raise ValidationError(f"cannot truncate to N={N} > N_max={self.N_max}")
        return SpectralData(self.omega, self.lam[:N + 1], self.alpha[:N + 1])

    def replace(self, lam=None, alpha=None) -> "SpectralData":
        return SpectralData(self.omega, self.lam if lam is None else lam, self.alpha if alpha is None else alpha)

    def __repr__(self):
        return f"SpectralData(m={self.m}, N_max={self.N_max}, omega={self.omega.omega_values.tolist()})"
