"""Matrix potentials Q(x) on [0, pi]: closed-form tables, grid samples, callables."""
from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ValidationError

HERMITIAN_WARN_TOL = 1e-10


def hermitian_part(a: np.ndarray, name: str = "matrix", warn: bool = True) -> np.ndarray:
    """Return (A + A*)/2, warning when A was not Hermitian to 1e-10."""
    a = np.asarray(a, dtype=complex)
    ah = np.conj(np.swapaxes(a, -1, -2))
    asym = float(np.max(np.abs(a - ah))) if a.size else 0.0
    if warn and asym > HERMITIAN_WARN_TOL:
        warnings.warn(f"{name} is not Hermitian (asymmetry {asym:.3e}); symmetrized", stacklevel=3)
    return 0.5 * (a + ah)


@dataclass(frozen=True)
class Term:
    """One additive term of a matrix entry.

    kind is 'poly' (amp * x**power), 'cos' (amp * cos(freq x)) or 'sin'.
    """

    kind: str
    amp: complex
    freq: float = 0.0
    power: int = 0

    def __post_init__(self):
        if self.kind not in ("poly", "cos", "sin"):
            raise ValidationError(f"unknown term kind {self.kind!r}")
        if self.kind == "poly" and (int(self.power) != self.power or self.power < 0):
            raise ValidationError("poly power must be a nonnegative integer")

    def __call__(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "poly":
            return self.amp * x ** self.power
        if self.kind == "cos":
            return self.amp * np.cos(self.freq * x)
        return self.amp * np.sin(self.freq * x)

    def integral(self) -> complex:
        """Exact integral over [0, pi]."""
        f = self.freq
        if self.kind == "poly":
            return self.amp * np.pi ** (self.power + 1) / (self.power + 1)
        if self.kind == "cos":
            return self.amp * (np.pi if f == 0 else np.sin(f * np.pi) / f)
        return self.amp * (0.0 if f == 0 else (1.0 - np.cos(f * np.pi)) / f)


class Potential:
    """Hermitian-matrix-valued function on [0, pi]."""

    m: int

    def _raw(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _raw_integral(self) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x) -> np.ndarray:
        """Values at the points x, shape x.shape + (m, m), Hermitian."""
        x = np.asarray(x, dtype=float)
        return hermitian_part(self._raw(x), warn=False)

    def integral(self) -> np.ndarray:
        """The matrix integral of Q over [0, pi]."""
        return hermitian_part(self._raw_integral(), warn=False)

    @property
    def is_real(self) -> bool:
        xs = np.linspace(0.0, np.pi, 17)
        return bool(np.max(np.abs(np.imag(self(xs)))) == 0.0)

    def _check_hermitian(self, name="Q"):
        xs = np.linspace(0.0, np.pi, 33)
        hermitian_part(self._raw(xs), name=name)

    def grid_values(self, points: int) -> np.ndarray:
        return self(np.linspace(0.0, np.pi, points))


class ClosedFormPotential(Potential):
    """Per-entry table of polynomial and trigonometric terms.

    terms is an iterable of (row, col, Term) with 0-based indices. Entries
    without terms are zero. The evaluated matrix is symmetrized.
    """

    def __init__(self, m: int, terms: Iterable = ()):
        self.m = int(m)
        self.terms = tuple((int(r), int(c), t) for r, c, t in terms)
        for r, c, _ in self.terms:
            if not (0 <= r < self.m and 0 <= c < self.m):
                raise ValidationError(f"term index ({r}, {c}) outside a {self.m}x{self.m} matrix")
        self._check_hermitian()

    @classmethod
    def zero(cls, m: int) -> "ClosedFormPotential":
        return cls(m, ())

    @classmethod
    def constant(cls, c) -> "ClosedFormPotential":
        c = np.atleast_2d(np.asarray(c, dtype=complex))
        m = c.shape[0]
        return cls(m, [(i, j, Term("poly", complex(c[i, j]))) for i in range(m) for j in range(m) if c[i, j] != 0])

    @classmethod
    def from_upper(cls, m: int, terms: Iterable) -> "ClosedFormPotential":
        """Build a Hermitian table from terms given on and above the diagonal."""
        full = []
        for r, c, t in terms:
            if r > c:
                raise ValidationError("from_upper expects row <= col")
            full.append((r, c, t))
            if r != c:
                full.append((c, r, Term(t.kind, np.conj(t.amp), t.freq, t.power)))
        return cls(m, full)

    def _raw(self, x):
        out = np.zeros(x.shape + (self.m, self.m), dtype=complex)
        for r, c, t in self.terms:
            out[..., r, c] += t(x)
        return out

    def _raw_integral(self):
        out = np.zeros((self.m, self.m), dtype=complex)
        for r, c, t in self.terms:
            out[r, c] += t.integral()
        return out


class GridPotential(Potential):
    """Samples on a uniform grid of [0, pi], interpolated by cubic splines."""

    def __init__(self, values):
        v = np.asarray(values, dtype=complex)
        if v.ndim == 1:
            v = v[:, None, None]
        if v.ndim != 3 or v.shape[1] != v.shape[2] or v.shape[0] < 4:
            raise ValidationError("grid potential needs shape (points>=4, m, m)")
        self.values = hermitian_part(v, name="Q grid")
        self.values.setflags(write=False)
        self.m = v.shape[1]
        self.x = np.linspace(0.0, np.pi, v.shape[0])
        self._spline = CubicSpline(self.x, self.values, axis=0)

    def _raw(self, x):
        return self._spline(x)

    def _raw_integral(self):
        return self._spline.integrate(0.0, np.pi)


class CallablePotential(Potential):
    """Wraps a vectorized function x -> (len(x), m, m)."""

    def __init__(self, func: Callable, m: int, quad_points: int = 256):
        self.func = func
        self.m = int(m)
        self._quad_points = quad_points
        self._check_hermitian()

    def _raw(self, x):
        flat = np.ravel(x)
        v = np.asarray(self.func(flat), dtype=complex).reshape(flat.shape + (self.m, self.m))
        return v.reshape(np.shape(x) + (self.m, self.m))

    def _raw_integral(self):
        t, w = np.polynomial.legendre.leggauss(self._quad_points)
        x = 0.5 * np.pi * (t + 1.0)
        return 0.5 * np.pi * np.einsum("i,ijk->jk", w, self._raw(x))
