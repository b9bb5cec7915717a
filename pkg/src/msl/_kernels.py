"""Compiled step-propagation kernels for the sixth-order Magnus scheme.

Arrays are split into real and imaginary parts and laid out (row, col, batch)
so the innermost loops run over the batch of spectral parameters.
"""
import numba as nb
import numpy as np

_TAYLOR = np.array([1.0 / np.prod(np.arange(1, d + 1, dtype=float)) for d in range(9)])
_SCALE_TARGET = 0.07


@nb.njit(cache=True, fastmath=True, inline="always")
def _mm(ar, ai, br, bi, cr, ci, n, k, nb_):
    # c = a @ b with a (n, n, B), b (n, k, B)
    for i in range(n):
        for j in range(k):
            for b in range(nb_):
                cr[i, j, b] = 0.0
                ci[i, j, b] = 0.0
            for l in range(n):
                for b in range(nb_):
                    xr = ar[i, l, b]
                    xi = ai[i, l, b]
                    yr = br[l, j, b]
                    yi = bi[l, j, b]
                    cr[i, j, b] += xr * yr - xi * yi
                    ci[i, j, b] += xr * yi + xi * yr


@nb.njit(cache=True, fastmath=True, nogil=True)
def propagate(o0, o1, lr, li, scale, damp, z0r, z0i, store):
    """Apply prod_k exp(o0[k] + lam * o1[k]) to z0 for each lam in the batch.

    The state is balanced by diag(I, I/scale) and multiplied by damp after
    every step. Returns (zr, zi) with shape (steps + 1 or 1, n, k, B).
    """
    steps, n, _ = o0.shape
    m = n // 2
    k = z0r.shape[1]
    nb_ = lr.shape[0]
    c = _TAYLOR
    xr = np.empty((n, n, nb_))
    xi = np.empty((n, n, nb_))
    x2r = np.empty((n, n, nb_))
    x2i = np.empty((n, n, nb_))
    x3r = np.empty((n, n, nb_))
    x3i = np.empty((n, n, nb_))
    x4r = np.empty((n, n, nb_))
    x4i = np.empty((n, n, nb_))
    tr = np.empty((n, n, nb_))
    ti = np.empty((n, n, nb_))
    er = np.empty((n, n, nb_))
    ei = np.empty((n, n, nb_))
    zr = z0r.copy()
    zi = z0i.copy()
    wr = np.empty((n, k, nb_))
    wi = np.empty((n, k, nb_))
    nout = steps + 1 if store else 1
    outr = np.empty((nout, n, k, nb_))
    outi = np.empty((nout, n, k, nb_))
    if store:
        outr[0] = zr
        outi[0] = zi
    for st in range(steps):
        for i in range(n):
            for j in range(n):
                a0r = o0[st, i, j].real
                a0i = o0[st, i, j].imag
                a1r = o1[st, i, j].real
                a1i = o1[st, i, j].imag
                for b in range(nb_):
                    vr = a0r + lr[b] * a1r - li[b] * a1i
                    vi = a0i + lr[b] * a1i + li[b] * a1r
                    if i < m and j >= m:
                        vr *= scale[b]
                        vi *= scale[b]
                    elif i >= m and j < m:
                        vr /= scale[b]
                        vi /= scale[b]
                    xr[i, j, b] = vr
                    xi[i, j, b] = vi
        nu = 0.0
        for j in range(n):
            for b in range(nb_):
                cs = 0.0
                for i in range(n):
                    cs += abs(xr[i, j, b]) + abs(xi[i, j, b])
                if cs > nu:
                    nu = cs
        sq = 0
        while nu > _SCALE_TARGET:
            nu *= 0.5
            sq += 1
        if sq > 0:
            fac = 0.5 ** sq
            for i in range(n):
                for j in range(n):
                    for b in range(nb_):
                        xr[i, j, b] *= fac
                        xi[i, j, b] *= fac
        # degree-8 Taylor polynomial, Paterson-Stockmeyer with blocks of 4
        _mm(xr, xi, xr, xi, x2r, x2i, n, n, nb_)
        _mm(x2r, x2i, xr, xi, x3r, x3i, n, n, nb_)
        _mm(x2r, x2i, x2r, x2i, x4r, x4i, n, n, nb_)
        for i in range(n):
            for j in range(n):
                dg = c[4] if i == j else 0.0
                for b in range(nb_):
                    tr[i, j, b] = dg + c[5] * xr[i, j, b] + c[6] * x2r[i, j, b] + c[7] * x3r[i, j, b] + c[8] * x4r[i, j, b]
                    ti[i, j, b] = c[5] * xi[i, j, b] + c[6] * x2i[i, j, b] + c[7] * x3i[i, j, b] + c[8] * x4i[i, j, b]
        _mm(x4r, x4i, tr, ti, er, ei, n, n, nb_)
        for i in range(n):
            for j in range(n):
                dg = 1.0 if i == j else 0.0
                for b in range(nb_):
                    er[i, j, b] += dg + xr[i, j, b] + c[2] * x2r[i, j, b] + c[3] * x3r[i, j, b]
                    ei[i, j, b] += xi[i, j, b] + c[2] * x2i[i, j, b] + c[3] * x3i[i, j, b]
        for r in range(sq):
            _mm(er, ei, er, ei, tr, ti, n, n, nb_)
            er[:] = tr
            ei[:] = ti
        _mm(er, ei, zr, zi, wr, wi, n, k, nb_)
        for i in range(n):
            for j in range(k):
                for b in range(nb_):
                    zr[i, j, b] = wr[i, j, b] * damp[b]
                    zi[i, j, b] = wi[i, j, b] * damp[b]
        if store:
            outr[st + 1] = zr
            outi[st + 1] = zi
    if not store:
        outr[0] = zr
        outi[0] = zi
    return outr, outi
