"""Pointwise error of the reconstruction near the endpoints.

With h = H = 0 and Q = cos x the residues differ from the model ones by about
1/(pi n^2), and replacing the tail by model data leaves an endpoint layer that
shrinks in width but not in height as N_trunc grows. With h = 0.5, H = 0.3 the
1/n^2 term nearly cancels and the layer disappears.
"""
import numpy as np

from msl import ClosedFormPotential, Grid, Problem, assemble_spectral_data, reconstruct
from msl.potentials import Term

for h, H in ((0.0, 0.0), (0.5, 0.3)):
    problem = Problem(ClosedFormPotential(1, [(0, 0, Term("cos", 1.0, 1.0))]), [[h]], [[H]])
    data = assemble_spectral_data(problem, 40, Grid(2048))
    n = np.arange(20, 41)
    tail = n ** 2 * (data.alpha[20:, 0, 0, 0].real - 2 / np.pi)
    print(f"h={h} H={H}: n^2 (alpha_n - 2/pi) for n = 20..40 ranges over [{tail.min():.4f}, {tail.max():.4f}]")
    for N in (10, 20, 40):
        res = reconstruct(data, N_trunc=N, x_grid=1025)
        err = np.abs(res.Q[:, 0, 0].real - np.cos(res.x))
        mid = err[(res.x > 0.5) & (res.x < np.pi - 0.5)].max()
        print(f"  N_trunc={N:2d}  error at x=0 {err[0]:.3f}  x=pi {err[-1]:.3f}  max on [0.5, pi-0.5] {mid:.2e}")
