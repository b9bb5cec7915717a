"""Forward data of a scalar problem, then reconstruction at increasing truncation orders."""
import numpy as np

from msl import ClosedFormPotential, Grid, Problem, assemble_spectral_data, reconstruct
from msl.potentials import Term

problem = Problem(ClosedFormPotential(1, [(0, 0, Term("cos", 1.0, 1.0))]), [[0.5]], [[0.3]])
data = assemble_spectral_data(problem, 40, Grid(2048))

for N in (10, 20, 40):
    res = reconstruct(data, N_trunc=N, x_grid=513)
    err = res.Q[:, 0, 0].real - np.cos(res.x)
    l2 = np.sqrt(np.trapezoid(err ** 2, res.x))
    print(f"N_trunc={N:2d}  L2 error {l2:.2e}  h={res.h[0, 0].real:.5f}  H={res.H[0, 0].real:.5f}  "
          f"worst condition {res.conditions.max():.1f}")
