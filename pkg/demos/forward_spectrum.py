"""Eigenvalues and residue matrices of a coupled 2x2 problem, compared with the model asymptotics."""
import numpy as np

from msl import ClosedFormPotential, Grid, assemble_spectral_data, asymptotics_report, normalize_to_A_omega, validate
from msl.potentials import Term

Q = ClosedFormPotential.from_upper(2, [(0, 0, Term("cos", 1.0, 1.0)), (1, 1, Term("poly", 0.4)),
                                       (0, 1, Term("sin", 0.3, 1.0))])
# (1/2) int Q has an off-diagonal part, so rotate to a basis where omega is diagonal
problem, U = normalize_to_A_omega(Q, np.diag([0.2, 0.1]), np.diag([0.1, 0.3]))
print("omega =", problem.omega.omega_values)

data = assemble_spectral_data(problem, 12, Grid(2048))
w = problem.omega.omega_values
for n in range(6):
    model = n ** 2 + 2 * w / np.pi
    print(f"n={n:2d}  lam={np.round(data.lam[n], 6)}  model={np.round(model, 6)}  "
          f"rank={data.multiplicity[n].tolist()}")

rep = asymptotics_report(data)
print("max |kappa_n| over the last five n:", np.abs(rep.kappa_nq[-5:]).max())
print("validator accepted:", validate(data, problem).accepted)
