import numpy as np
import pytest

from msl import (
    ClosedFormPotential,
    Grid,
    OmegaClass,
    Problem,
    boundary_form_U,
    boundary_form_V,
    characteristic_function,
    d_kernel,
    integrate_solution,
    model_problem,
    model_solution,
    phi_solution,
    s_solution,
    weyl_matrix,
    weyl_solution,
)
from msl.errors import NearPoleError, ResolutionError, IntegrationDivergenceError
from msl.operator_core import (
    bilinear_form,
    gram_integral,
    model_d_kernel,
    scaled_characteristic,
)
from msl.potentials import CallablePotential, Term


def free(m=1):
    return Problem(ClosedFormPotential.zero(m), np.zeros((m, m)), np.zeros((m, m)))


def test_free_cosine_solution():
    sol = integrate_solution(free(), 1.0, [[1.0]], [[0.0]], Grid(2000))
    x = sol.x
    assert np.max(np.abs(sol.values[:, 0, 0] - np.cos(x))) <= 1e-10
    assert np.max(np.abs(sol.derivatives[:, 0, 0] + np.sin(x))) <= 1e-10


def test_free_sine_solution():
    sol = integrate_solution(free(), 1.0, [[0.0]], [[1.0]], Grid(2000))
    assert np.max(np.abs(sol.values[:, 0, 0] - np.sin(sol.x))) <= 1e-10


def test_initial_values_exact():
    p = Problem(ClosedFormPotential(1, [(0, 0, Term("cos", 2.0, 3.0))]), [[0.7]], [[0.1]])
    phi = phi_solution(p, 5.0 + 1.0j)
    assert phi.values[0, 0, 0] == 1.0 and phi.derivatives[0, 0, 0] == 0.7
    s = s_solution(p, 5.0 + 1.0j)
    assert s.values[0, 0, 0] == 0.0 and s.derivatives[0, 0, 0] == 1.0


def test_model_channels_closed_form():
    omega = OmegaClass([0.0, np.pi / 2])
    sol = phi_solution(model_problem(omega), 4.0)
    x = sol.x
    assert np.max(np.abs(sol.values[:, 0, 0] - np.cos(2 * x))) <= 1e-10
    assert np.max(np.abs(sol.values[:, 1, 1] - np.cos(np.sqrt(3.0) * x))) <= 1e-10
    assert np.max(np.abs(sol.values[:, 0, 1])) <= 1e-14


def test_ode_residual_small():
    p = Problem(ClosedFormPotential.from_upper(2, [(0, 0, Term("cos", 1.0, 1.0)), (0, 1, Term("sin", 0.3, 1.0))]),
                np.eye(2) * 0.1, np.zeros((2, 2)))
    assert phi_solution(p, 7.3).ode_residual() < 1e-4


@pytest.mark.parametrize("rho", [0.5, 1.3, 2.0 + 0.5j])
def test_boundary_forms_free(rho):
    lam = rho ** 2
    phi = phi_solution(free(), lam)
    s = s_solution(free(), lam)
    assert abs(boundary_form_V(phi, [[0.0]])[0, 0] - (-rho * np.sin(rho * np.pi))) < 1e-9
    assert abs(boundary_form_U(phi, [[0.0]])[0, 0]) == 0.0
    assert abs(boundary_form_V(s, [[0.0]])[0, 0] - np.cos(rho * np.pi)) < 1e-9


def test_characteristic_function_free():
    assert abs(characteristic_function(free(), 0.25) - (-0.5)) < 1e-10
    for n in range(1, 6):
        assert abs(characteristic_function(free(), float(n * n))) < 1e-9


def test_characteristic_function_model_second_channel():
    p = model_problem(OmegaClass([0.0, np.pi / 2]))
    for n in range(0, 4):
        assert abs(characteristic_function(p, n * n + 1.0)) < 1e-8


def test_characteristic_conjugation_invariant():
    from msl import normalize_to_A_omega
    Q = ClosedFormPotential.from_upper(2, [(0, 0, Term("cos", 1.0, 1.0)), (0, 1, Term("sin", 0.4, 2.0))])
    h = np.array([[0.0, 1.0], [1.0, 0.0]])
    H = np.zeros((2, 2))
    p0 = Problem(Q, h, H)
    p1, U = normalize_to_A_omega(Q, h, H)
    for lam in [0.3, 2.0 + 1.0j, -1.5, 9.1, 20.0 - 3.0j]:
        a, b = characteristic_function(p0, lam), characteristic_function(p1, lam)
        assert abs(a - b) <= 1e-9 * max(1.0, abs(a))


def test_weyl_free_values():
    assert abs(weyl_matrix(free(), 1.0 / 9.0)[0, 0] - np.sqrt(3.0)) < 1e-10
    assert abs(weyl_matrix(free(), 0.25)[0, 0]) < 1e-10


def test_weyl_block_diagonal_decoupling():
    q1 = ClosedFormPotential(1, [(0, 0, Term("cos", 1.0, 1.0))])
    q2 = ClosedFormPotential(1, [(0, 0, Term("sin", 0.5, 2.0))])
    p1 = Problem(q1, [[0.2]], [[0.1]])
    p2 = Problem(q2, [[-0.3]], [[0.4]])
    Q = ClosedFormPotential(2, [(0, 0, Term("cos", 1.0, 1.0)), (1, 1, Term("sin", 0.5, 2.0))])
    p = Problem(Q, np.diag([0.2, -0.3]), np.diag([0.1, 0.4]))
    lam = 2.7 + 0.4j
    M = weyl_matrix(p, lam)
    assert abs(M[0, 0] - weyl_matrix(p1, lam)[0, 0]) < 1e-10
    assert abs(M[1, 1] - weyl_matrix(p2, lam)[0, 0]) < 1e-10
    assert abs(M[0, 1]) < 1e-12


def test_weyl_reflection(fleet):
    p = fleet.problem("coupled")
    rng = np.random.default_rng(0)
    for _ in range(10):
        lam = complex(rng.uniform(-5, 60), rng.uniform(-10, 10))
        assert np.max(np.abs(weyl_matrix(p, np.conj(lam)) - weyl_matrix(p, lam).conj().T)) <= 1e-8


def test_weyl_near_pole():
    with pytest.raises(NearPoleError) as e:
        weyl_matrix(free(), 4.0 + 1e-12, eigenvalues=[0.0, 1.0, 4.0])
    assert e.value.pole == 4.0
    with pytest.raises(NearPoleError):
        weyl_matrix(free(), 4.0)


def test_weyl_solution_boundary_conditions(fleet):
    p = fleet.problem("coupled")
    Phi = weyl_solution(p, 3.3 + 0.7j)
    assert np.max(np.abs(boundary_form_U(Phi, p.h) - np.eye(2))) < 1e-9
    assert np.max(np.abs(boundary_form_V(Phi, p.H))) < 1e-8


def test_d_kernel_examples():
    g = Grid(2049)
    p = free()
    a0, b0 = phi_solution(p, 0.0, g), phi_solution(p, 0.0, g)
    assert abs(d_kernel(a0, b0, np.pi / 2)[0, 0] - np.pi / 2) < 1e-10
    b1 = phi_solution(p, 1.0, g)
    for x in [0.3, 1.0, 2.5]:
        xi = g.x[np.argmin(np.abs(g.x - x))]
        assert abs(d_kernel(a0, b1, xi)[0, 0] - np.sin(xi)) < 1e-10
    assert np.all(d_kernel(a0, b1, 0.0) == 0.0)


def test_d_kernel_two_forms_agree(fleet):
    p = fleet.problem("coupled")
    rng = np.random.default_rng(1)
    g = Grid(2048)
    for _ in range(4):
        lam = complex(rng.uniform(-2, 30), rng.uniform(-2, 2))
        mu = complex(rng.uniform(-2, 30), rng.uniform(-2, 2))
        a = phi_solution(p, np.conj(mu), g)
        b = phi_solution(p, lam, g)
        i = int(rng.integers(1, 2048))
        wr = bilinear_form(a, b)[i] / (lam - mu)
        quad = gram_integral(a, b)[i]
        assert np.max(np.abs(wr - quad)) <= 1e-8


def test_d_kernel_switch_branch():
    p = free()
    g = Grid(2048)
    a = phi_solution(p, 2.0, g)
    b = phi_solution(p, 2.0 + 1e-8, g)
    x = g.x[1000]
    rho = np.sqrt(2.0)
    exact = x / 2 + np.sin(2 * rho * x) / (4 * rho)
    assert abs(d_kernel(a, b, x)[0, 0] - exact) < 1e-7


def test_wronskian_constancy(fleet):
    p = fleet.problem("complex3")
    lam = 5.5 + 2.0j
    a = phi_solution(p, np.conj(lam))
    b = phi_solution(p, lam)
    w = bilinear_form(a, b)
    assert np.max(np.abs(w - w[0])) <= 1e-8 * max(1.0, np.max(np.abs(w)))


def test_model_solution_examples():
    g = Grid(1025)
    s = model_solution(OmegaClass([0.0, 0.0]), 4.0, g)
    assert np.max(np.abs(s.values - np.cos(2 * g.x)[:, None, None] * np.eye(2))) < 1e-14
    s = model_solution(OmegaClass([0.0, np.pi / 2]), 1.0, g)
    assert np.max(np.abs(s.values[:, 0, 0] - np.cos(g.x))) < 1e-14
    assert np.max(np.abs(s.values[:, 1, 1] - 1.0)) < 1e-14
    S = model_solution(OmegaClass([0.0, np.pi / 2]), 1.0, g, kind="S")
    assert np.max(np.abs(S.values[:, 1, 1] - g.x)) < 1e-14


def test_model_solution_matches_integrator():
    omega = OmegaClass([0.3, 1.0, 2.0])
    g = Grid(2048)
    for lam in [-3.0, 0.5, 7.0 + 2.0j]:
        a = model_solution(omega, lam, g)
        b = phi_solution(model_problem(omega), lam, g)
        assert np.max(np.abs(a.values - b.values)) <= 1e-9
        assert np.max(np.abs(a.derivatives - b.derivatives)) <= 1e-9 * max(1.0, abs(lam))


def test_model_d_kernel_matches_quadrature():
    omega = OmegaClass([0.0, np.pi / 2])
    g = Grid(2048)
    lam, mu = 3.7, 1.2
    a = model_solution(omega, mu, g)
    b = model_solution(omega, lam, g)
    i = 1500
    assert np.max(np.abs(model_d_kernel(omega, g.x[i], lam, mu) - gram_integral(a, b)[i])) < 1e-10


def test_characteristic_growth_envelope(fleet):
    p = fleet.problem("coupled")
    rho = np.linspace(0.5, 12, 40) + 1.5j
    d = np.array([characteristic_function(p, r * r) for r in rho])
    env = (np.abs(rho) + 1) ** 2 * np.exp(2 * np.abs(rho.imag) * np.pi)
    C = np.max(np.abs(d) / env)
    assert np.all(np.abs(d) <= C * env * (1 + 1e-12))
    assert C < 10


def test_resolution_error():
    with pytest.raises(ResolutionError):
        phi_solution(free(), 1e6, Grid(64))


def test_divergence_error():
    bad = CallablePotential(lambda x: np.full((x.size, 1, 1), np.nan), 1)
    with pytest.raises((IntegrationDivergenceError, ValueError)):
        phi_solution(Problem(bad, [[0.0]], [[0.0]]), 1.0)


def test_scaled_characteristic_keeps_zeros():
    p = free()
    lams = np.array([1.0, 4.0, 9.0])
    assert np.all(np.abs(scaled_characteristic(p, lams)[0]) < 1e-10)


def test_omega_class_invariants():
    om = OmegaClass([0.0, 0.0, 1.0, 2.0, 2.0])
    assert om.p == 3
    assert list(om.group_bounds) == [0, 2, 3, 5]
    assert np.allclose(sum(om.group_projectors), np.eye(5))
    with pytest.raises(ValueError):
        OmegaClass([1.0, 0.0])
