import types

import numpy as np
import pytest

from msl import (
    Grid,
    OmegaClass,
    build_system,
    compute_xi,
    derivative_system,
    integrate_solution,
    model_spectral_data,
    reconstruct,
    recover_phi,
    solve_main_equation,
    weyl_from_data,
    weyl_matrix,
)
from msl.errors import IllConditionedError, NearPoleError, ValidationError
from msl.inverse import (
    MainEquationSystem,
    _assemble,
    _tables,
    block_transforms,
    fd_derivative,
    model_weyl_matrix,
)
from msl.operator_core import model_d_kernel


@pytest.fixture(scope="module")
def scalar(fleet):
    p = fleet.cos_scalar(0.5, 0.3)
    from msl import assemble_spectral_data
    d = assemble_spectral_data(p, 40, Grid(2048))
    return p, d


def setup(data, N):
    md = model_spectral_data(data.omega, data.N_max)
    xi = compute_xi(data, md)
    return md, xi, _tables(data, md, xi, N)


@pytest.mark.parametrize("omega", [[0.0, 0.0], [0.0, np.pi / 2], [0.2, 1.0, 1.0]])
def test_model_data_gives_zero_R(omega):
    om = OmegaClass(omega)
    md = model_spectral_data(om, 6)
    xi = compute_xi(md, md)
    assert np.all(xi.xi == 0) and xi.Omega == 0.0 and np.all(xi.chi == 0)
    s = build_system(md, md, xi, 0.9, 6)
    assert np.max(np.abs(s.R_tilde)) == 0.0
    psi = s.psi_tilde
    m = om.m
    for n in range(7):
        for q in range(m):
            u0, u1 = n * 2 * m + 2 * q, n * 2 * m + 2 * q + 1
            r = om.representative(q)
            assert np.all(psi[u0] == 0)
            if q == r:
                a = np.sqrt((md.lam[n, q] - 2 / np.pi * om.omega_values).astype(complex))
                assert np.allclose(psi[u1], np.diag(np.cos(a * 0.9).real), atol=1e-15)
            else:
                assert np.all(psi[u1] == 0)


def test_model_model_data_table():
    md = model_spectral_data(OmegaClass([0.0, 0.0]), 3)
    assert np.allclose(md.lam, np.arange(4)[:, None] ** 2 * np.ones(2))
    assert np.allclose(md.alpha[0, 0], np.eye(2) / np.pi)
    assert np.allclose(md.alpha[2, 1], 2 * np.eye(2) / np.pi)
    md = model_spectral_data(OmegaClass([0.0, np.pi / 2]), 1)
    assert np.allclose(md.lam, [[0, 1], [1, 2]])


def test_transforms_are_inverse(fleet):
    d = fleet.data("coupled", 10)
    md, xi, t = setup(d, 10)
    assert np.all(xi.xi > 0)
    for n in range(11):
        assert np.allclose(t.X[n] @ t.Y[n], np.eye(4), atol=1e-12)


def literal_R(data, md, xi, x, N):
    """R~_{v,u} = sum Y_k[v, v'] F~-_{v', u'} X_n[u', u] with F~-_{v,u} = (-1)^j alpha'_v D~(x, lam_u, lam_v)."""
    om = data.omega
    m = om.m
    lam, ap, sign = [], [], []
    for n in range(N + 1):
        for q in range(m):
            for i, src in enumerate((data, md)):
                lam.append(float(src.lam[n, q]))
                ap.append(src.alpha_prime[n, q])
                sign.append((-1) ** i)
    V = len(lam)
    F = np.zeros((V, V, m, m), dtype=complex)
    for v in range(V):
        for u in range(V):
            F[v, u] = sign[v] * ap[v] @ model_d_kernel(om, x, lam[u], lam[v])
    X, Y = block_transforms(om, type(xi)(xi.xi[:N + 1], xi.chi[:N + 1], xi.Omega))
    w = 2 * m
    R = np.zeros_like(F)
    for v in range(V):
        k, b = divmod(v, w)
        for u in range(V):
            n, c = divmod(u, w)
            acc = np.zeros((m, m), dtype=complex)
            for a in range(w):
                for e in range(w):
                    acc += Y[k, b, a] * F[k * w + a, n * w + e] * X[n, e, c]
            R[v, u] = acc
    return R


@pytest.mark.parametrize("name", ["coupled", "collision"])
def test_R_tilde_matches_literal_blocks(fleet, name):
    d = fleet.data(name, 4)
    md, xi, _ = setup(d, 4)
    s = build_system(d, md, xi, 1.1, 2)
    R = literal_R(d, md, xi, 1.1, 2)
    assert np.max(np.abs(s.R_tilde - R)) <= 1e-10 * max(1.0, np.max(np.abs(R)))


def test_psi_tilde_is_phi_tilde_times_X(fleet):
    d = fleet.data("coupled", 4)
    md, xi, t = setup(d, 3)
    s = _assemble(t, 0.7)
    w = 2 * d.m
    phit = s.phi_tilde
    for n in range(4):
        for c in range(w):
            exp = sum(phit[n * w + e] * t.X[n, e, c] for e in range(w))
            assert np.allclose(s.psi_tilde[n * w + c], exp, atol=1e-14)


def fake_system(G, B, m):
    V = B.shape[0] // m
    tables = types.SimpleNamespace(omega=OmegaClass([0.0] * m), lam=np.zeros(V))
    return MainEquationSystem(0.3, B, G, tables, None)


def test_zero_R_gives_psi_tilde():
    rng = np.random.default_rng(0)
    B = rng.normal(size=(12, 2))
    sol = solve_main_equation(fake_system(np.zeros((12, 12)), B, 2))
    assert np.array_equal(sol.psi_T, B)


def test_sherman_morrison():
    rng = np.random.default_rng(1)
    n = 16
    a = rng.normal(size=n)
    c = rng.normal(size=n) * 0.3
    G = np.outer(a, c)
    B = rng.normal(size=(n, 2))
    sol = solve_main_equation(fake_system(G, B, 2))
    exact = B - np.outer(a, c @ B) / (1.0 + c @ a)
    assert np.max(np.abs(sol.psi_T - exact)) <= 1e-12


def test_elimination_matches_dense_solve():
    rng = np.random.default_rng(2)
    m, V = 2, 10
    G = rng.normal(size=(V * m, V * m)) * 0.1
    for u in (1, 4, 7):
        G[u * m:(u + 1) * m] = 0.0
    B = rng.normal(size=(V * m, m))
    sol = solve_main_equation(fake_system(G, B, m))
    dense = np.linalg.solve(np.eye(V * m) + G, B)
    assert np.max(np.abs(sol.psi_T - dense)) <= 1e-12
    assert sol.known.size == 3 * m


def test_ill_conditioned_raises():
    G = -np.eye(4)
    G[0, 0] = -1.0 + 1e-14
    with pytest.raises(IllConditionedError):
        solve_main_equation(fake_system(G, np.ones((4, 2)), 2))


def test_m1_collapse(scalar):
    _, d = scalar
    md, xi, t = setup(d, 8)
    s = _assemble(t, 1.3)
    sol = solve_main_equation(s)
    phi = recover_phi(sol.psi_T, t)
    psi = sol.psi
    for n in range(9):
        assert np.allclose(psi[2 * n], xi.chi[n] * (phi[2 * n] - phi[2 * n + 1]), atol=1e-12)
        assert np.allclose(psi[2 * n + 1], phi[2 * n + 1], atol=1e-14)


def test_tail_invariance_dense_double(scalar):
    """Solving at 2 N with model data beyond N reproduces the N solution."""
    _, d = scalar
    N = 10
    md = model_spectral_data(d.omega, 2 * N)
    lam = md.lam.copy()
    alpha = md.alpha.copy()
    lam[:N + 1] = d.lam[:N + 1]
    alpha[:N + 1] = d.alpha[:N + 1]
    d2 = d.replace(lam=lam, alpha=alpha)
    xi2 = compute_xi(d2, md)
    big = build_system(d2, md, xi2, np.pi / 2, 2 * N)
    dense = np.linalg.solve(np.eye(big.G.shape[0]) + big.G, big.psi_tilde_T)
    small = solve_main_equation(build_system(d2, md, xi2, np.pi / 2, N))
    assert np.max(np.abs(dense[:small.psi_T.shape[0]] - small.psi_T)) <= 1e-6


def test_recovered_phi_matches_true_solutions(scalar):
    p, d = scalar
    md, xi, t = setup(d, 20)
    s = _assemble(t, np.pi / 2)
    phi = recover_phi(solve_main_equation(s).psi_T, t)
    g = Grid(2049)
    true = np.array([integrate_solution(p, lam, [[1.0]], p.h, g).values[1024] for lam in d.lam[:21, 0]])
    assert np.max(np.abs(phi[0::2] - true)) <= 1e-5


def test_recovered_phi_at_zero_is_identity(fleet):
    d = fleet.data("coupled", 12)
    md, xi, t = setup(d, 12)
    phi = recover_phi(solve_main_equation(_assemble(t, 0.0)).psi_T, t)
    assert np.max(np.abs(phi - np.eye(2))) <= 1e-10


def test_chi_convention_slots_do_not_contribute(scalar):
    _, d = scalar
    md = model_spectral_data(d.omega, 5)
    d5 = d.truncated(5)
    lam = d5.lam.copy()
    alpha = d5.alpha.copy()
    lam[3] = md.lam[3]
    alpha[3] = md.alpha[3]
    dd = d5.replace(lam=lam, alpha=alpha)
    xi = compute_xi(dd, md)
    assert xi.xi[3] == 0 and xi.chi[3] == 0
    t = _tables(dd, md, xi, 5)
    rng = np.random.default_rng(3)
    psi = rng.normal(size=(12, 1))
    phi_a = recover_phi(psi, t)
    psi[6] += 5.0   # the xi-scaled slot of cluster 3
    phi_b = recover_phi(psi, t)
    assert np.array_equal(phi_a[6:8], phi_b[6:8])


def test_derivative_system_zero_R():
    om = OmegaClass([0.0, 1.0])
    md = model_spectral_data(om, 4)
    xi = compute_xi(md, md)
    s = build_system(md, md, xi, 0.8, 4)
    dpsi = derivative_system(s, solve_main_equation(s))
    assert np.max(np.abs(dpsi - s.dpsi_tilde_T)) <= 1e-15


def test_derivative_system_vs_central_differences(scalar):
    _, d = scalar
    md, xi, t = setup(d, 20)
    x0, hx = 1.0, 1e-4

    def psi(x):
        return solve_main_equation(_assemble(t, x)).psi_T

    s = _assemble(t, x0)
    dp = derivative_system(s, solve_main_equation(s))
    fd = (psi(x0 + hx) - psi(x0 - hx)) / (2 * hx)
    assert np.max(np.abs(dp - fd)) <= 1e-5 * np.max(np.abs(dp))


def test_model_kernel_derivative_identity():
    om = OmegaClass([0.0, 0.7])
    lam, mu, x, hx = 3.3, 1.7, 1.2, 1e-4
    dD = (model_d_kernel(om, x + hx, lam, mu) - model_d_kernel(om, x - hx, lam, mu)) / (2 * hx)
    a = np.sqrt(lam - 2 / np.pi * om.omega_values)
    b = np.sqrt(mu - 2 / np.pi * om.omega_values)
    assert np.max(np.abs(dD - np.diag(np.cos(a * x) * np.cos(b * x)))) <= 1e-8


def test_xi_single_shift():
    om = OmegaClass([0.0])
    md = model_spectral_data(om, 10)
    lam = md.lam.copy()
    delta = 0.37
    lam[5, 0] += delta
    xi = compute_xi(md.replace(lam=lam), md)
    assert abs(xi.xi[5] - (np.sqrt(25 + delta) - 5)) < 1e-15
    assert np.count_nonzero(xi.xi) == 1
    assert abs(xi.Omega - 6 * xi.xi[5]) < 1e-15


def test_xi_bounded_for_smooth_problem(fleet):
    d = fleet.data("coupled")
    xi = compute_xi(d, model_spectral_data(d.omega, d.N_max))
    n = np.arange(d.N_max + 1)
    assert np.max((n + 1) * xi.xi) < 5.0
    assert np.isfinite(xi.Omega)


def test_weyl_from_model_data_exact():
    om = OmegaClass([0.0, 0.5])
    md = model_spectral_data(om, 20)
    for lam in [0.3 + 0.2j, -2.0, 7.1]:
        assert np.max(np.abs(weyl_from_data(md, md, lam) - model_weyl_matrix(om, lam))) <= 1e-14


def test_weyl_from_free_data():
    md = model_spectral_data(OmegaClass([0.0]), 40)
    assert abs(weyl_from_data(md, md, 1 / 9)[0, 0] - np.sqrt(3.0)) < 1e-12
    with pytest.raises(NearPoleError):
        weyl_from_data(md, md, 4.0)


def test_weyl_from_data_matches_true(scalar):
    p, d = scalar
    md = model_spectral_data(d.omega, d.N_max)
    for lam in [0.5 + 1j, -3.0, 10.5 + 0.5j]:
        assert abs(weyl_from_data(d, md, lam)[0, 0] - weyl_matrix(p, lam)[0, 0]) < 1e-3


@pytest.mark.parametrize("omega", [[0.0], [0.0, np.pi / 2], [1.0, 1.0, 2.0]])
def test_reconstruct_model_fixed_point(omega):
    om = OmegaClass(omega)
    res = reconstruct(model_spectral_data(om, 8), x_grid=33)
    assert np.max(np.abs(res.Q - 2 / np.pi * om.matrix)) <= 1e-12
    assert np.max(np.abs(res.h)) <= 1e-12 and np.max(np.abs(res.H)) <= 1e-12
    assert np.max(np.abs(res.eps0)) <= 1e-12
    fd = reconstruct(model_spectral_data(om, 8), x_grid=33, derivative="fd")
    assert np.max(np.abs(fd.eps)) <= 1e-12


def test_reconstruct_analytic_vs_fd(scalar):
    p, d = scalar
    a = reconstruct(d, N_trunc=20, x_grid=257)
    f = reconstruct(d, N_trunc=20, x_grid=257, derivative="fd")
    inner = slice(8, -8)
    assert np.max(np.abs(a.eps[inner] - f.eps[inner])) <= 1e-3
    Qt = p.Q(a.x)[:, 0, 0]
    err_a = np.sqrt(np.trapezoid((a.Q[:, 0, 0] - Qt) ** 2, a.x))
    err_f = np.sqrt(np.trapezoid((f.Q[:, 0, 0] - Qt) ** 2, f.x))
    assert err_a <= err_f * 1.01
    assert "finite differences" in f.notes[0]


def test_reconstruct_hermitian_and_diagnostics(fleet):
    d = fleet.data("coupled", 20)
    res = reconstruct(d, N_trunc=10, x_grid=65)
    assert np.allclose(res.Q, np.conj(np.swapaxes(res.Q, 1, 2)))
    assert res.hermitian_defect <= 10 * max(1e-10, float(np.max(res.residuals))) + 1e-9
    assert np.all(res.residuals <= 1e-10)
    assert res.conditions.shape == (65,)
    assert res.N_trunc == 10


def test_reconstruct_off_grid_endpoints(scalar):
    _, d = scalar
    a = reconstruct(d, N_trunc=10, x_grid=np.linspace(0.1, 3.0, 5))
    b = reconstruct(d, N_trunc=10, x_grid=5)
    assert np.allclose(a.h, b.h, atol=1e-12) and np.allclose(a.H, b.H, atol=1e-12)


def test_reconstruct_errors(scalar):
    _, d = scalar
    with pytest.raises(ValidationError):
        reconstruct(d, N_trunc=41)
    with pytest.raises(ValueError):
        reconstruct(d, N_trunc=5, derivative="spline")


def test_reconstruct_threads_deterministic(scalar):
    _, d = scalar
    a = reconstruct(d, N_trunc=8, x_grid=17)
    b = reconstruct(d, N_trunc=8, x_grid=17, threads=3)
    assert np.array_equal(a.Q, b.Q)


def test_fd_derivative_order():
    x = np.linspace(0, 1, 101)
    f = x ** 4
    d = fd_derivative(f, x[1] - x[0])
    assert np.max(np.abs(d - 4 * x ** 3)) < 1e-10
