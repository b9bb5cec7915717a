import warnings

import numpy as np
import pytest

from msl import ClosedFormPotential, GridPotential, CallablePotential, OmegaClass, Problem, SpectralData
from msl.errors import DimensionError, ValidationError
from msl.inverse import model_spectral_data
from msl.potentials import Term


def test_term_integrals():
    assert abs(Term("cos", 1.0, 1.0).integral()) < 1e-15
    assert abs(Term("sin", 1.0, 1.0).integral() - 2.0) < 1e-15
    assert abs(Term("poly", 3.0, power=2).integral() - np.pi ** 3) < 1e-12
    assert abs(Term("cos", 2.0, 0.0).integral() - 2 * np.pi) < 1e-15


def test_term_rejects_bad_kind():
    with pytest.raises(ValidationError):
        Term("exp", 1.0)
    with pytest.raises(ValidationError):
        Term("poly", 1.0, power=-1)


def test_from_upper_is_hermitian():
    Q = ClosedFormPotential.from_upper(2, [(0, 1, Term("cos", 0.2 + 0.3j, 1.0))])
    v = Q(np.linspace(0, np.pi, 7))
    assert np.allclose(v, np.conj(np.swapaxes(v, -1, -2)))
    assert not Q.is_real


def test_non_hermitian_warns():
    with pytest.warns(UserWarning):
        ClosedFormPotential(2, [(0, 1, Term("poly", 1.0))])


def test_out_of_range_index():
    with pytest.raises(ValidationError):
        ClosedFormPotential(2, [(2, 0, Term("poly", 1.0))])


def test_grid_potential_matches_closed_form():
    x = np.linspace(0, np.pi, 513)
    G = GridPotential(np.cos(x))
    xs = np.linspace(0, np.pi, 101)
    assert np.max(np.abs(G(xs)[:, 0, 0] - np.cos(xs))) < 1e-9
    assert abs(G.integral()[0, 0]) < 1e-10


def test_grid_potential_shape_check():
    with pytest.raises(ValidationError):
        GridPotential(np.zeros((3, 1, 1)))


def test_callable_integral():
    Q = CallablePotential(lambda x: (x ** 2)[:, None, None], 1)
    assert abs(Q.integral()[0, 0] - np.pi ** 3 / 3) < 1e-12


def test_problem_omega():
    Q = ClosedFormPotential(1, [(0, 0, Term("poly", 1.0))])
    p = Problem(Q, [[0.1]], [[0.2]])
    assert abs(p.omega.omega_values[0] - (0.3 + np.pi / 2)) < 1e-14


def test_problem_dimension_mismatch():
    with pytest.raises(DimensionError):
        Problem(ClosedFormPotential.zero(2), np.zeros((1, 1)), np.zeros((2, 2)))


def test_problem_omega_none_when_not_diagonal():
    p = Problem(ClosedFormPotential.zero(2), np.array([[0.0, 1.0], [1.0, 0.0]]), np.zeros((2, 2)))
    assert p.omega is None


def test_spectral_data_groups_and_representatives():
    d = model_spectral_data(OmegaClass([0.0, np.pi / 2]), 3)
    groups = d.value_groups()
    assert [(0, 1), (1, 0)] in groups
    assert d.multiplicity[0, 1] == 2 and d.multiplicity[1, 0] == 2
    assert (1, 0) not in d.distinct_support
    assert np.all(d.alpha_prime[1, 0] == 0)
    assert np.allclose(d.alpha[0, 1], np.diag([2 / np.pi, 1 / np.pi]))


def test_spectral_data_alpha_groups():
    d = model_spectral_data(OmegaClass([0.0, 0.0, 1.0]), 4)
    ag = d.alpha_groups()
    assert ag.shape == (5, 2, 3, 3)
    assert np.allclose(ag[2, 0], 2 / np.pi * np.diag([1, 1, 0]))
    assert np.allclose(ag[2, 1], 2 / np.pi * np.diag([0, 0, 1]))


def test_spectral_data_shape_checks():
    om = OmegaClass([0.0, 0.0])
    with pytest.raises(DimensionError):
        SpectralData(om, np.zeros((3, 1)), np.zeros((3, 1, 1, 1)))
    with pytest.raises(DimensionError):
        SpectralData(om, np.zeros((3, 2)), np.zeros((3, 2, 2)))


def test_spectral_data_truncation_and_readonly():
    d = model_spectral_data(OmegaClass([0.0]), 10)
    t = d.truncated(4)
    assert t.N_max == 4 and np.array_equal(t.lam, d.lam[:5])
    with pytest.raises(ValueError):
        d.lam[0, 0] = 1.0
    with pytest.raises(ValidationError):
        d.truncated(11)


def test_hermitian_part_silent_for_hermitian():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        ClosedFormPotential.from_upper(2, [(0, 1, Term("sin", 1j, 1.0))])
