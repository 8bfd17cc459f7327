from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geoflow import geometry, symplectic
from geoflow.expr import RationalFunction, parse_rational
from geoflow.symplectic import (
    canonical_structure,
    exterior_derivative,
    fiber_rescaling,
    geodesic_hamiltonian,
    hamiltonian_vector_field,
    is_fiber_homogeneous,
    sphere_bundle_constraint,
)

from conftest import BUNDLED_METRICS

HP = ("x", "y", "p_x", "p_y")


def rf(text, variables=HP):
    return parse_rational(text, variables)


def test_canonical_structure_n1():
    theta, omega = canonical_structure(1, ["x"])
    assert theta.coeffs[0].equals(parse_rational("p_x", ["x", "p_x"]))
    assert theta.coeffs[1].is_zero()
    M = [[e.constant_value() for e in row] for row in omega.matrix]
    assert M == [[0, -1], [1, 0]]


def test_canonical_structure_rank_and_exactness():
    for n in (1, 2, 3):
        theta, omega = canonical_structure(n)
        assert omega.is_antisymmetric()
        assert omega.rank_at([0.3] * (2 * n)) == 2 * n
        d = exterior_derivative(theta)
        assert all(a.equals(b) for ra, rb in zip(d.matrix, omega.matrix) for a, b in zip(ra, rb))


def test_canonical_structure_rejects_n0():
    with pytest.raises(ValueError):
        canonical_structure(0)


def test_harmonic_oscillator_field():
    V = ("x", "p_x")
    sys = hamiltonian_vector_field(parse_rational("(p_x^2 + x^2)/2", V), 1)
    assert sys.field[0].equals(parse_rational("p_x", V))
    assert sys.field[1].equals(parse_rational("-1*x", V))
    assert sys.conserves()


def test_half_plane_field_and_paper_convention():
    sys = geodesic_hamiltonian(geometry.half_plane())
    assert sys.H.equals(rf("y^2*(p_x^2 + p_y^2)/2"))
    expected = ["y^2*p_x", "y^2*p_y", "0", "0 - y*(p_x^2 + p_y^2)"]
    for X, e in zip(sys.field, expected):
        assert X.equals(rf(e))
    negated = sys.with_convention("paper")
    assert all(a.equals(-b) for a, b in zip(negated.field, sys.field))
    assert negated.conserves()


def test_variable_count_mismatch():
    with pytest.raises(ValueError):
        hamiltonian_vector_field(parse_rational("p_x^2 + p_y^2", ("x", "y", "p_x", "p_y")), 3)


def test_unknown_convention():
    with pytest.raises(ValueError):
        geodesic_hamiltonian(geometry.euclidean(2), convention="sideways")


def test_geodesic_hamiltonian_examples():
    E = geodesic_hamiltonian(geometry.euclidean(2))
    assert E.H.equals(rf("(p_x^2 + p_y^2)/2"))
    Ev = geodesic_hamiltonian(geometry.euclidean(2), "x^2/2")
    assert Ev.H.equals(rf("(p_x^2 + p_y^2)/2 + x^2/2"))
    assert Ev.conserves()


def test_potential_must_be_configuration_only():
    with pytest.raises(ValueError):
        geodesic_hamiltonian(geometry.euclidean(2), RationalFunction.variable(HP, "p_x"))


def test_conservation_every_bundled_metric(bundled_metric):
    sys = geodesic_hamiltonian(bundled_metric)
    assert sys.conserves()
    assert sys.conserves(sphere_bundle_constraint(bundled_metric))
    assert is_fiber_homogeneous(sys, 2)
    with_potential = geodesic_hamiltonian(bundled_metric, bundled_metric.variables[0] + "^2")
    assert with_potential.conserves()


@pytest.mark.parametrize("b", [2, 3, Fraction(1, 2), -1, 1])
def test_fiber_rescaling_report(bundled_metric, b):
    psi, rep = fiber_rescaling(geodesic_hamiltonian(bundled_metric), b)
    assert rep["energy_scaling"] and rep["field_conjugacy"]
    z = np.arange(1, 2 * bundled_metric.n + 1, dtype=float)
    assert np.allclose(psi(z)[bundled_metric.n:], float(b) * z[bundled_metric.n:])


def test_half_plane_rescaling_by_two():
    sys = geodesic_hamiltonian(geometry.half_plane())
    subs = {p: RationalFunction.variable(HP, p) * 2 for p in ("p_x", "p_y")}
    assert sys.H.substitute(subs).equals(sys.H * 4)


def test_rescaling_rejects_zero_and_potential():
    sys = geodesic_hamiltonian(geometry.half_plane())
    with pytest.raises(ValueError):
        fiber_rescaling(sys, 0)
    with pytest.raises(ValueError, match="homogeneous"):
        fiber_rescaling(geodesic_hamiltonian(geometry.half_plane(), "y"), 2)


def test_sphere_bundle_constraint_examples():
    assert sphere_bundle_constraint(geometry.euclidean(2)).equals(rf("p_x^2 + p_y^2 - 1"))
    assert sphere_bundle_constraint(geometry.half_plane()).equals(rf("y^2*(p_x^2 + p_y^2) - 1"))


def test_second_order_field():
    V, field = symplectic.second_order_geodesic_field(geometry.half_plane())
    assert V == ("x", "y", "v_x", "v_y")
    assert field[0].equals(parse_rational("v_x", V))
    assert field[1].equals(parse_rational("v_y", V))
    assert field[2].equals(parse_rational("2*v_x*v_y/y", V))
    assert field[3].equals(parse_rational("(v_y^2 - v_x^2)/y", V))
    V, field = symplectic.second_order_geodesic_field(geometry.euclidean(2))
    assert all(f.is_zero() for f in field[2:])


def test_legendre_consistency(bundled_metric):
    assert symplectic.legendre_consistency(bundled_metric)


unimodular = st.sampled_from([
    [[1, 0], [0, 1]], [[2, 1], [1, 1]], [[0, 1], [1, 0]], [[1, 3], [0, 1]], [[1, 0], [-2, 1]],
    [[3, 2], [1, 1]], [[-1, 0], [0, 1]], [[2, 3], [1, 2]],
])


@given(A=unimodular, name=st.sampled_from(["euclidean2", "halfplane"]))
def test_coordinate_naturality(A, name):
    assert symplectic.coordinate_naturality_check(BUNDLED_METRICS[name](), A)


def test_system_to_model_roundtrip_text():
    sys = geodesic_hamiltonian(geometry.half_plane())
    model = symplectic.system_to_model(sys)
    assert model["kind"] == "chart"
    assert model["hamiltonian"] == {"potential": None, "convention": "mechanics"}
    g = [[parse_rational(t, model["variables"]) for t in row] for row in model["metric"]]
    assert all(a.equals(b) for ra, rb in zip(g, sys.metric.g) for a, b in zip(ra, rb))


def test_numeric_evaluators_vectorize():
    sys = geodesic_hamiltonian(geometry.half_plane())
    Z = np.array([[0.0, 1.0], [1.0, 2.0], [1.0, 0.0], [0.0, 1.0]])
    X = sys.vector_field(Z)
    assert X.shape == (4, 2)
    assert np.allclose(X[:, 0], sys.vector_field(Z[:, 0]))
    assert sys.energy(Z[:, 1]) == pytest.approx(0.5 * 4 * 1)
