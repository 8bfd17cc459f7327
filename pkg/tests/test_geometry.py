"""Exact geometry, checked against independent finite-difference oracles."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geoflow import geometry
from geoflow.expr import RationalFunction, parse_rational
from geoflow.geometry import (
    ChartMetric,
    EmbeddedVariety,
    GeometryError,
    TangentPlane,
    curvature_embedded_point,
    sectional_curvature,
)

from conftest import BUNDLED_METRICS

FD = 1e-5


def rf(text, variables=("x", "y")):
    return parse_rational(text, variables)


def _rational_point(m, rng, lo=-1, hi=1):
    # strictly inside y > 0 for the half-plane, inside the disk for the disk model
    while True:
        pt = [Fraction(int(rng.integers(lo * 16, hi * 16 + 1)), 16) for _ in range(m.n)]
        if m.name == "halfplane":
            pt[1] = abs(pt[1]) + Fraction(1, 4)
        if m.name == "disk" and sum(c * c for c in pt) >= Fraction(3, 4):
            continue
        if m.in_domain(pt):
            return pt


def _random_plane(n, rng):
    while True:
        v = [Fraction(int(rng.integers(-4, 5))) for _ in range(n)]
        w = [Fraction(int(rng.integers(-4, 5))) for _ in range(n)]
        if np.linalg.matrix_rank(np.array([v, w], float)) == 2:
            return v, w


# oracles -------------------------------------------------------------------------

def koszul_oracle(m, x):
    """Christoffel symbols from central differences of the float metric."""
    x = np.asarray(x, float)
    n = m.n
    dg = np.zeros((n, n, n))  # dg[l, i, j] = d_l g_ij
    for l in range(n):
        e = np.zeros(n)
        e[l] = FD
        dg[l] = (m.metric_at(x + e) - m.metric_at(x - e)) / (2 * FD)
    ginv = np.linalg.inv(m.metric_at(x))
    G = np.zeros((n, n, n))
    for k in range(n):
        for i in range(n):
            for j in range(n):
                G[k, i, j] = 0.5 * sum(ginv[k, l] * (dg[i, j, l] + dg[j, i, l] - dg[l, i, j]) for l in range(n))
    return G


def conformal_oracle(lam, x, step=1e-4):
    """K = -(1/(2 lam)) * Laplacian(log lam) for g = lam (du^2 + dv^2)."""
    u, v = x
    f = lambda a, b: np.log(lam(a, b))
    lap = (f(u + step, v) + f(u - step, v) + f(u, v + step) + f(u, v - step) - 4 * f(u, v)) / step ** 2
    return -lap / (2 * lam(u, v))


def brioschi_oracle(m, x, h=1e-4):
    """Gauss curvature of a 2D metric from E, F, G and their derivatives (Brioschi)."""
    x = np.asarray(x, float)

    def efg(p):
        g = m.metric_at(p)
        return np.array([g[0, 0], g[0, 1], g[1, 1]])

    e1, e2 = np.array([h, 0.0]), np.array([0.0, h])
    d_u = (efg(x + e1) - efg(x - e1)) / (2 * h)
    d_v = (efg(x + e2) - efg(x - e2)) / (2 * h)
    d_uu = (efg(x + e1) - 2 * efg(x) + efg(x - e1)) / h ** 2
    d_vv = (efg(x + e2) - 2 * efg(x) + efg(x - e2)) / h ** 2
    d_uv = (efg(x + e1 + e2) - efg(x + e1 - e2) - efg(x - e1 + e2) + efg(x - e1 - e2)) / (4 * h * h)
    E, F, G = efg(x)
    Eu, Fu, Gu = d_u
    Ev, Fv, Gv = d_v
    M1 = np.array([
        [-d_vv[0] / 2 + d_uv[1] - d_uu[2] / 2, Eu / 2, Fu - Ev / 2],
        [Fv - Gu / 2, E, F],
        [Gv / 2, F, G],
    ])
    M2 = np.array([[0, Ev / 2, Gu / 2], [Ev / 2, E, F], [Gu / 2, F, G]])
    return (np.linalg.det(M1) - np.linalg.det(M2)) / (E * G - F * F) ** 2


def projector_oracle(V, x, v, w):
    """Embedded K from central differences (step 1e-5) of the tangent projector."""
    x, v, w = (np.asarray(a, float) for a in (x, v, w))

    def dP(direction):
        return (V.tangent_projector(V.project(x + FD * direction))
                - V.tangent_projector(V.project(x - FD * direction))) / (2 * FD)

    N = np.eye(V.m) - V.tangent_projector(x)
    II = lambda a, b: N @ (dP(a) @ b)
    A = V.A
    gram = (v @ A @ v) * (w @ A @ w) - (v @ A @ w) ** 2
    return (II(v, v) @ A @ II(w, w) - II(v, w) @ A @ II(v, w)) / gram


# inverse metric ------------------------------------------------------------------

def test_inverse_of_identity():
    inv = geometry.inverse_metric(geometry.euclidean(2))
    assert [[e.constant_value() for e in row] for row in inv] == [[1, 0], [0, 1]]


def test_inverse_half_plane():
    inv = geometry.inverse_metric(geometry.half_plane())
    assert inv[0][0].equals(rf("y^2")) and inv[1][1].equals(rf("y^2"))
    assert inv[0][1].is_zero() and inv[1][0].is_zero()


def test_inverse_mixed_metric():
    inv = geometry.inverse_metric(geometry.mixed_metric())
    expected = [["1 + x^2", "-1*x"], ["-1*x", "1"]]
    for i in range(2):
        for j in range(2):
            assert inv[i][j].equals(rf(expected[i][j]))


def test_metric_times_inverse_is_identity(bundled_metric):
    m = bundled_metric
    inv = m.inverse
    for i in range(m.n):
        for j in range(m.n):
            s = sum((m.g[i][k] * inv[k][j] for k in range(m.n)), RationalFunction.constant(m.variables, 0))
            assert s.equals(RationalFunction.constant(m.variables, int(i == j)))


# Christoffel symbols ---------------------------------------------------------------

def test_euclidean_christoffel_vanish():
    G = geometry.euclidean(3).christoffel
    assert all(G[k, i, j].is_zero() for k in range(3) for i in range(3) for j in range(3))


def test_half_plane_christoffel_values():
    G = geometry.half_plane().christoffel
    x, y = 0, 1
    assert G[x, x, y].equals(rf("-1/y"))
    assert G[y, x, x].equals(rf("1/y"))
    assert G[y, y, y].equals(rf("-1/y"))
    assert G[x, x, x].is_zero() and G[y, x, y].is_zero() and G[x, y, y].is_zero()


def test_sphere_christoffel_value():
    G = geometry.stereographic_sphere(1).christoffel
    assert G[0, 0, 0].equals(parse_rational("-2*u/(1 + u^2 + v^2)", ("u", "v")))


@pytest.mark.parametrize("name", sorted(BUNDLED_METRICS))
def test_christoffel_matches_koszul_oracle(name, rng):
    m = BUNDLED_METRICS[name]()
    for _ in range(5):
        x = [float(c) for c in _rational_point(m, rng)]
        exact = np.array([[[float(m.christoffel[k, i, j].evaluate_float(x)) for j in range(m.n)]
                           for i in range(m.n)] for k in range(m.n)])
        assert np.max(np.abs(exact - koszul_oracle(m, x))) < 1e-6


# curvature ----------------------------------------------------------------------------

def test_euclidean_curvature_vanishes():
    R = geometry.euclidean(2).curvature
    assert all(R[l, i, j, k].is_zero() for l in range(2) for i in range(2) for j in range(2) for k in range(2))


def test_half_plane_lowered_curvature_gives_minus_one():
    m = geometry.half_plane()
    L = geometry.lowered_curvature(m, m.curvature)
    # R_xyyx / det g is the Gauss curvature in our convention
    assert (L[0][1][1][0] / m.det).equals(RationalFunction.constant(m.variables, -1))


def test_curvature_antisymmetry(bundled_metric):
    m = bundled_metric
    R = m.curvature
    n = m.n
    assert all((R[l, i, j, k] + R[l, j, i, k]).is_zero()
               for l in range(n) for i in range(n) for j in range(n) for k in range(n))


@pytest.mark.parametrize("m, point, expected", [
    (geometry.euclidean(2), (Fraction(1, 3), Fraction(2)), Fraction(0)),
    (geometry.half_plane(), (Fraction(0), Fraction(1)), Fraction(-1)),
    (geometry.stereographic_sphere(2), (Fraction(0), Fraction(0)), Fraction(1, 4)),
])
def test_sectional_curvature_examples(m, point, expected):
    K = sectional_curvature(m, None, TangentPlane(point, (1, 0), (0, 1)))
    assert isinstance(K, Fraction)
    assert K == expected


CONFORMAL = {
    "halfplane": (geometry.half_plane, lambda u, v: 1 / v ** 2, -1),
    "disk": (geometry.poincare_disk, lambda u, v: 4 / (1 - u * u - v * v) ** 2, -1),
    "sphere_r1": (lambda: geometry.stereographic_sphere(1), lambda u, v: 4 / (1 + u * u + v * v) ** 2, 1),
    "sphere_r2": (lambda: geometry.stereographic_sphere(2), lambda u, v: 64 / (4 + u * u + v * v) ** 2, Fraction(1, 4)),
}


@pytest.mark.parametrize("name", sorted(CONFORMAL))
def test_sectional_curvature_matches_conformal_oracle(name, rng):
    ctor, lam, expected = CONFORMAL[name]
    m = ctor()
    for _ in range(10):
        pt = _rational_point(m, rng)
        v, w = _random_plane(2, rng)
        K = sectional_curvature(m, None, TangentPlane(tuple(pt), tuple(v), tuple(w)))
        assert K == expected
        assert abs(float(K) - conformal_oracle(lam, [float(c) for c in pt])) < 1e-6


def test_mixed_metric_matches_brioschi(rng):
    m = geometry.mixed_metric()
    for _ in range(10):
        pt = _rational_point(m, rng)
        K = sectional_curvature(m, None, TangentPlane(tuple(pt), (1, 0), (0, 1)))
        assert abs(float(K) - brioschi_oracle(m, [float(c) for c in pt])) < 1e-5


def test_float_point_gives_float():
    K = sectional_curvature(geometry.half_plane(), None, TangentPlane((0.3, 1.7), (1.0, 0.2), (0.0, 1.0)))
    assert isinstance(K, float) and K == pytest.approx(-1, abs=1e-12)


def test_isotropic_plane_rejected():
    with pytest.raises(GeometryError, match="isotropic"):
        sectional_curvature(geometry.half_plane(), None, TangentPlane((0, 1), (1, 2), (2, 4)))


def test_point_outside_chart_rejected():
    with pytest.raises(GeometryError):
        sectional_curvature(geometry.half_plane(), None, TangentPlane((0, 0), (1, 0), (0, 1)))


def test_indefinite_metric_isotropic_plane():
    # Lorentzian form: the plane spanned by two null vectors is fine, a degenerate one is not
    m = ChartMetric(("t", "x"), [[-1, 0], [0, 1]])
    assert sectional_curvature(m, None, TangentPlane((0, 0), (1, 1), (1, -1))) == 0


# identity suites -----------------------------------------------------------------------

def test_connection_identities_hold(bundled_metric):
    assert all(geometry.verify_connection_identities(bundled_metric).values())


def test_curvature_symmetries_hold(bundled_metric):
    assert all(geometry.verify_curvature_symmetries(bundled_metric).values())


def test_corrupted_connection_fails():
    m = geometry.half_plane()
    bad = m.christoffel.replace(0, 0, 1, m.christoffel[0, 0, 1] + 1)
    report = geometry.verify_connection_identities(m, bad)
    assert report["metric_compatible"] is False
    assert report["torsion_free"] is False


# chart validation -------------------------------------------------------------------------

def test_asymmetric_metric_names_entries():
    with pytest.raises(GeometryError) as info:
        ChartMetric(("x", "y"), [[1, "x"], [0, 1]])
    assert "g[0][1]" in str(info.value) and "g[1][0]" in str(info.value)


def test_degenerate_metric_rejected():
    with pytest.raises(GeometryError):
        ChartMetric(("x", "y"), [[1, 1], [1, 1]])


def test_guard_covers_denominators():
    assert geometry.half_plane().guard_value([0.0, 0.0]) == 0
    assert not geometry.half_plane().in_domain([Fraction(1), Fraction(0)])
    assert geometry.poincare_disk().in_domain([Fraction(1, 2), Fraction(0)])
    assert not geometry.poincare_disk().in_domain([Fraction(3, 5), Fraction(4, 5)])


# embedded varieties --------------------------------------------------------------------------

def test_embedded_sphere_at_pole():
    K = curvature_embedded_point(geometry.unit_sphere_embedded(), [0, 0, 1], [1, 0, 0], [0, 1, 0])
    assert K == pytest.approx(1.0, abs=1e-8)


def test_embedded_graph_saddle():
    V = EmbeddedVariety(["z - x*y"], variables=("x", "y", "z"))
    assert curvature_embedded_point(V, [0, 0, 0], [1, 0, 0], [0, 1, 0]) == pytest.approx(-1.0, abs=1e-6)


def test_embedded_plane_is_flat():
    V = EmbeddedVariety(["z"], variables=("x", "y", "z"))
    assert curvature_embedded_point(V, [0.3, -2, 0], [1, 1, 0], [0, 1, 0]) == pytest.approx(0.0, abs=1e-12)


def test_embedded_graph_monge_oracle(rng):
    V = EmbeddedVariety(["z - x*y"], variables=("x", "y", "z"))
    for _ in range(10):
        x, y = rng.uniform(-1, 1, size=2)
        p = np.array([x, y, x * y])
        P = V.tangent_projector(p)
        v, w = P @ rng.normal(size=3), P @ rng.normal(size=3)
        monge = -1.0 / (1 + y * y + x * x) ** 2
        assert curvature_embedded_point(V, p, v, w) == pytest.approx(monge, abs=1e-9)


@pytest.mark.parametrize("constraints, point", [
    (["x^2 + y^2 + z^2 - 1"], None),
    (["z - x*y"], None),
    (["x^2 + y^2 + z^2 - 4", "z - 1"], None),
])
def test_embedded_curvature_matches_projector_oracle(constraints, point, rng):
    V = EmbeddedVariety(constraints, variables=("x", "y", "z"))
    if V.dimension < 2:
        p = V.project(np.array([1.0, 0.5, 1.0]))
        assert V.tangent_projector(p).trace() == pytest.approx(V.dimension)
        return
    for _ in range(5):
        p = V.project(rng.normal(size=3))
        P = V.tangent_projector(p)
        v, w = P @ rng.normal(size=3), P @ rng.normal(size=3)
        assert curvature_embedded_point(V, p, v, w) == pytest.approx(projector_oracle(V, p, v, w), abs=1e-6)


def test_embedded_with_ambient_form():
    # scaling the ambient form by 4 scales the metric by 4 and K by 1/4
    V = EmbeddedVariety(["x^2 + y^2 + z^2 - 1"], variables=("x", "y", "z"),
                        ambient_form=[[4, 0, 0], [0, 4, 0], [0, 0, 4]])
    assert curvature_embedded_point(V, [0, 0, 1], [1, 0, 0], [0, 1, 0]) == pytest.approx(0.25, abs=1e-10)


def test_chart_and_embedded_sphere_agree(rng):
    chart = geometry.stereographic_sphere(1)
    V = geometry.unit_sphere_embedded()
    for _ in range(20):
        pt = _rational_point(chart, rng, -2, 2)
        u, v = (float(c) for c in pt)
        x = geometry.sphere_from_stereographic(u, v)
        # push the chart plane forward through the map by central differences
        J = np.stack([(geometry.sphere_from_stereographic(u + FD, v) - geometry.sphere_from_stereographic(u - FD, v)) / (2 * FD),
                      (geometry.sphere_from_stereographic(u, v + FD) - geometry.sphere_from_stereographic(u, v - FD)) / (2 * FD)], 1)
        a, b = _random_plane(2, rng)
        Kc = sectional_curvature(chart, None, TangentPlane(tuple(pt), tuple(a), tuple(b)))
        Ke = curvature_embedded_point(V, x, J @ np.array(a, float), J @ np.array(b, float), tol=1e-6)
        assert abs(float(Kc) - Ke) < 1e-6


def test_off_variety_point_rejected():
    with pytest.raises(GeometryError):
        curvature_embedded_point(geometry.unit_sphere_embedded(), [0, 0, 1.1], [1, 0, 0], [0, 1, 0])


def test_non_tangent_vector_rejected():
    with pytest.raises(GeometryError):
        curvature_embedded_point(geometry.unit_sphere_embedded(), [0, 0, 1], [0, 0, 1], [0, 1, 0])


def test_singular_point_rejected():
    cone = EmbeddedVariety(["x^2 + y^2 - z^2"], variables=("x", "y", "z"))
    with pytest.raises(GeometryError, match="singular"):
        curvature_embedded_point(cone, [0, 0, 0], [1, 0, 0], [0, 1, 0])


# basis invariance -------------------------------------------------------------------------

small = st.integers(-4, 4)


@given(name=st.sampled_from(["halfplane", "sphere_r1", "mixed", "disk"]),
       px=st.fractions(-1, 1, max_denominator=8), py=st.fractions(Fraction(1, 8), Fraction(3, 4), max_denominator=8),
       v=st.tuples(small, small), w=st.tuples(small, small), A=st.tuples(small, small, small, small))
def test_basis_invariance_exact(name, px, py, v, w, A):
    m = BUNDLED_METRICS[name]()
    a, b, c, d = A
    if a * d - b * c == 0 or v[0] * w[1] - v[1] * w[0] == 0:
        return
    pt = (px, py)
    if not m.in_domain(list(pt)):
        return
    v2 = (a * v[0] + b * w[0], a * v[1] + b * w[1])
    w2 = (c * v[0] + d * w[0], c * v[1] + d * w[1])
    K1 = sectional_curvature(m, None, TangentPlane(pt, v, w))
    K2 = sectional_curvature(m, None, TangentPlane(pt, v2, w2))
    assert K1 == K2
