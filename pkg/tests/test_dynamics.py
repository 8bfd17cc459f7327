import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from geoflow import geometry
from geoflow.dynamics import (
    ASSUMED_HYPOTHESES,
    EVIDENCE_LABEL,
    ChartFlow,
    EmbeddedFlow,
    SpectrumSample,
    arithmeticity_test,
    correlation_decay,
    lattice_direction_seeds,
    lyapunov_spectrum,
    mixing_report,
    periodic_orbit_search,
    random_unit_seeds,
    recurrence_statistics,
    refine_periodic_orbit,
    stable_set_probe,
)
from geoflow.integrate import IntegratorConfig
from geoflow.symplectic import geodesic_hamiltonian


def torus_seed(direction, x=(0.1, 0.2)):
    w = np.array(direction, float)
    return np.concatenate([x, w / np.linalg.norm(w)])


def samples(periods, unc=1e-9):
    return SpectrumSample(list(periods), [unc] * len(periods))


# Lyapunov ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def half_plane_spectrum():
    sys = geodesic_hamiltonian(geometry.half_plane())
    # the vertical geodesic stays in the chart for all time; oblique ones
    # reach y < 1e-12 near t = 30 and exit
    return lyapunov_spectrum(sys, [0.0, 1.0, 0.0, 1.0], IntegratorConfig(h=1e-3), 50.0)


def test_half_plane_exponents(half_plane_spectrum):
    est = half_plane_spectrum
    assert len(est.exponents) == 4
    assert est.exponents == sorted(est.exponents, reverse=True)
    for got, want in zip(est.exponents, (1, 0, 0, -1)):
        assert abs(got - want) < 0.05
    assert abs(sum(est.exponents)) < 0.02
    assert est.pairing_defect() < 0.02
    assert abs(est.flow_exponent) < 0.02
    assert est.flow_index in (1, 2)
    assert est.classify() == "numerically uniformly hyperbolic"
    assert not est.partial


def test_torus_exponents_vanish():
    sys = geodesic_hamiltonian(geometry.flat_torus())
    est = lyapunov_spectrum(sys, torus_seed((1, 2)), IntegratorConfig(h=1e-2), 50.0)
    assert max(abs(v) for v in est.exponents) < 1e-3
    assert est.classify() == "no hyperbolic splitting detected"


def test_sphere_chart_exponents_vanish():
    m = geometry.stereographic_sphere(1)
    sys = geodesic_hamiltonian(m)
    z0 = random_unit_seeds(sys, 1, np.random.default_rng(3))[0]
    est = lyapunov_spectrum(sys, z0, IntegratorConfig(h=1e-3), 50.0)
    assert max(abs(v) for v in est.exponents) < 0.1
    assert abs(sum(est.exponents)) < 0.02
    assert est.pairing_defect() < 0.02


def test_lyapunov_partial_on_guard_exit():
    # an oblique half-plane geodesic falls toward y = 0 and leaves the chart
    sys = geodesic_hamiltonian(geometry.half_plane())
    est = lyapunov_spectrum(sys, [0.0, 1.0, 1.0, 0.0], IntegratorConfig(h=1e-2), 50.0)
    assert est.partial and est.reason == "guard-exit"
    assert est.horizon < 50.0


# recurrence ----------------------------------------------------------------------

def test_torus_recurrence_fraction(rng):
    sys = geodesic_hamiltonian(geometry.flat_torus())
    seeds = random_unit_seeds(sys, 100, rng)
    rec = recurrence_statistics(sys, seeds, 0.05, 1.0, 200.0)
    assert rec.fraction == 1.0
    assert all(t is not None and 1.0 <= t <= 200.0 for t in rec.first_returns)


def test_plane_never_recurs(rng):
    sys = geodesic_hamiltonian(geometry.euclidean(2))
    seeds = random_unit_seeds(sys, 20, rng)
    rec = recurrence_statistics(sys, seeds, 0.05, 1.0, 200.0)
    assert rec.fraction == 0.0
    assert rec.first_returns == [None] * 20


def test_diagonal_first_return():
    sys = geodesic_hamiltonian(geometry.flat_torus())
    rec = recurrence_statistics(sys, [torus_seed((1, 1))], 0.05, 1.0, 5.0)
    h = 1e-2
    assert abs(rec.first_returns[0] - math.sqrt(2)) <= 0.05 + h
    assert abs(rec.closest_returns[0] - math.sqrt(2)) <= h


def test_recurrence_quotient_distance():
    flow = ChartFlow(geodesic_hamiltonian(geometry.flat_torus()), IntegratorConfig())
    assert flow.distance([0.99, 0.0, 0, 0], [0.01, 0.0, 0, 0]) == pytest.approx(0.02)


def test_recurrence_validation():
    sys = geodesic_hamiltonian(geometry.flat_torus())
    with pytest.raises(ValueError):
        recurrence_statistics(sys, [torus_seed((1, 0))], 0.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        recurrence_statistics(sys, [torus_seed((1, 0))], 0.1, 2.0, 1.0)


# periodic orbits -----------------------------------------------------------------

def test_sphere_period_from_any_seed(rng):
    V = geometry.unit_sphere_embedded()
    x = rng.normal(size=3)
    x /= np.linalg.norm(x)
    v = np.cross(x, rng.normal(size=3))
    v /= np.linalg.norm(v)
    cfg = IntegratorConfig(method="constrained-projection", h=1e-3)
    S = periodic_orbit_search(EmbeddedFlow(V, cfg), [np.concatenate([x, v])], cfg, T_search=8.0)
    assert len(S) == 1
    assert abs(S.periods[0] - 2 * math.pi) < 1e-4


def test_torus_periods():
    sys = geodesic_hamiltonian(geometry.flat_torus())
    cfg = IntegratorConfig(h=1e-2)
    S = periodic_orbit_search(sys, [torus_seed((1, 1)), torus_seed((1, 2))], cfg)
    assert sorted(S.periods) == pytest.approx([math.sqrt(2), math.sqrt(5)], abs=1e-4)


def test_plane_has_no_periodic_orbits(rng):
    sys = geodesic_hamiltonian(geometry.euclidean(2))
    S = periodic_orbit_search(sys, random_unit_seeds(sys, 3, rng), IntegratorConfig(h=1e-2))
    assert len(S) == 0


def test_refined_orbit_closes_at_half_step():
    sys = geodesic_hamiltonian(geometry.flat_torus())
    flow = ChartFlow(sys, IntegratorConfig(h=1e-2))
    # start slightly off the closed direction; Newton has to correct it
    orb = refine_periodic_orbit(flow, torus_seed((1, 2.01)), math.sqrt(5), refine_tol=1e-8)
    assert orb is not None
    assert orb.closure <= 1e-8
    assert orb.closure_half_step <= 10 * 1e-8
    # all slope-2 orbits close; at speed |p| the period is sqrt(5) / |p|
    speed = float(np.hypot(orb.point[2], orb.point[3]))
    assert orb.period == pytest.approx(math.sqrt(5) / speed, abs=1e-6)


def test_duplicate_periods_merged():
    sys = geodesic_hamiltonian(geometry.flat_torus())
    S = periodic_orbit_search(sys, [torus_seed((1, 1)), torus_seed((1, 1), x=(0.4, 0.3))], IntegratorConfig(h=1e-2))
    assert len(S) == 1


def test_lattice_seeds():
    sys = geodesic_hamiltonian(geometry.flat_torus())
    seeds = lattice_direction_seeds(sys, 6)
    p = seeds[:, 2:]
    assert np.linalg.norm(p, axis=1) == pytest.approx(np.ones(6))
    # primitive directions shortest first: the axes, the diagonals, then slope 2
    ratios = sorted(round(float(max(abs(q)) / min(abs(q))), 9) if min(abs(q)) > 0 else math.inf for q in p)
    assert ratios == [1.0, 1.0, 2.0, 2.0, math.inf, math.inf]
    with pytest.raises(ValueError):
        lattice_direction_seeds(geodesic_hamiltonian(geometry.euclidean(2)), 2)


# arithmeticity ------------------------------------------------------------------

def test_arithmetic_examples():
    v = arithmeticity_test(samples([2, 4, 6]), tolerance=1e-6)
    assert v.verdict == "Arithmetic" and v.a == pytest.approx(2)
    assert str(v) == "Arithmetic(2)"
    v = arithmeticity_test(samples([3]), tolerance=1e-6)
    assert v.verdict == "Arithmetic" and v.a == pytest.approx(3)


def test_non_arithmetic_sqrt2():
    v = arithmeticity_test(samples([1, math.sqrt(2)]), tolerance=1e-6)
    assert v.verdict == "NonArithmetic"
    assert v.report["euclid_steps"] <= 40


def test_log2_log3_non_arithmetic():
    assert arithmeticity_test(samples([math.log(2), math.log(3)])).verdict == "NonArithmetic"


def test_noise_comparable_to_tolerance_never_non_arithmetic():
    v = arithmeticity_test(samples([1, math.sqrt(2)], unc=1e-6), tolerance=1e-6)
    assert v.verdict != "NonArithmetic"


def test_empty_sample_rejected():
    with pytest.raises(ValueError):
        arithmeticity_test(SpectrumSample())


def test_spectrum_sample_validation():
    with pytest.raises(ValueError):
        SpectrumSample([1.0, -2.0], [1e-9, 1e-9])
    with pytest.raises(ValueError):
        SpectrumSample([1.0], [0.0])
    with pytest.raises(ValueError):
        SpectrumSample([1.0], [1e-9, 1e-9])


@given(a=st.floats(0.1, 10), ks=st.lists(st.integers(1, 50), min_size=1, max_size=5), extra=st.integers(1, 50))
def test_monotone_under_exact_multiples(a, ks, extra):
    base = samples([k * a for k in ks] + [a])
    before = arithmeticity_test(base)
    assert before.verdict == "Arithmetic"
    after = arithmeticity_test(samples(base.periods + [extra * before.a]))
    assert after.verdict != "NonArithmetic"


@given(s=st.sampled_from([0.5, 3.0]) | st.floats(0.2, 5))
def test_scale_covariance(s):
    for periods, want in (([2, 4, 6], "Arithmetic"), ([3], "Arithmetic"), ([1, math.sqrt(2)], "NonArithmetic")):
        v = arithmeticity_test(samples(periods), tolerance=1e-6)
        w = arithmeticity_test(samples(periods).scaled(s), tolerance=1e-6 * s)
        assert v.verdict == w.verdict == want
        if want == "Arithmetic":
            assert w.a == pytest.approx(s * v.a, rel=1e-9)


# stable sets and correlations ------------------------------------------------------

def test_stable_set_probe():
    sys = geodesic_hamiltonian(geometry.half_plane())
    flow = ChartFlow(sys, IntegratorConfig(h=1e-2))
    p = [0.0, 1.0, 0.0, 1.0]
    inside, d = stable_set_probe(flow, p, p, 1e-9, 5.0)
    assert inside and d == 0.0
    # vertical geodesics through nearby feet stay a fixed chart distance apart
    inside, d = stable_set_probe(flow, p, [0.01, 1.0, 0.0, 1.0], 0.02, 5.0)
    assert inside and d == pytest.approx(0.01, abs=1e-12)
    inside, _ = stable_set_probe(flow, p, [0.0, 1.0, 0.0, -1.0], 0.1, 5.0)
    assert not inside


def test_torus_correlation_quasi_periodic():
    # f = g = cos(2 pi x) along slope-2 motion with speed component c along x:
    # C(t) = |cos(2 pi c t)| / 2, the explicit quasi-periodic oracle
    sys = geodesic_hamiltonian(geometry.flat_torus())
    flow = ChartFlow(sys, IntegratorConfig(h=1e-2))
    z0 = torus_seed((1, math.sqrt(2)))
    c = z0[2]
    f = lambda z: math.cos(2 * math.pi * z[0])
    lags = [0.0, 1.0, 2.5, 7.0]
    corr = correlation_decay(flow, z0, f, f, 200.0, lags)
    for (t, got), lag in zip(corr, lags):
        assert got == pytest.approx(0.5 * abs(math.cos(2 * math.pi * c * lag)), abs=5e-3)


# mixing report ------------------------------------------------------------------------

@pytest.mark.slow
def test_mixing_report_torus_negative_control():
    sys = geodesic_hamiltonian(geometry.flat_torus())
    rep = mixing_report(sys, IntegratorConfig(h=1e-2), seed=7, spectrum_seeds=lattice_direction_seeds(sys, 6),
                        n_seeds=100, lyapunov_horizon=20.0)
    assert rep["label"] == EVIDENCE_LABEL
    assert rep["assumed_hypotheses"] == list(ASSUMED_HYPOTHESES)
    assert rep["recurrence"]["fraction"] == 1.0
    periods = sorted(p["period"] for p in rep["spectrum"])
    assert periods == pytest.approx([1.0, math.sqrt(2), math.sqrt(5)], abs=1e-4)
    assert rep["verdict"]["verdict"] == "NonArithmetic"
    assert rep["correlation_non_decaying"]
    assert rep["hypotheses"]["hyperbolic_splitting"] is False
    assert rep["hypotheses"]["local_product_structure"] == "assumed, not checked"
    assert rep["hypotheses_met"] is False
    assert any("hypotheses" in line for line in rep["summary"])


def test_mixing_report_half_plane_non_compact():
    sys = geodesic_hamiltonian(geometry.half_plane())
    rep = mixing_report(sys, IntegratorConfig(h=1e-2), lyapunov_point=[0.0, 1.0, 0.0, 1.0], lyapunov_horizon=10.0)
    assert rep["compact"] is False
    assert rep["recurrence"] == {"skipped": "non-compact model"}
    assert "correlation" not in rep
    assert rep["hypotheses"]["hyperbolic_splitting"] is True
    assert rep["criterion_applicable"] is False


def test_mixing_report_synthetic_spectrum():
    rep = mixing_report(spectrum=samples([math.log(2), math.log(3)]))
    assert rep["verdict"]["verdict"] == "NonArithmetic"
    assert rep["label"] == EVIDENCE_LABEL


def test_mixing_report_empty_spectrum_inconclusive():
    rep = mixing_report(spectrum=SpectrumSample())
    assert rep["verdict"]["verdict"] == "Inconclusive"


def test_mixing_report_deterministic():
    sys = geodesic_hamiltonian(geometry.flat_torus())
    kw = dict(seed=11, n_seeds=5, T_recurrence=20.0, lyapunov_horizon=2.0, correlation_horizon=20.0,
              correlation_lags=[0.0, 1.0], do_spectrum=False)
    assert mixing_report(sys, IntegratorConfig(h=1e-2), **kw) == mixing_report(sys, IntegratorConfig(h=1e-2), **kw)
