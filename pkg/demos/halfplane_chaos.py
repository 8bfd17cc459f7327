"""Geodesic flow on the hyperbolic half-plane: curvature, a geodesic and its Lyapunov spectrum."""

from fractions import Fraction

from geoflow import geometry
from geoflow.dynamics import lyapunov_spectrum
from geoflow.geometry import TangentPlane, sectional_curvature
from geoflow.integrate import IntegratorConfig, flow_chart
from geoflow.symplectic import geodesic_hamiltonian

metric = geometry.half_plane()
plane = TangentPlane((Fraction(1, 3), Fraction(2)), (Fraction(1), Fraction(0)), (Fraction(1), Fraction(5)))
print("K at (1/3, 2):", sectional_curvature(metric, None, plane))

system = geodesic_hamiltonian(metric)
traj = flow_chart(system, [0, 1, 0, 1], IntegratorConfig(h=1e-3, T=5.0, record_every=1000))
for t, z in zip(traj.times, traj.states):
    print(f"t={t:4.1f}  y={z[1]:.6f}")
print("energy drift:", traj.energy_drift())

spectrum = lyapunov_spectrum(system, [0, 1, 0, 1], IntegratorConfig(h=1e-3), 50.0)
print("Lyapunov exponents:", [round(v, 3) for v in spectrum.exponents])
