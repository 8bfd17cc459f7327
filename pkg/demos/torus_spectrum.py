"""Closed geodesics on the flat torus and an arithmeticity test of the resulting length spectrum."""

from geoflow import geometry
from geoflow.dynamics import arithmeticity_test, lattice_direction_seeds, periodic_orbit_search
from geoflow.integrate import IntegratorConfig
from geoflow.symplectic import geodesic_hamiltonian

system = geodesic_hamiltonian(geometry.flat_torus())
seeds = lattice_direction_seeds(system, 6)
sample = periodic_orbit_search(system, seeds, IntegratorConfig(h=1e-2))
print("periods:", [round(p, 6) for p in sample.periods])

result = arithmeticity_test(sample, tolerance=1e-6)
print("verdict:", result.verdict)
