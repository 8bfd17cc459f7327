"""Circular Kepler orbit integrated on the collision-free configuration space."""

import math

from geoflow.integrate import IntegratorConfig
from geoflow.nbody import circular_two_body, momentum_drift, orbit_period, simulate_nbody

traj = simulate_nbody(circular_two_body(), IntegratorConfig(h=1e-3, T=10 * math.pi * math.sqrt(2)))
print(f"period {orbit_period(traj):.6f} (expected {math.pi * math.sqrt(2):.6f})")
print("energy drift:", traj.energy_drift())
print("momentum, angular momentum drift:", momentum_drift(traj))
