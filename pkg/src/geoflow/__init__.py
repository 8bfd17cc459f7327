"""geoflow: exact geometry and numeric geodesic-flow dynamics for rational metrics."""

__version__ = "0.1.0"
