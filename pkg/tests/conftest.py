import sys
import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from geoflow import geometry

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

BUNDLED_METRICS = {
    "euclidean2": lambda: geometry.euclidean(2),
    "euclidean3": lambda: geometry.euclidean(3),
    "sphere_r1": lambda: geometry.stereographic_sphere(1),
    "sphere_r2": lambda: geometry.stereographic_sphere(2),
    "halfplane": geometry.half_plane,
    "disk": geometry.poincare_disk,
    "mixed": geometry.mixed_metric,
}


@pytest.fixture(params=sorted(BUNDLED_METRICS))
def bundled_metric(request):
    return BUNDLED_METRICS[request.param]()


@pytest.fixture
def rng():
    return np.random.default_rng(20261014)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[number])
