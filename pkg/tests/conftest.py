import os

import pytest
from hypothesis import HealthCheck, settings

from fdcellfree.config import SystemConfig
from fdcellfree.fronthaul import quantizer_for, select_aps
from fdcellfree.scenario import make_drop

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def small_case():
    """M=3, K_d=3, K_u=2 drop with a binding fronthaul cap of 2 UEs per side."""
    cfg = SystemConfig().replace(**{"geometry.M": 3, "geometry.K_d": 3, "geometry.K_u": 2},
                                 nu=1, C_fh=2 * 4 * 180 * 1 / 1e-3)
    scn = make_drop(cfg, 11)
    smap = select_aps(scn, cfg)
    return cfg, scn, smap, quantizer_for(cfg)


@pytest.fixture
def desk_case():
    cfg = SystemConfig()
    scn = make_drop(cfg, 0)
    smap = select_aps(scn, cfg)
    return cfg, scn, smap, quantizer_for(cfg)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
