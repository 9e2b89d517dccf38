import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("thorough", max_examples=500, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def hp_tt():
    from csmnn.device import DeviceSet

    return DeviceSet.for_corner("MOS-HP", "TT")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ----------------------------------------------------------------------------
# acceptance summary: one line per test marked ``criterion(number, title)``


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): numbered acceptance criterion")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when == "teardown":
        return
    if rep.when == "setup" and rep.outcome == "passed":
        return
    n, title = mark.args
    detail = dict(item.user_properties).get("detail", "")
    ok = rep.outcome == "passed"
    if not ok and hasattr(rep, "wasxfail"):
        detail = f"{detail}; known: {rep.wasxfail}" if detail else f"known: {rep.wasxfail}"
    item.config._criteria[n] = (title, ok, detail)


def pytest_terminal_summary(terminalreporter, config):
    rows = getattr(config, "_criteria", {})
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(rows):
        title, ok, detail = rows[n]
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))
