import numpy as np
import pytest
from hypothesis import settings, HealthCheck

from blochlimit import potential, hill1d

settings.register_profile("default", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def mathieu():
    return potential.mathieu5()


@pytest.fixture(scope="session")
def mathieu_table(mathieu):
    return hill1d.band_table(mathieu, 6)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# ---- acceptance summary --------------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call":
        return
    num, title = mark.args
    measured = dict(item.user_properties).get("measured", "")
    _CRITERIA[num] = (title, call.excinfo is None, measured)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        title, ok, measured = _CRITERIA[num]
        tr.write_line(f"criterion {num:>2}: {'PASS' if ok else 'FAIL'}  {title}" + (f"  [{measured}]" if measured else ""))
