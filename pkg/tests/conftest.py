import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "mapenergy", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow], derandomize=True
)
settings.load_profile("mapenergy")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_CRITERIA = pytest.StashKey[dict]()


def pytest_configure(config):
    config.stash[_CRITERIA] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when == "teardown" and not report.failed:
        return
    number, title = marker.args
    results = item.config.stash[_CRITERIA]
    prev = results.get(number, ("PASS", title, 0.0, []))
    status = "FAIL" if report.failed or prev[0] == "FAIL" else "PASS"
    details = prev[3] + [v for k, v in report.user_properties if k == "detail" and v not in prev[3]]
    # setup time includes shared fixtures the first test of a criterion builds
    results[number] = (status, title, prev[2] + report.duration, details)


def pytest_terminal_summary(terminalreporter, config):
    results = config.stash[_CRITERIA]
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, title, seconds, details = results[number]
        extra = "; ".join(details)
        terminalreporter.write_line(
            f"criterion {number} {status}: {title} ({seconds:.1f} s{'; ' + extra if extra else ''})"
        )
