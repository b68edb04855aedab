import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=50,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240101)


def random_cloud(rng, n, scale=1.0):
    return rng.uniform(-scale, scale, size=(n, 3))


# -- acceptance reporting -------------------------------------------------------
# Tests marked ``criterion(n, title)`` feed one pass/fail line per criterion
# into the terminal summary; a criterion passes only if all its tests pass.

def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by a test")
    config._criteria = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed or rep.skipped):
        return
    number, title = marker.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
    entry = item.config._criteria.setdefault(number, {"title": title, "status": [], "detail": []})
    entry["status"].append(status)
    if detail:
        entry["detail"].append(detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    criteria = getattr(config, "_criteria", {})
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(criteria):
        entry = criteria[number]
        statuses = entry["status"]
        overall = "FAIL" if "FAIL" in statuses else ("SKIP" if "SKIP" in statuses else "PASS")
        line = f"criterion {number:>2} {overall}  {entry['title']}"
        if entry["detail"]:
            line += "  | " + "; ".join(entry["detail"])
        terminalreporter.write_line(line)
