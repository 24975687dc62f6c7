import pytest

from resdg.model import make_damped_harmonic, make_duffing, make_van_der_pol


@pytest.fixture
def dho():
    return make_damped_harmonic(0.2)


@pytest.fixture
def vdp():
    return make_van_der_pol(1.0)


@pytest.fixture
def duffing():
    return make_duffing(0.2)


# --- acceptance summary -------------------------------------------------------
# Tests marked ``criterion(n, title)`` are folded into one PASS/FAIL line per
# criterion at the end of the session, with any ``record_property`` values.

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    n, title = mark.args
    entry = _CRITERIA.setdefault(n, {"title": title, "ok": True, "notes": []})
    entry["ok"] = entry["ok"] and rep.passed
    if rep.when == "call":
        entry["notes"].extend(f"{k}={v}" for k, v in item.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        entry = _CRITERIA[n]
        status = "PASS" if entry["ok"] else "FAIL"
        notes = f" ({', '.join(entry['notes'])})" if entry["notes"] else ""
        terminalreporter.write_line(f"criterion {n} {status}: {entry['title']}{notes}")
