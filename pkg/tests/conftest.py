import pytest

from skycat import synth

# Outcome of every acceptance criterion seen in this session, by number.
ACCEPTANCE: dict[int, tuple[str, str]] = {}


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    if call.when == "call" or (call.when == "setup" and call.excinfo is not None):
        ok = call.excinfo is None
        notes = [str(v) for k, v in item.user_properties if k == "note"]
        if notes:
            title = f"{title} ({'; '.join(notes)})"
        prev = ACCEPTANCE.get(number)
        if prev is None or prev[0] == "PASS":
            ACCEPTANCE[number] = ("PASS" if ok else "FAIL", title)


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion check")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        status, title = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {status}  {title}")


@pytest.fixture(scope="session")
def uniform_10k():
    cat, _ = synth.build_catalog(10_000, seed=11, profile="uniform")
    return cat


@pytest.fixture(scope="session")
def sdss_10k():
    cat, _ = synth.build_catalog(10_000, seed=12, profile="sdss")
    return cat
