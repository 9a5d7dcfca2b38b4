"""Collects the outcome of tests marked ``criterion`` and prints one line per criterion."""
import pytest

_VERDICTS: list = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
        verdict = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _VERDICTS.append((marker.args[0], verdict, detail))


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, verdict, detail in _VERDICTS:
        terminalreporter.write_line(f"{verdict}  {name}" + (f"  ({detail})" if detail else ""))
