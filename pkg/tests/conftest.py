import os

from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


# one PASS/FAIL line per acceptance criterion, printed after the run

_criteria: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    props = dict(report.user_properties)
    name = props.get("criterion")
    if name is None:
        return
    verdict = "PASS" if report.outcome == "passed" else "FAIL"
    if _criteria.get(name, ("PASS",))[0] == "FAIL":
        return  # a criterion checked by several tests fails if any of them fails
    _criteria[name] = (verdict, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for name, (verdict, detail) in _criteria.items():
        terminalreporter.write_line(f"{verdict}  {name}" + (f"  ({detail})" if detail else ""))
