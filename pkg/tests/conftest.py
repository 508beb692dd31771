import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile(
    "default", deadline=None, suppress_health_check=[HealthCheck.too_slow], print_blob=True
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def traffic3():
    from sensreach.models import default_spec, model_traffic3

    return model_traffic3(), default_spec("traffic3")


@pytest.fixture(scope="session")
def traffic3_grid_bounds(traffic3):
    from sensreach.bounds.sampling import Grid, sample_bounds

    model, spec = traffic3
    return sample_bounds(model, spec, Grid(2))


@pytest.fixture(scope="session")
def traffic3_falsified(traffic3, traffic3_grid_bounds):
    from sensreach.bounds.sampling import falsify_bounds

    model, spec = traffic3
    return falsify_bounds(model, spec, traffic3_grid_bounds, rng=0)


# one summary line per acceptance criterion
_criteria: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    failed = report.failed
    if report.when == "call" or (failed and number not in _criteria):
        detail = dict(item.user_properties).get("detail", "")
        if failed and not detail and call.excinfo is not None:
            detail = call.excinfo.exconly().splitlines()[0]
        _criteria[number] = ("FAIL" if failed else "PASS", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        status, title, detail = _criteria[number]
        line = f"criterion {number:>2} {status}: {title}"
        terminalreporter.write_line(f"{line} | {detail}" if detail else line)
