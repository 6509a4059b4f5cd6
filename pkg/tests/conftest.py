import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from bevtraj.synthetic import write_highway_dataset, write_urban_dataset  # noqa: E402

FIXTURES = Path(__file__).parent / "fixtures"

_acceptance: dict = {}  # criterion name -> list of test outcomes


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES


@pytest.fixture(scope="session")
def highway_raw(tmp_path_factory):
    return write_highway_dataset(tmp_path_factory.mktemp("raw_highway"))


@pytest.fixture(scope="session")
def urban_raw(tmp_path_factory):
    return write_urban_dataset(tmp_path_factory.mktemp("raw_urban"))


@pytest.fixture(scope="session")
def highway_out(highway_raw, tmp_path_factory):
    from bevtraj.pipeline import ProcessOptions, process

    out = tmp_path_factory.mktemp("out_highway")
    summary = process(highway_raw, out, ProcessOptions(binary=True))
    return out, summary


@pytest.fixture(scope="session")
def urban_out(urban_raw, tmp_path_factory):
    from bevtraj.pipeline import process

    out = tmp_path_factory.mktemp("out_urban")
    summary = process(urban_raw, out)
    return out, summary


def pytest_runtest_logreport(report):
    name = getattr(report, "acceptance_name", None)
    if name is None:
        return
    if report.when == "call" or report.outcome != "passed":
        _acceptance.setdefault(name, []).append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is not None:
        rep.acceptance_name = m.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(_acceptance, key=lambda n: int(n.split()[0][2:]) if n.startswith("AC") else 99):
        outcomes = _acceptance[name]
        status = "FAIL" if "failed" in outcomes else "PASS" if "passed" in outcomes else "SKIP"
        terminalreporter.write_line(f"{status}  {name}")
