import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nbiotsim.config import load_enb_config  # noqa: E402
from nbiotsim.scenario import bundled_scenario, load_scenario  # noqa: E402
from nbiotsim.trace import Tracer  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture
def listing_path():
    return DATA / "band28_listing.conf"


@pytest.fixture
def enb_cfg(listing_path):
    return load_enb_config(listing_path)


@pytest.fixture
def tracer():
    return Tracer()


@pytest.fixture
def scenario():
    return lambda name: load_scenario(bundled_scenario(name))


CRITERIA: dict[str, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion this test belongs to")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("criterion")
        if mark is not None:
            cid, title = mark.args
            CRITERIA.setdefault(cid, {"title": title, "nodes": {}})["nodes"][item.nodeid] = None


def pytest_runtest_logreport(report):
    for entry in CRITERIA.values():
        if report.nodeid in entry["nodes"] and (report.when == "call" or report.outcome != "passed"):
            if entry["nodes"][report.nodeid] is not False:
                entry["nodes"][report.nodeid] = report.outcome == "passed"


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(CRITERIA, key=lambda c: int(c[1:])):
        entry = CRITERIA[cid]
        results = list(entry["nodes"].values())
        if None in results:
            status = "NOT RUN"
        else:
            status = "PASS" if all(results) else "FAIL"
        terminalreporter.write_line(f"{cid} {status}: {entry['title']} ({sum(map(bool, results))}/{len(results)} tests)")
