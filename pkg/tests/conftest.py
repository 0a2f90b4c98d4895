import numpy as np
import pytest

from bfac.frame import Frame

_CRITERIA: dict[int, tuple[str, list[str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    n, title = getattr(report, "criterion", (None, None))
    if n is None:
        return
    _CRITERIA.setdefault(n, (title, []))[1].append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, outcomes = _CRITERIA[n]
        ok = all(o == "passed" for o in outcomes)
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {title}")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_frame(rng, w=32, h=24, planes=3) -> Frame:
    return Frame(rng.integers(0, 256, (planes, h, w), dtype=np.uint8))


def smooth_frame(w=64, h=48, planes=3) -> Frame:
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    base = 128 + 60 * np.sin(xs / 9.0) * np.cos(ys / 7.0)
    return Frame(np.stack([base + 10 * c for c in range(planes)]))
