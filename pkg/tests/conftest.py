import numpy as np
import pytest
from hypothesis import settings

from yukawa_scattering import Grid3

settings.register_profile("default", deadline=None, max_examples=30)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_grid():
    return Grid3(16, 20.0)


_REPORT = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_REPORT] = []


@pytest.fixture
def criterion_report(request):
    """``report(number, ok, detail)`` prints one PASS/FAIL line and keeps it for the summary."""
    lines = request.config.stash[_REPORT]
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def report(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        lines.append(line)
        with capman.global_and_fixture_disabled():
            print("\n" + line)

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_REPORT, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
