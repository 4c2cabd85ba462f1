import pytest
from hypothesis import HealthCheck, settings

import report
from modnopo import SystemParams, derive_constants

settings.register_profile("repo", deadline=None, max_examples=25, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture(scope="session")
def system():
    """Reference system: gamma = 1, gamma3 = 25, k = 5e-4."""
    p = SystemParams(gamma=1.0, gamma3=25.0, k=5e-4)
    return p, derive_constants(p)


def pytest_terminal_summary(terminalreporter):
    if not report.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in report.LINES:
        terminalreporter.write_line(line)
