import hypothesis
import pytest

from cceff import DesignParams, PopulationParams

hypothesis.settings.register_profile(
    "suite",
    max_examples=50,
    deadline=None,
    suppress_health_check=[hypothesis.HealthCheck.too_slow],
)
hypothesis.settings.load_profile("suite")


@pytest.fixture
def canonical():
    """The worked parameter point used throughout: f is about 0.2023."""
    return PopulationParams(alpha=-2.0, beta=1.0, gamma=0.3, theta=0.4, pi=0.5)


@pytest.fixture
def balanced_design():
    return DesignParams(nu=1.0, n=100000.0)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    """Echo the one-line verdicts collected by the acceptance tests."""
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
