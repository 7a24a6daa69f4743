import pytest

from corrpce.moments import gaussian_moment_table
from corrpce.scenarios import decay_distribution, decay_model


@pytest.fixture(scope="session")
def decay_tables():
    """Analytic moment tables for the decay inputs, big enough for p=8 projections."""
    order = decay_model().required_order(8)
    cache = {}

    def get(rho):
        if rho not in cache:
            spec = decay_distribution(rho)
            cache[rho] = gaussian_moment_table(spec.mean, spec.covariance, order)
        return cache[rho]

    return get


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
