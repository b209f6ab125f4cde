import pytest

from cogamc.amc_model import load_table
from cogamc.cli import SweepSettings, prepare_grid, section_v_scenario


@pytest.fixture(scope="session")
def table():
    return load_table()


@pytest.fixture(scope="session")
def scenario():
    return section_v_scenario()


@pytest.fixture(scope="session")
def small_grid(table, scenario):
    """Regions at the default L x C with a modest sample budget."""
    return prepare_grid(scenario, table, SweepSettings(mc_samples=200_000, seed=11))


def pytest_terminal_summary(terminalreporter):
    from _verdicts import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
