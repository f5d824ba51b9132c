import pytest

from avatar_offsets.fitting import fit_model
from avatar_offsets.oracle import SyntheticOracle, simulate_study

_RESULTS = []


@pytest.fixture(scope="session")
def default_oracle():
    return SyntheticOracle()


@pytest.fixture(scope="session")
def default_dataset(default_oracle):
    return simulate_study(default_oracle, n_participants=12, seed=0)


@pytest.fixture(scope="session")
def fitted_model(default_dataset):
    return fit_model(default_dataset)


@pytest.fixture
def acceptance_report():
    """Record one acceptance line; all lines are repeated in the terminal summary."""

    def record(number: int, passed: bool, detail: str) -> str:
        line = f"ACCEPTANCE {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
        _RESULTS.append((number, line))
        print(line)
        return line

    return record


def pytest_terminal_summary(terminalreporter):
    if _RESULTS:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_RESULTS):
            terminalreporter.write_line(line)
