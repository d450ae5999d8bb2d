import numpy as np
import pytest

from recloss.recsys import make_block_dataset, split_leave_last


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def block_split():
    return split_leave_last(make_block_dataset(seed=0))


@pytest.fixture
def small_csv(tmp_path):
    """Ten events, three users; user ``c`` has only two events and gets dropped."""
    path = tmp_path / "events.csv"
    path.write_text(
        "user_id,item_id,timestamp\n"
        "a,10,1\n"
        "a,11,2\n"
        "b,12,5\n"
        "a,12,3\n"
        "b,10,6\n"
        "c,11,1\n"
        "b,13,7\n"
        "a,13,4\n"
        "c,12,2\n"
        "b,11,8\n"
    )
    return path


# Acceptance criteria record a one-line verdict here; printed after the run.
ACCEPTANCE_LINES: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
