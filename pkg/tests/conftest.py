import pytest

from dve.cli import main
from dve.harness import RecordStore, builtin_grid, run_grid

ACCEPTANCE_SEED = 42
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def mini_store(tmp_path_factory):
    """paper-mini grid at seed 42, produced through the CLI at parallelism 1."""
    out = tmp_path_factory.mktemp("mini") / "store"
    rc = main(["bench", "--preset", "paper-mini", "--seed", str(ACCEPTANCE_SEED),
               "--parallelism", "1", "--out", str(out)])
    assert rc == 0
    return RecordStore(out)


@pytest.fixture(scope="session")
def mini_records(mini_store):
    return mini_store.load()


@pytest.fixture(scope="session")
def onem_records():
    return run_grid(builtin_grid("paper-1m-row").with_seed(ACCEPTANCE_SEED))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
