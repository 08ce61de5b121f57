import pytest

from emufleet.data import fit_normalization, load_bundled_dataset

# filled by test_acceptance; printed at the end of the session
ACCEPTANCE_RESULTS = {}


@pytest.fixture(scope="session")
def records():
    return load_bundled_dataset()


@pytest.fixture(scope="session")
def spec_all(records):
    return fit_normalization(records, "all-years")


@pytest.fixture(scope="session")
def spec_train(records):
    return fit_normalization(records, "train-years")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, detail = ACCEPTANCE_RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
