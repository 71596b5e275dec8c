import warnings

import pytest

from crp_ldp.laws import exponential_clock_law, exponential_gaussian_law, pinning_law, unit_step_law


@pytest.fixture(autouse=True)
def _quiet_numpy():
    # inf - inf inside oracle comparisons is expected and handled explicitly
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


@pytest.fixture
def m1():
    return unit_step_law(0.5)


@pytest.fixture
def m2():
    return exponential_clock_law()


@pytest.fixture
def m3():
    return exponential_gaussian_law()


@pytest.fixture
def m4():
    return pinning_law()


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.RESULTS:
            terminalreporter.write_line(line)
