import numpy as np
import pytest

from chaosrates.chaos import FirstChaos, GbmExponential, PiecewiseExponential, SecondChaos

PE = PiecewiseExponential

# verdict lines appended by test_acceptance.py, echoed in the terminal summary
ACCEPTANCE_LINES = []


def flat_spec():
    """sigma(s) = exp(-s/2): pi_t = exp(-t), r = 1."""
    return FirstChaos(PE.exponential(1.0, 0.5))


def gbm_spec(r=0.05, lam=0.2):
    return GbmExponential(r, lam)


def second_spec():
    """sigma_s = 0.3 e^{-0.1 s} + 0.1 e^{-0.1 s} W_s."""
    return SecondChaos(PE.exponential(0.3, 0.1), PE.constant(1.0), PE.exponential(0.1, 0.1))


@pytest.fixture
def flat():
    return flat_spec()


@pytest.fixture
def gbm():
    return gbm_spec()


@pytest.fixture
def second():
    return second_spec()


@pytest.fixture(params=["flat", "gbm", "second"])
def closed_spec(request):
    return {"flat": flat_spec, "gbm": gbm_spec, "second": second_spec}[request.param]()


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
