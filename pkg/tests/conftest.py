import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "repro",
    derandomize=True,
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repro")


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def random_state(n_spins: int, rng) -> np.ndarray:
    """Haar-random pure state of n_spins qubits."""
    dim = 1 << n_spins
    psi = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return psi / np.linalg.norm(psi)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance criterion outcomes into the terminal report."""
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance._RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance._RESULTS:
            terminalreporter.write_line(line)
