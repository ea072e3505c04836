import numpy as np
import pytest

from sparsedispatch.oracle import SamplingPlan, generate_dataset


@pytest.fixture(scope="session")
def small_data():
    return generate_dataset(SamplingPlan(n_samples=1000), seed=7)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """Repeat the acceptance criterion lines after the run, captured output or not."""
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
