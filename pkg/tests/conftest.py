import numpy as np
import pytest

from qtraj.model import canonical_qubit_model


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def canonical():
    return canonical_qubit_model()


@pytest.fixture
def psi_plus():
    return np.array([1.0, 1.0], dtype=np.complex128) / np.sqrt(2.0)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'} - {detail}")
