import sys

import numpy as np
import pytest

from spectralsys.dirac import build_dirac
from spectralsys.frames import PAULI, k3_frame
from spectralsys.spectrum import lattice_oracle, make_mollifier
from spectralsys.symbols import SymbolPair


def pauli_symbol(lower=None, scale=1.0):
    """Constant-coefficient symbol ``scale * sigma.xi + lower``."""

    def principal(x, xi):
        return scale * np.einsum("...a,aij->...ij", np.asarray(xi, dtype=float), PAULI)

    def dxi(x, xi):
        shape = np.broadcast_shapes(np.shape(x)[:-1], np.shape(xi)[:-1])
        return np.broadcast_to(scale * PAULI, shape + PAULI.shape)

    low = None if lower is None else (lambda x, xi: np.asarray(lower, dtype=complex))
    return SymbolPair(3, 2, principal, low, principal_dxi=dxi)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def mollifier():
    return make_mollifier(6.0)


@pytest.fixture(scope="session")
def free_dirac():
    return build_dirac(k3_frame(0))


@pytest.fixture(scope="session")
def free_oracle(free_dirac, mollifier):
    return lattice_oracle(free_dirac, 35.0 + mollifier.tail + 1.0)


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "SUMMARY", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for number in sorted(lines):
            terminalreporter.write_line(lines[number])
