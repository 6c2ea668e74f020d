import functools

import numpy as np
import pytest

from jrlattice.adiabatic import relaxed_kink
from jrlattice.lattice import LatticeSpec


@functools.lru_cache(maxsize=None)
def cached_kink(N, Phi0, xi0, center=0.5):
    spec = LatticeSpec.from_kink(N, Phi0, xi0)
    return spec, relaxed_kink(spec, center)


@pytest.fixture(scope="session")
def kink160():
    """Relaxed link-centred kink at N=160, Phi0=3, xi0=1."""
    return cached_kink(160, 3.0, 1.0)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES = []


def report(number, ok, detail):
    """Record and print one acceptance verdict line."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split(":")[0].split()[1])):
            terminalreporter.write_line(line)
