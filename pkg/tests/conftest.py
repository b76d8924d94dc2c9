import numpy as np
import pytest

from kreinacm import lattice as L
from kreinacm import models


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def lattice_11():
    return L.LatticeSpec(1, 1, (8, 8))


@pytest.fixture(scope="session")
def products(lattice_11):
    """ED, EW and SM products on the 8x8 (1,1) torus, built once."""
    triples = {"ED": models.ed_triple(0.8), "EW": models.ew_triple(0.7, 1.3), "SM": models.sm_triple(seed=5)}
    return {k: L.assemble_product(T, lattice_11) for k, T in triples.items()}


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """Record one acceptance line, print it, and fail the test if it did not pass."""
    log = request.config.stash.setdefault(ACCEPTANCE, [])

    def record(number: int, title: str, ok: bool, detail: str = ""):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {title}" + (f" [{detail}]" if detail else "")
        log.append((number, line))
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    log = config.stash.get(ACCEPTANCE, [])
    if log:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(log, key=lambda x: x[0]):
            terminalreporter.write_line(line)
