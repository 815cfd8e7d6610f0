import math

import pytest

from hodgemag import dec, geometry as geo

TWO_PI = 2 * math.pi

# acceptance lines collected by tests/test_acceptance.py, printed after the run
ACCEPTANCE = {}


def record_acceptance(number, name, ok, detail=""):
    ACCEPTANCE[number] = (name, bool(ok), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[number]
        tr.write_line(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {name}: {detail}")


@pytest.fixture(scope="session")
def torus16():
    return geo.torus_mesh((TWO_PI, TWO_PI), n=16)


@pytest.fixture(scope="session")
def torus32():
    return geo.torus_mesh((TWO_PI, TWO_PI), n=32)


@pytest.fixture(scope="session")
def torus64():
    return geo.torus_mesh((TWO_PI, TWO_PI), n=64)


@pytest.fixture(scope="session")
def sphere3():
    return geo.icosphere(3)


@pytest.fixture(scope="session")
def cube8():
    return geo.torus3_mesh(TWO_PI, n=8)


@pytest.fixture(scope="session")
def ops32(torus32):
    return dec.hodge_operators(torus32)


@pytest.fixture(scope="session")
def cube_spectra(cube8):
    """Coexact Laplace and curl eigenpairs on the 2pi cube (shared, about a minute)."""
    from hodgemag import spectral
    return spectral.coexact_spectrum(cube8, 8), spectral.curl_spectrum(cube8, 5)
