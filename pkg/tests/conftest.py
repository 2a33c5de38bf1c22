import numpy as np
import pytest

from qcwork.operators import DriveProtocol, build_hamiltonian, displaced_thermal, evolve
from qcwork.workstats import spectral_setup

N_REF = 80


@pytest.fixture(scope="session")
def fig1():
    return DriveProtocol.fig1()


@pytest.fixture(scope="session")
def fig1_ops(fig1):
    """``(rho0, H0, Htau, U)`` for the reference protocol in ``N_REF`` levels."""
    rho = displaced_thermal(fig1, N_REF)
    H0 = build_hamiltonian(fig1, 0.0, N_REF)
    Ht = build_hamiltonian(fig1, fig1.tau, N_REF)
    U = evolve(fig1, 0.0, fig1.tau, N_REF)
    return rho, H0, Ht, U


@pytest.fixture(scope="session")
def fig1_setup(fig1_ops):
    return spectral_setup(*fig1_ops)


@pytest.fixture(scope="session")
def thermal_ops(fig1):
    p = fig1.replace(tau_prime=0.0)
    rho = displaced_thermal(p, N_REF)
    return p, (rho, build_hamiltonian(p, 0.0, N_REF), build_hamiltonian(p, p.tau, N_REF),
               evolve(p, 0.0, p.tau, N_REF))


@pytest.fixture
def etas():
    return np.linspace(-4.0, 4.0, 161)


_ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_ACCEPTANCE_KEY] = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion and assert it."""
    lines = request.config.stash[_ACCEPTANCE_KEY]

    def report(number: int, checks: dict, detail: str = ""):
        ok = all(checks.values())
        failed = [name for name, good in checks.items() if not good]
        line = f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        if failed:
            line += "  [failed: " + ", ".join(failed) + "]"
        lines.append(line)
        print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(_ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
