import functools

import pytest

from weaknoise import kramers as kr
from weaknoise.model import builtin, cubic_potential

_ACCEPTANCE: list[str] = []


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    _ACCEPTANCE.append(f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}: {detail}")


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def kramers_separatrix(gamma: float, omega: float = 1.0):
    if gamma == 0.0:
        return kr.compute_separatrix(kr.make_potential(cubic_potential(omega), 0.0))
    return kr.compute_separatrix(builtin("kramers_cubic", gamma=gamma, omega=omega))


@pytest.fixture(scope="session")
def separatrix():
    return kramers_separatrix


MC_EPSILON = 1.0 / 30.0
MC_N = 2000
MC_SEED = 7


@functools.lru_cache(maxsize=None)
def kramers_mc(dt: float):
    """Monte Carlo on the Kramers fixture; shared by the acceptance and dt-halving tests."""
    from weaknoise.montecarlo import AbsorbingBoundary, mc_simulate

    model = builtin("kramers_cubic", gamma=1.0, omega=1.0)
    sep = kramers_separatrix(1.0)
    T = 1.0 / kr.exit_rate(sep, MC_EPSILON).rate
    stats = mc_simulate(model, (-1.0, 0.0), AbsorbingBoundary.separatrix(sep), MC_EPSILON, dt,
                        MC_N, MC_SEED, 50.0 * T)
    return stats, T


@pytest.fixture(scope="session")
def mc_kramers():
    return kramers_mc
