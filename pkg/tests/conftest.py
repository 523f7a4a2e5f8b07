import numpy as np
import pytest

from swdrop.lagrangian_solver import (
    SolverConfig,
    Variant,
    default_system,
    make_state,
    perturbation_family,
    simulate,
)


def mixed_state(system, eps, vel_eps=None, center=True):
    """Mixed even/odd displacement with a closure-compatible velocity."""
    ve = eps if vel_eps is None else vel_eps
    return make_state(system, perturbation_family("mixed", eps),
                      lambda s: ve * (0.5 + s - s**3 / 3), center=center)


@pytest.fixture(scope="session")
def system64():
    return default_system(64)


@pytest.fixture(scope="session")
def system128():
    return default_system(128)


@pytest.fixture(scope="session")
def short_static_run(system64):
    init = mixed_state(system64, 1e-2)
    cfg = SolverConfig(dt=1e-3, T=0.2, stride=5)
    return system64, simulate(init, cfg, system64)


@pytest.fixture(scope="session")
def short_dynamic_run():
    var = Variant(nu=1.0, slip=1.0)
    system = default_system(64, variant=var)
    init = mixed_state(system, 1e-2, center=False)
    cfg = SolverConfig(dt=1e-3, T=0.3, stride=5, variant=var)
    return system, simulate(init, cfg, system)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one pass/fail line per acceptance criterion, shown in the terminal summary
ACCEPTANCE = {}


@pytest.fixture
def criterion():
    def record(num: int, ok: bool, detail: str):
        line = f"criterion {num:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[num] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for num in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[num])
