import pytest

from pulsedose.design import (
    PARACETAMOL_CORRIDOR,
    case_phi_target,
    solve_corridor,
    synthesize_coeffs,
    table_controller,
)
from pulsedose.kinetics import PARACETAMOL_PD, PARACETAMOL_PLANT, hill
from pulsedose.modulation import PARACETAMOL_CLAMPS, Controller, SatAffineFn

_acceptance = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, text): numbered exit criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    rep = (yield).get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or not (rep.when == "call" or rep.failed):
        return
    n, text = mark.args
    ok = _acceptance.get(n, (text, True))[1] and rep.passed
    _acceptance[n] = (text, ok)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_acceptance):
        text, ok = _acceptance[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {text}")


@pytest.fixture
def plant():
    return PARACETAMOL_PLANT


@pytest.fixture
def pd():
    return PARACETAMOL_PD


@pytest.fixture
def cycle(plant):
    return solve_corridor(PARACETAMOL_CORRIDOR, plant)


@pytest.fixture(params=[1, 2, 3], ids=lambda c: f"case{c}")
def case(request):
    return request.param


@pytest.fixture
def table(case):
    return table_controller(case)


@pytest.fixture
def synthesized(case, cycle, plant, pd):
    return synthesize_coeffs(cycle, plant, pd, case_phi_target(case, cycle, plant))


def steep_amplitude_controller(weight_slope_at_star=-2.5):
    """Constant period T, amplitude law steep enough that Q' < -1 below x* = 10.

    F'(10) = weight_slope_at_star, so Q'(10) = 0.5 (1 + F'(10)) stays inside
    (-1, 1) while F' < -3 (hence Q' < -1) for x below about 8.3.
    """
    cyc = solve_corridor(PARACETAMOL_CORRIDOR, PARACETAMOL_PLANT)
    dy = -PARACETAMOL_PD.emax * PARACETAMOL_PD.ec50 / (PARACETAMOL_PD.ec50 + 10.0) ** 2
    k4 = weight_slope_at_star / dy
    k3 = cyc.lam - k4 * hill(10.0, PARACETAMOL_PD)
    cl = PARACETAMOL_CLAMPS
    return Controller(SatAffineFn(0.0, cyc.t_period, cl.phi_lo, cl.phi_hi),
                      SatAffineFn(k4, k3, cl.f_lo, cl.f_hi), PARACETAMOL_PD, 42.0)


@pytest.fixture
def steep():
    return steep_amplitude_controller()
