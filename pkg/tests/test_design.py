import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import central_diff, hill_ref, q_ref

from pulsedose.bounds import coarse_bounds
from pulsedose.design import (
    PARACETAMOL_CORRIDOR,
    TABLE_CASES,
    Corridor,
    CycleParams,
    case_phi_target,
    cycle_fixed_point,
    deadbeat_f_slope,
    phi_star_slope,
    solve_corridor,
    synthesize_coeffs,
    table_controller,
    validate_compatibility,
)
from pulsedose.errors import DesignError, DomainError
from pulsedose.kinetics import PARACETAMOL_PD, PARACETAMOL_PLANT, PlantParams, flow
from pulsedose.modulation import (
    MIXED,
    NEGATIVE_FEEDBACK,
    PARACETAMOL_CLAMPS,
    Clamps,
    classify_feedback,
    f_of_x,
    phi_of_x,
)
from pulsedose.retmap import q_map, q_prime

PHI_STAR = 1 / (0.28 * 20)
DY = -5.17 * 9.98 / (9.98 + 10) ** 2


def test_paracetamol_corridor(plant, cycle):
    assert cycle.t_period == pytest.approx(2.4755, abs=1e-4)
    assert cycle.lam == 10.0 and cycle.x_star == 10.0


@pytest.mark.parametrize("c", [0.3, 1.0, 17.0])
def test_doubling_corridor_period_is_ratio_only(plant, c):
    cyc = solve_corridor(Corridor(c, 2 * c), plant)
    assert cyc.t_period == pytest.approx(math.log(2) / 0.28, rel=1e-14)
    assert cyc.lam == pytest.approx(c) and cyc.x_star == c


def test_wide_corridor_closed_form(plant):
    cyc = solve_corridor(Corridor(5.0, 40.0), plant)
    assert cyc.t_period == pytest.approx(math.log(8) / 0.28, abs=1e-12)
    assert cyc.t_period == pytest.approx(7.4266, abs=1e-4)
    assert cyc.lam == 35.0
    e = math.exp(-0.28 * cyc.t_period)
    assert 35 * e / (1 - e) == pytest.approx(5.0, rel=1e-12)
    assert cycle_fixed_point(cyc.t_period, cyc.lam, plant) == pytest.approx(cyc.x_star, rel=1e-10)


@pytest.mark.parametrize("lo, hi", [(0.0, 1.0), (5.0, 5.0), (6.0, 2.0), (-1.0, 3.0)])
def test_corridor_validation(lo, hi):
    with pytest.raises(DomainError):
        Corridor(lo, hi)


def test_phi_star_slope(plant, cycle):
    assert phi_star_slope(cycle, plant) == pytest.approx(0.1786, abs=1e-4)
    assert phi_star_slope(CycleParams(1.0, 0.5, 0.5), PlantParams(-1.0)) == 1.0
    wide = solve_corridor(Corridor(5, 40), plant)
    # x* + lambda = x_max = 40 for this corridor
    assert phi_star_slope(wide, plant) == pytest.approx(1 / (0.28 * 40), abs=1e-12)
    assert phi_star_slope(wide, plant) == pytest.approx(0.089286, abs=1e-6)


def test_deadbeat_weight_slopes(plant, cycle):
    assert deadbeat_f_slope(4.0, cycle, plant) == pytest.approx(21.4, abs=1e-2)
    assert deadbeat_f_slope(phi_star_slope(cycle, plant), cycle, plant) == pytest.approx(0.0, abs=1e-14)
    assert deadbeat_f_slope(0.0, cycle, plant) == -1.0


def test_synthesized_case2_coefficients(plant, pd, cycle):
    c = synthesize_coeffs(cycle, plant, pd, phi_star_slope(cycle, plant))
    k1, k2, k3, k4 = c.k
    assert k4 == 0.0 and k3 == 10.0
    # independent closed form from the checkpoint values
    assert k2 == pytest.approx(PHI_STAR / DY, rel=1e-12)
    assert k1 == pytest.approx(math.log(2) / 0.28 - k2 * hill_ref(10.0), rel=1e-12)
    # four-digit hand values (rounded slope target 0.1786)
    assert k2 == pytest.approx(-1.3818, abs=1e-3)
    assert k1 == pytest.approx(12.7179, abs=2e-3)
    assert float(phi_of_x(c, 10.0)) == pytest.approx(2.4755, abs=1e-4)
    assert central_diff(lambda x: q_ref(x, c.k), 10.0) == pytest.approx(0.0, abs=1e-6)


def test_synthesized_pure_amplitude(plant, pd, cycle):
    c = synthesize_coeffs(cycle, plant, pd, 0.0)
    k1, k2, k3, k4 = c.k
    assert k2 == 0.0 and k1 == pytest.approx(cycle.t_period, rel=1e-15)
    assert k4 == pytest.approx(-1 / DY, rel=1e-12)
    assert k4 == pytest.approx(7.7369, abs=1e-3)
    assert k3 == pytest.approx(-47.350, abs=1e-2)
    assert abs(q_prime(c, plant, 10.0)) < 1e-8


@given(st.floats(-0.5, 4.0))
def test_synthesis_residuals_and_deadbeat(target):
    plant, pd = PARACETAMOL_PLANT, PARACETAMOL_PD
    cycle = solve_corridor(PARACETAMOL_CORRIDOR, plant)
    c = synthesize_coeffs(cycle, plant, pd, target)
    assert abs(float(phi_of_x(c, 10.0)) - cycle.t_period) < 1e-10
    assert abs(float(f_of_x(c, 10.0)) - cycle.lam) < 1e-10
    assert abs(q_prime(c, plant, 10.0)) < 1e-8
    assert central_diff(lambda x: q_ref(x, c.k), 10.0, 1e-7) == pytest.approx(0.0, abs=1e-6)


@given(st.floats(1e-3, PHI_STAR * (1 - 1e-6)))
def test_sign_structure_below_phi_star(target):
    cycle = solve_corridor(PARACETAMOL_CORRIDOR, PARACETAMOL_PLANT)
    c = synthesize_coeffs(cycle, PARACETAMOL_PLANT, PARACETAMOL_PD, target)
    _, k2, _, k4 = c.k
    assert k2 < 0 and k4 > 0
    assert classify_feedback(c) == NEGATIVE_FEEDBACK


@given(st.floats(PHI_STAR * (1 + 1e-6), 5.0))
def test_sign_structure_above_phi_star(target):
    cycle = solve_corridor(PARACETAMOL_CORRIDOR, PARACETAMOL_PLANT)
    c = synthesize_coeffs(cycle, PARACETAMOL_PLANT, PARACETAMOL_PD, target)
    assert c.k[3] < 0
    assert deadbeat_f_slope(target, cycle, PARACETAMOL_PLANT) > 0
    assert classify_feedback(c) == MIXED


@given(st.floats(0.01, 100.0))
def test_scale_covariance(gamma):
    base = solve_corridor(PARACETAMOL_CORRIDOR, PARACETAMOL_PLANT)
    scaled = solve_corridor(Corridor(10 * gamma, 20 * gamma), PARACETAMOL_PLANT)
    assert scaled.t_period == pytest.approx(base.t_period, rel=1e-12)
    assert scaled.lam == pytest.approx(gamma * base.lam, rel=1e-12)
    assert scaled.x_star == pytest.approx(gamma * base.x_star, rel=1e-12)


@given(st.floats(0.1, 50.0), st.floats(1.01, 20.0), st.floats(-2.0, -0.01))
def test_corridor_cycle_spans_corridor(x_min, ratio, a):
    plant = PlantParams(a)
    corridor = Corridor(x_min, x_min * ratio)
    cyc = solve_corridor(corridor, plant)
    assert cycle_fixed_point(cyc.t_period, cyc.lam, plant) == pytest.approx(cyc.x_star, rel=1e-10)
    top = cyc.x_star + cyc.lam
    assert top == pytest.approx(corridor.x_max, rel=1e-12)
    assert float(flow(top, cyc.t_period, plant)) == pytest.approx(corridor.x_min, rel=1e-12)


def test_synthesis_refuses_clipped_design(plant, pd):
    tight = Clamps(1.0, 2.0, 200 / 42, 2000 / 42)
    cycle = solve_corridor(PARACETAMOL_CORRIDOR, plant)
    with pytest.raises(DesignError, match="period"):
        synthesize_coeffs(cycle, plant, pd, 0.1, tight)
    with pytest.raises(DesignError, match="weight"):
        synthesize_coeffs(cycle, plant, pd, 0.1, Clamps(1.0, 8.0, 11.0, 40.0))


def test_compatibility(plant):
    ok = validate_compatibility(PARACETAMOL_CORRIDOR, PARACETAMOL_CLAMPS, plant)
    assert ok.ok and ok.violated is None
    assert ok.lower_bound == pytest.approx(0.5673, abs=1e-3)
    assert ok.upper_bound == pytest.approx(194.987, abs=1e-2)
    low = validate_compatibility(Corridor(0.1, 0.2), PARACETAMOL_CLAMPS, plant)
    assert not low.ok and low.violated == "lower"
    high = validate_compatibility(Corridor(10, 400), PARACETAMOL_CLAMPS, plant)
    assert high.violated == "upper"


def test_compatibility_degenerate_clamps(plant, cycle):
    pin = Clamps(cycle.t_period, cycle.t_period, cycle.lam, cycle.lam)
    assert validate_compatibility(PARACETAMOL_CORRIDOR, pin, plant).ok
    assert not validate_compatibility(Corridor(9.0, 20.0), pin, plant).ok
    assert not validate_compatibility(Corridor(10.0, 21.0), pin, plant).ok
    lo, hi = coarse_bounds(pin, plant)
    assert lo == pytest.approx(10.0) and hi == pytest.approx(20.0)


def test_table_modes(plant, cycle):
    for case, pc in TABLE_CASES.items():
        exact = table_controller(case)
        verbatim = table_controller(case, verbatim=True)
        assert verbatim.k == (pc.k1, pc.k2, pc.k3, pc.k4)
        assert exact.k[1] == pc.k2 and exact.k[3] == pc.k4
        assert exact.k[0] == pytest.approx(pc.k1, abs=1e-3)
        assert exact.k[2] == pytest.approx(pc.k3, abs=1e-3)
        assert float(q_map(exact, plant, 10.0)) == pytest.approx(10.0, abs=1e-12)


def test_table_slopes_are_a_factor_ten_short(plant, cycle):
    """Tabulated slopes realize a tenth of their design targets; rates stay near 0.45, not 0."""
    for case in (1, 2, 3):
        target = case_phi_target(case, cycle, plant)
        realized = TABLE_CASES[case].k2 * DY
        assert realized == pytest.approx(target / 10, rel=2e-3)
    assert q_prime(table_controller(2), plant, 10.0) == pytest.approx(0.45, abs=1e-2)


def test_synthesized_case3_is_ten_times_table(plant, pd, cycle):
    c = synthesize_coeffs(cycle, plant, pd, case_phi_target(3, cycle, plant))
    assert c.k[3] == pytest.approx(10 * TABLE_CASES[3].k4, rel=1e-3)
    assert c.k[1] == pytest.approx(10 * TABLE_CASES[3].k2, rel=2e-3)


def test_unknown_case():
    with pytest.raises(DomainError):
        table_controller(4)


def test_reports_serialize(cycle):
    assert cycle.to_dict() == {"T": cycle.t_period, "lambda": 10.0, "x_star": 10.0}
    assert set(validate_compatibility(PARACETAMOL_CORRIDOR, PARACETAMOL_CLAMPS,
                                      PARACETAMOL_PLANT).to_dict()) == {"ok", "lower_bound", "upper_bound", "violated"}


def test_slope_targets_over_grid(plant, pd, cycle):
    for target in np.linspace(0.0, 4.0, 41):
        c = synthesize_coeffs(cycle, plant, pd, float(target))
        assert abs(q_prime(c, plant, 10.0)) < 1e-8
