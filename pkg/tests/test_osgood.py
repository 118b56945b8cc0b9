"""Tests for the Osgood-but-superpower source and the scalar ODE integrator."""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from heatlab import osgood  # noqa: E402
from heatlab.errors import InvalidQueryError  # noqa: E402
from heatlab.semilinear import make_source  # noqa: E402

PHI_1 = math.e
PHI_2 = math.exp(math.e)
PHI_3 = math.exp(PHI_2)


def _breakpoints():
    return [1.0, PHI_1 / 2, PHI_1, PHI_2 / 2, PHI_2, PHI_3 / 2]


def test_phi_sequence_in_and_out_of_double_range():
    assert [osgood.phi_seq(i).value for i in range(4)] == pytest.approx([1.0, PHI_1, PHI_2, PHI_3])
    beyond = osgood.phi_seq(4)
    assert beyond.depth == 1
    assert math.isinf(beyond.value)
    assert beyond.log_value == pytest.approx(PHI_3)
    assert osgood.phi_seq(6).log_repr().startswith("exp^2(")
    with pytest.raises(InvalidQueryError):
        osgood.phi_seq(-1)


def test_source_values_on_each_segment():
    assert osgood.bad_f_eval(0.0) == 0.0
    assert osgood.bad_f_eval(0.5) == pytest.approx(0.5 * (math.e - 1.0))
    assert osgood.bad_f_eval(1.2) == pytest.approx(math.e - 1.0)
    assert osgood.bad_f_eval(2.0) == pytest.approx(6.77186, rel=1e-5)
    assert osgood.bad_f_eval(PHI_1) == pytest.approx(PHI_2 - PHI_1)
    assert osgood.bad_f_eval(100.0) == pytest.approx(PHI_3 - PHI_2)
    assert math.isinf(osgood.bad_f_eval(PHI_3 / 2 + 1.0))


def test_source_rejects_negative_arguments():
    with pytest.raises(InvalidQueryError):
        osgood.bad_f_eval(-1.0)
    with pytest.raises(InvalidQueryError):
        osgood.bad_f_array(np.array([0.0, -1e-3]))


@pytest.mark.parametrize("s", _breakpoints())
def test_source_is_continuous_at_breakpoints(s):
    left, right = osgood.one_sided_values(s)
    assert left == pytest.approx(right, rel=1e-12)


def test_one_sided_values_rejects_interior_points():
    with pytest.raises(InvalidQueryError):
        osgood.one_sided_values(1.5)


def test_source_is_nondecreasing_up_to_last_double_plateau():
    grid = np.linspace(0.0, PHI_3 / 2, 200001)
    values = osgood.bad_f_array(grid)
    assert np.all(np.diff(values) >= 0)
    assert np.all(np.isfinite(values))


def test_array_and_scalar_evaluations_agree():
    points = np.array([0.0, 0.3, 1.0, 1.2, 2.0, PHI_1, 5.0, 9.0, 14.0, 1e5, PHI_3 / 2 + 10.0])
    expected = [osgood.bad_f_eval(float(s)) for s in points]
    assert osgood.bad_f_array(points) == pytest.approx(expected, rel=1e-12)


def test_log_source_matches_and_extends_double_values():
    for s in (0.3, 1.2, 2.0, 9.0, 1e5):
        assert osgood.log_bad_f(s) == pytest.approx(math.log(osgood.bad_f_eval(s)), rel=1e-12)
    assert osgood.log_bad_f(0.0) == -math.inf
    for s in (PHI_3 / 2 + 10.0, PHI_3, 1e300):
        assert math.isfinite(osgood.log_bad_f(s))
    assert osgood.log_bad_f(3e6) <= osgood.log_bad_f(PHI_3) <= osgood.log_bad_f(1e300)


def test_ramp_log_slope_matches_secant():
    secant = ((PHI_2 - PHI_1) - (PHI_1 - 1.0)) / (PHI_1 / 2)
    assert math.exp(osgood.ramp_log_slope(1)) == pytest.approx(secant, rel=1e-12)
    assert math.isfinite(osgood.ramp_log_slope(3))
    with pytest.raises(InvalidQueryError):
        osgood.ramp_log_slope(0)


def test_osgood_terms():
    assert osgood.osgood_term(1) == pytest.approx(0.2090116, rel=1e-6)
    assert osgood.osgood_term(2) == pytest.approx(0.3907090, rel=1e-6)
    assert osgood.osgood_term(3) == pytest.approx(0.4999980, abs=1e-7)
    assert osgood.osgood_term(4) == 0.5
    assert osgood.osgood_term(50) == 0.5
    with pytest.raises(InvalidQueryError):
        osgood.osgood_term(0)


def test_partial_sums_diverge_linearly():
    sums = [osgood.osgood_partial_sum(N) for N in (10, 20, 50)]
    assert sums[1] - sums[0] == pytest.approx(5.0)
    assert sums[2] > 24.0
    with pytest.raises(InvalidQueryError):
        osgood.osgood_partial_sum(0)


@pytest.mark.parametrize("gamma", [1.0, 5.0, 10.0])
def test_log_growth_positive_at_third_term(gamma):
    logs = [osgood.growth_probe(gamma, i) for i in (1, 2, 3, 4)]
    assert logs[2] > 0
    assert math.isinf(logs[3])
    with pytest.raises(InvalidQueryError):
        osgood.growth_probe(-1.0, 2)


@pytest.mark.parametrize("gamma", [0.0, 1.0, 5.0, 10.0, 100.0])
def test_growth_margins_increase_past_double_range(gamma):
    margins = [osgood.growth_margin(gamma, i) for i in range(3, 12)]
    assert margins[0].depth == 0 and margins[0].mantissa > 0
    assert [m.depth for m in margins[1:]] == list(range(1, 9))
    assert all(osgood.tower_less(a, b) for a, b in zip(margins, margins[1:]))
    assert not any(osgood.tower_less(b, a) for a, b in zip(margins, margins[1:]))


def test_growth_margin_at_fourth_term_is_phi_three():
    margin = osgood.growth_margin(5.0, 4)
    assert margin.depth == 1
    assert margin.mantissa == pytest.approx(PHI_3, rel=1e-15)


def test_tower_comparison():
    lo, hi = osgood.PhiValue(0, 0, 2.0), osgood.PhiValue(0, 1, 1.0)
    assert osgood.tower_less(lo, hi)
    assert not osgood.tower_less(hi, lo)
    assert osgood.tower_less(osgood.PhiValue(0, 0, -5.0), osgood.PhiValue(0, 0, 0.0))
    assert not osgood.tower_less(osgood.PhiValue(0, 2, 800.0), osgood.PhiValue(0, 0, 1e300))
    assert not osgood.tower_less(osgood.PhiValue(0, 1, 3.0), osgood.PhiValue(0, 1, 3.0))


def test_construction_table_rows():
    rows = osgood.construction_table(5)
    assert [row.i for row in rows] == [1, 2, 3, 4, 5]
    assert rows[0].term == osgood.osgood_term(1)
    assert rows[-1].partial_sum == pytest.approx(osgood.osgood_partial_sum(5))
    assert float(rows[1].log_phi) == pytest.approx(PHI_1)
    assert float(rows[3].log_phi) == pytest.approx(PHI_3)
    assert rows[3].log_f_phi.startswith("exp^1(")
    assert rows[4].log_phi.startswith("exp^1(")


def test_quadratic_ode_blows_up_at_one():
    traj = osgood.ode_integrate(lambda s: s * s, 1.0, 2.0)
    assert traj.blew_up
    assert traj.blowup_time == pytest.approx(1.0, abs=1e-4)


def test_linear_ode_stays_finite():
    traj = osgood.ode_integrate(lambda s: s, 1.0, 1.0)
    assert traj.finite
    assert traj.x[-1] == pytest.approx(math.e, rel=1e-6)
    assert traj.evaluations > 0


def test_zero_start_stays_at_zero_for_bad_source():
    traj = osgood.ode_integrate(make_source("bad-osgood"), 0.0, 1.0)
    assert traj.finite
    assert np.all(traj.x == 0.0)


def test_bad_source_plateau_is_crossed_at_constant_rate():
    traj = osgood.ode_integrate(make_source("bad-osgood"), 1.0, 0.2)
    assert traj.x[-1] == pytest.approx(1.0 + 0.2 * (math.e - 1.0), rel=1e-8)


def test_bad_source_trajectory_stays_finite_beyond_double_range():
    traj = osgood.ode_integrate(make_source("bad-osgood"), PHI_2, 10.0)
    assert traj.finite
    assert traj.position is not None
    assert traj.position.index > osgood.DOUBLE_DEPTH
    assert 0.0 <= traj.position.elapsed <= 0.5


def test_start_past_hand_off_uses_segment_traversal():
    traj = osgood.ode_integrate(make_source("bad-osgood"), PHI_3 / 2 + 1.0, 3.0)
    assert traj.finite
    assert traj.evaluations == 0
    assert traj.position.index >= osgood.DOUBLE_DEPTH


def test_ode_argument_validation():
    with pytest.raises(InvalidQueryError):
        osgood.ode_integrate(lambda s: s, -1.0, 1.0)
    with pytest.raises(InvalidQueryError):
        osgood.ode_integrate(lambda s: s, 1.0, 0.0)
