"""Tests for the Gaussian lower bounds and sweep harness in :mod:`heatlab.bounds`."""

from __future__ import annotations

import math
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from heatlab import bounds  # noqa: E402
from heatlab.bounds import BoundKind  # noqa: E402
from heatlab.errors import InvalidQueryError, OutOfValidityError  # noqa: E402
from heatlab.kernel_core import Box, Interval, interval_kernel  # noqa: E402


def _sweep(dom, kind, points=5, times=9, **kwargs):
    return bounds.sweep_verify(dom, kind, points=points, times=times, **kwargs)


def test_beta_constant():
    assert bounds.BETA == pytest.approx(0.26424111765711533, rel=1e-15)


def test_segment_clearance_uses_nearest_endpoint():
    eps = bounds.segment_clearance(Interval(0.5), 0.1, -0.3)
    assert eps.eps == pytest.approx(0.2)
    box_eps = bounds.segment_clearance(Box((1.0, 0.5)), (0.5, 0.1), (0.0, -0.2))
    assert box_eps.eps == pytest.approx(0.3)


def test_segment_clearance_rejects_boundary_points():
    with pytest.raises(InvalidQueryError):
        bounds.segment_clearance(Interval(0.5), 0.5, 0.0)


def test_short_time_bound_refuses_times_outside_validity():
    with pytest.raises(OutOfValidityError):
        bounds.short_time_bound(2, 0.1, (0.0, 0.0), (0.0, 0.0), 0.006)
    value = bounds.short_time_bound(2, 0.1, (0.0, 0.0), (0.0, 0.0), 0.005)
    assert value == pytest.approx(bounds.BETA**2 / (4 * math.pi * 0.005))


def test_raw_bound_turns_negative_past_log_two():
    eps = 0.1
    assert bounds.raw_short_time_bound_1d(eps, 0.0, 0.0, 0.9 * eps * eps / math.log(2)) > 0
    assert bounds.raw_short_time_bound_1d(eps, 0.0, 0.0, 1.1 * eps * eps / math.log(2)) < 0


def test_short_time_bound_holds_at_validity_edge():
    dom = Interval(0.5)
    x, y = 0.1, -0.1
    eps = bounds.segment_clearance(dom, x, y)
    t = eps.eps**2
    assert interval_kernel(dom, x, y, t) >= bounds.short_time_bound(1, eps, x, y, t)


@settings(max_examples=50, deadline=None)
@given(
    eps=st.floats(min_value=0.05, max_value=1.0),
    d=st.floats(min_value=0.0, max_value=0.5),
    t1=st.floats(min_value=1e-4, max_value=5.0),
    factor=st.floats(min_value=1.01, max_value=10.0),
)
def test_all_time_bound_decreases_in_time_on_diagonal(eps, d, t1, factor):
    for n in (1, 2):
        x = (d,) * n
        early = bounds.all_time_bound(n, eps, x, x, t1)
        late = bounds.all_time_bound(n, eps, x, x, t1 * factor)
        assert late <= early


@pytest.mark.parametrize("a", [0.25, 0.5, 1.0])
def test_center_bound_below_kernel_at_origin(a):
    for t in np.geomspace(1e-4 * a * a, 10 * a * a, 15):
        assert interval_kernel(Interval(a), 0.0, 0.0, t) >= bounds.center_lower_bound(a, t) - 1e-12


def test_center_bound_on_box_is_product():
    t = 0.05
    expected = bounds.center_lower_bound(1.0, t) * bounds.center_lower_bound(0.5, t)
    assert bounds.center_lower_bound((1.0, 0.5), t) == pytest.approx(expected, rel=1e-14)


def test_semigroup_bound_below_kernel():
    dom = Interval(0.5)
    x, y = 0.2, -0.1
    eps = bounds.segment_clearance(dom, x, y)
    for t in (1e-3, 1e-2, 0.1, 1.0):
        assert interval_kernel(dom, x, y, t) - bounds.semigroup_bound(dom, eps, x, y, t) >= -1e-12


def test_semigroup_bound_requires_interval():
    with pytest.raises(InvalidQueryError):
        bounds.semigroup_bound(Box((1.0,)), 0.1, 0.0, 0.0, 0.1)


def test_small_time_inequality_holds_on_samples_only():
    samples = bounds.small_time_samples()
    assert samples.size == 1000
    assert samples[-1] == pytest.approx(1 / (4 * math.pi))
    assert np.all(bounds.small_time_inequality(samples) >= 0)
    assert bounds.small_time_inequality(1.0) < 0


@pytest.mark.parametrize(
    "dom, kind",
    [
        (Interval(0.5), BoundKind.SHORT_TIME_1D),
        (Interval(0.5), BoundKind.SHORT_TIME_ND),
        (Box((1.0, 1.0)), BoundKind.SHORT_TIME_ND),
        (Interval(0.5), BoundKind.ALL_TIME_1D),
        (Box((1.0, 1.0)), BoundKind.ALL_TIME_ND),
        (Interval(0.5), BoundKind.CENTER),
        (Box((1.0, 0.5)), BoundKind.CENTER),
        (Interval(0.5), BoundKind.SEMIGROUP),
    ],
)
def test_sweeps_find_no_violations(dom, kind):
    report = _sweep(dom, kind)
    assert report.ok, report.violations[:3]
    assert report.evaluated > 0
    assert report.min_slack >= bounds.VIOLATION_THRESHOLD


def test_three_dimensional_short_time_sweep():
    report = _sweep(Box((1.0, 1.0, 1.0)), BoundKind.SHORT_TIME_ND, points=3, times=5)
    assert report.ok
    assert report.nodes == 27 * 27 * 5


def test_short_time_nd_sweep_only_counts_valid_nodes():
    report = _sweep(Interval(0.5), BoundKind.SHORT_TIME_ND, points=3, times=6)
    assert 0 < report.evaluated < report.nodes
    assert all(row[2] <= bounds.segment_clearance(Interval(0.5), row[0], row[1]).eps ** 2 + 1e-15 for row in report.iter_rows())


def test_sweep_rows_follow_grid_and_respect_row_limit():
    report = _sweep(Interval(0.5), BoundKind.ALL_TIME_1D, points=3, times=2)
    rows = list(report.iter_rows())
    assert len(rows) == report.evaluated == 18
    x, y, t, kernel, bound, slack = rows[0]
    assert slack == pytest.approx(kernel - bound)
    limited = _sweep(Interval(0.5), BoundKind.ALL_TIME_1D, points=3, times=2, row_limit=1)
    assert limited.rows is None
    assert list(limited.iter_rows()) == []


def test_one_dimensional_kinds_reject_boxes():
    with pytest.raises(InvalidQueryError):
        _sweep(Box((1.0, 1.0)), BoundKind.SHORT_TIME_1D)
    with pytest.raises(InvalidQueryError):
        _sweep(Box((1.0, 1.0)), BoundKind.SEMIGROUP)


def test_unknown_kind_is_rejected():
    with pytest.raises(ValueError):
        _sweep(Interval(0.5), "long-time")


def test_sweep_reports_violations_for_an_overstated_bound(monkeypatch):
    """Inflating beta above 1 must be caught as a violation, not raised."""

    monkeypatch.setattr(bounds, "BETA", 1.5)
    report = _sweep(Interval(0.5), BoundKind.SHORT_TIME_ND, points=3, times=5)
    assert not report.ok
    assert report.violation_count > 0
    assert all(v.slack < bounds.VIOLATION_THRESHOLD for v in report.violations)
    indices = [v.index for v in report.violations]
    assert indices == sorted(indices)


def test_sweep_progress_callback_called_per_time():
    messages = []
    _sweep(Interval(0.5), BoundKind.ALL_TIME_1D, points=3, times=4, progress_callback=messages.append)
    assert len(messages) == 4


def test_profile_kernel_dominates_bound_and_peaks_near_source():
    curves = bounds.bound_profile(a=0.5, y=0.2, t=0.02)
    assert curves.x.size == 21
    assert curves.dominates
    assert abs(curves.peak_x - 0.2) <= curves.cell + 1e-12
    assert np.all(curves.kernel <= curves.gaussian + 1e-12)
    assert curves.kernel[0] == 0.0 and curves.kernel[-1] == 0.0


def test_refined_peak_sits_between_grid_nodes_past_the_source():
    """The image in the near wall pushes the peak from y = 0.2 to about 0.24."""

    curves = bounds.bound_profile(a=0.5, y=0.2, t=0.02)
    assert curves.peak_x == pytest.approx(0.25)
    assert curves.refined_peak_x == pytest.approx(0.2399, abs=1e-3)
    assert abs(curves.refined_peak_x - curves.peak_x) <= curves.cell
    fine = bounds.bound_profile(a=0.5, y=0.2, t=0.02, points=201)
    assert fine.refined_peak_x == pytest.approx(curves.refined_peak_x, abs=1e-6)


def test_profile_bound_negative_near_walls():
    curves = bounds.bound_profile(a=0.5, y=0.2, t=0.02)
    assert curves.bound[0] < 0
    assert curves.bound[-1] < 0


def test_profile_rejects_source_outside_frame():
    with pytest.raises(InvalidQueryError):
        bounds.bound_profile(a=0.5, y=1.2)
