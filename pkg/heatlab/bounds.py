"""Gaussian lower bounds for Dirichlet heat kernels and their verification sweeps."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Callable, Dict, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import InvalidQueryError, OutOfValidityError
from .kernel_core import (
    Box,
    GaussianParams,
    Interval,
    SeriesBudget,
    gaussian_kernel,
    gaussian_values,
    interval_kernel,
    standard_offsets,
    standard_times,
)

logger = logging.getLogger(__name__)

BETA = 1.0 - 2.0 / math.e
VIOLATION_THRESHOLD = -1e-12
DEFAULT_ROW_LIMIT = 1_000_000

Point = Union[float, Sequence[float]]


class BoundKind(str, Enum):
    """Lower bounds that the sweep harness knows how to verify."""

    SHORT_TIME_1D = "short-time-1d"
    SHORT_TIME_ND = "short-time-nd"
    ALL_TIME_1D = "all-time-1d"
    ALL_TIME_ND = "all-time-nd"
    CENTER = "center"
    SEMIGROUP = "semigroup"


@dataclass(frozen=True)
class SegmentClearance:
    """Distance ``eps`` from the segment ``[x, y]`` to the boundary."""

    eps: float

    def __post_init__(self) -> None:
        if not (self.eps > 0 and math.isfinite(self.eps)):
            raise InvalidQueryError(f"Segment clearance {self.eps!r} must be positive.")


def _eps(value: Union[SegmentClearance, float]) -> float:
    if isinstance(value, SegmentClearance):
        return value.eps
    return SegmentClearance(float(value)).eps


def _coords(point: Point) -> Tuple[float, ...]:
    return tuple(float(v) for v in np.atleast_1d(point))


def segment_clearance(dom: Union[Interval, Box], x: Point, y: Point) -> SegmentClearance:
    """Clearance of the segment ``[x, y]`` in a convex domain.

    For intervals and boxes the segment's distance to the boundary is attained
    at an endpoint, so only the endpoints are inspected.
    """

    xs, ys = _coords(x), _coords(y)
    if len(xs) != dom.n or len(ys) != dom.n:
        raise InvalidQueryError(f"Points must have {dom.n} coordinates.")
    eps = min(min(h - abs(xv), h - abs(yv)) for h, xv, yv in zip(dom.half_widths, xs, ys))
    if eps <= 0:
        raise InvalidQueryError("Segment clearance is undefined for points on or outside the boundary.")
    return SegmentClearance(eps)


def short_time_bound(n: int, eps: Union[SegmentClearance, float], x: Point, y: Point, t: float) -> float:
    """``beta^n G_n(x, y; t)``, asserted only for ``t <= eps^2 / n``."""

    e = _eps(eps)
    if t > e * e / n:
        raise OutOfValidityError(f"t={t:g} exceeds eps^2/n={e * e / n:g}; the short-time bound is not asserted there.")
    return BETA**n * gaussian_kernel(GaussianParams.from_points(x, y, t))


def raw_short_time_bound_1d(eps: Union[SegmentClearance, float], x: float, y: float, t: float) -> float:
    """``G_1(x, y; t) (1 - 2 exp(-eps^2 / t))``; negative once ``t > eps^2 / ln 2``."""

    e = _eps(eps)
    g = gaussian_kernel(GaussianParams.from_points(x, y, t))
    return g * (1.0 - 2.0 * math.exp(-e * e / t))


def all_time_bound(n: int, eps: Union[SegmentClearance, float], x: Point, y: Point, t: float) -> float:
    """``exp(-n^2 pi^2 t / 4 eps^2) G_n(x, y; t)``, valid for every ``t``."""

    e = _eps(eps)
    g = gaussian_kernel(GaussianParams.from_points(x, y, t))
    return math.exp(-n * n * math.pi * math.pi * t / (4.0 * e * e)) * g


def center_lower_bound(a: Union[float, Sequence[float]], t: float) -> float:
    """``(4 pi t)^(-1/2) exp(-pi^2 t / 4a^2)``, multiplied over axes for a box."""

    widths = _coords(a)
    if not all(h > 0 for h in widths):
        raise InvalidQueryError("Half-widths must be positive.")
    GaussianParams.from_points(0.0, 0.0, t)
    value = 1.0
    for h in widths:
        value *= math.exp(-math.pi * math.pi * t / (4.0 * h * h)) / math.sqrt(4.0 * math.pi * t)
    return value


def semigroup_bound(
    dom: Interval,
    eps: Union[SegmentClearance, float],
    x: float,
    y: float,
    t: float,
    b: Optional[SeriesBudget] = None,
) -> float:
    """``exp(-|x - y|^2 / 4t) K_eps(0, 0; t)`` on an interval."""

    if not isinstance(dom, Interval):
        raise InvalidQueryError("The semigroup bound is only available on intervals.")
    e = _eps(eps)
    if abs(x) > dom.a or abs(y) > dom.a:
        raise InvalidQueryError(f"Points must lie in [-{dom.a:g}, {dom.a:g}].")
    return math.exp(-((x - y) ** 2) / (4.0 * t)) * float(interval_kernel(Interval(e), 0.0, 0.0, t, b))


def small_time_inequality(s: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """``(1 - 2 e^{-1/s}) - e^{-s}``, nonnegative on ``(0, 1/(4 pi)]``."""

    s_arr = np.asarray(s, dtype=float)
    value = (1.0 - 2.0 * np.exp(-1.0 / s_arr)) - np.exp(-s_arr)
    return float(value) if np.ndim(s) == 0 else value


def small_time_samples(count: int = 1000) -> np.ndarray:
    """Equally spaced samples of ``(0, 1/(4 pi)]`` excluding zero."""

    return np.arange(1, count + 1, dtype=float) / count / (4.0 * math.pi)


# ---------------------------------------------------------------------------
# Sweeps


@dataclass(frozen=True)
class Violation:
    index: int
    x: Tuple[float, ...]
    y: Tuple[float, ...]
    t: float
    kernel: float
    bound: float
    slack: float


@dataclass
class SweepReport:
    """Kernel-minus-bound slack over a sweep grid.

    ``rows`` holds one entry per evaluated node in grid order unless the grid
    is larger than the row limit, in which case only the summary is kept.
    """

    kind: BoundKind
    domain: Tuple[float, ...]
    grid: Dict[str, Any]
    nodes: int = 0
    evaluated: int = 0
    min_slack: float = math.inf
    violations: List[Violation] = field(default_factory=list)
    rows: Optional[List[Tuple[Tuple[float, ...], Tuple[float, ...], float, float, float, float]]] = None

    @property
    def violation_count(self) -> int:
        return len(self.violations)

    @property
    def ok(self) -> bool:
        return not self.violations

    def summary(self) -> Dict[str, Any]:
        return {
            "kind": self.kind.value,
            "domain": list(self.domain),
            "grid": self.grid,
            "nodes": self.nodes,
            "evaluated": self.evaluated,
            "min_slack": self.min_slack if self.evaluated else None,
            "violation_count": self.violation_count,
        }

    def iter_rows(self) -> Iterator[Tuple[Tuple[float, ...], Tuple[float, ...], float, float, float, float]]:
        return iter(self.rows or [])


def _half_widths(dom: Union[Interval, Box]) -> Tuple[float, ...]:
    if isinstance(dom, (Interval, Box)):
        return dom.half_widths
    raise InvalidQueryError(f"Bounds are verified on intervals and boxes, not {type(dom).__name__}.")


def _product_grid(half_widths: Sequence[float], offsets: np.ndarray) -> np.ndarray:
    axes = [-h + 2.0 * h * offsets for h in half_widths]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _pair_tensor(per_axis: List[np.ndarray], combine: Callable[[np.ndarray, np.ndarray], np.ndarray]) -> np.ndarray:
    """Combine per-axis ``(m, m)`` pair matrices into the full ``(m^n, m^n)`` matrix.

    Point indices follow ``np.meshgrid(..., indexing="ij")`` ordering.
    """

    full = per_axis[0]
    for mat in per_axis[1:]:
        rows, m = full.shape[0], mat.shape[0]
        full = combine(full[:, None, :, None], mat[None, :, None, :]).reshape(rows * m, rows * m)
    return full


def sweep_verify(
    dom: Union[Interval, Box],
    kind: Union[BoundKind, str],
    *,
    points: int = 9,
    times: int = 25,
    b: Optional[SeriesBudget] = None,
    crossover: Optional[float] = None,
    row_limit: int = DEFAULT_ROW_LIMIT,
    progress_callback: Optional[Callable[[str], None]] = None,
) -> SweepReport:
    """Evaluate kernel minus bound over the standard grid.

    Args:
        dom: Interval or box to sweep.
        kind: Which bound to verify.
        points: Interior points per axis at fractions ``1/(points+1), ...`` of the width.
        times: Number of log-spaced times over ``[1e-4 a_min^2, 10 a_max^2]``.
        b: Series budget for the kernels.
        crossover: Images/eigen crossover constant.
        row_limit: Keep per-node rows only when the evaluated count stays below this.
        progress_callback: Receives one message per time level.

    Returns:
        A :class:`SweepReport`.  Violations are data; nothing is raised for them.
    """

    kind = BoundKind(kind)
    widths = _half_widths(dom)
    n = len(widths)
    if kind in (BoundKind.SHORT_TIME_1D, BoundKind.ALL_TIME_1D, BoundKind.SEMIGROUP) and n != 1:
        raise InvalidQueryError(f"Bound '{kind.value}' is one-dimensional; got a {n}-dimensional domain.")
    if points < 1 or times < 1:
        raise InvalidQueryError("A sweep needs at least one point and one time.")

    ts = standard_times(min(widths), max(widths), times)
    grid = {"points_per_axis": points, "times": times, "t_min": float(ts[0]), "t_max": float(ts[-1])}
    report = SweepReport(kind=kind, domain=tuple(widths), grid=grid)
    rows: List[Tuple[Tuple[float, ...], Tuple[float, ...], float, float, float, float]] = []
    axes = [Interval(h) for h in widths]

    if kind is BoundKind.CENTER:
        grid["points_per_axis"] = 1
        origin = tuple(0.0 for _ in widths)
        for index, t in enumerate(ts):
            kernel = 1.0
            for interval in axes:
                kernel *= float(interval_kernel(interval, 0.0, 0.0, t, b, crossover=crossover))
            bound = center_lower_bound(widths, t)
            _record(report, rows, index, origin, origin, float(t), kernel, bound)
        return _finish(report, rows, row_limit)

    offsets = standard_offsets(points)
    grid_points = _product_grid(widths, offsets)
    axis_nodes = [-h + 2.0 * h * offsets for h in widths]
    clear = np.min(np.stack([h - np.abs(grid_points[:, j]) for j, h in enumerate(widths)]), axis=0)
    eps = np.minimum.outer(clear, clear)
    pair_count = eps.size
    report.nodes = pair_count * len(ts)
    keep_rows = report.nodes <= row_limit

    dist_sq = _pair_tensor([np.subtract.outer(p, p) ** 2 for p in axis_nodes], np.add)
    unique_eps = np.empty(0)
    inverse = np.zeros(eps.shape, dtype=int)
    if kind is BoundKind.SEMIGROUP:
        unique_eps, inverse = np.unique(eps, return_inverse=True)
        inverse = inverse.reshape(eps.shape)

    for t_index, t in enumerate(ts):
        t = float(t)
        kernel = _pair_tensor(
            [np.asarray(interval_kernel(iv, *np.meshgrid(p, p, indexing="ij"), t, b, crossover=crossover))
             for iv, p in zip(axes, axis_nodes)],
            np.multiply,
        )
        gauss = gaussian_values(n, dist_sq, t)
        if kind is BoundKind.SHORT_TIME_1D:
            factor = 1.0 - 2.0 * np.exp(-eps * eps / t)
            valid = factor > 0
            bound = gauss * factor
        elif kind is BoundKind.SHORT_TIME_ND:
            valid = t <= eps * eps / n
            bound = BETA**n * gauss
        elif kind in (BoundKind.ALL_TIME_1D, BoundKind.ALL_TIME_ND):
            valid = np.ones(eps.shape, dtype=bool)
            bound = np.exp(-n * n * math.pi * math.pi * t / (4.0 * eps * eps)) * gauss
        else:
            centre = np.array([float(interval_kernel(Interval(float(e)), 0.0, 0.0, t, b, crossover=crossover))
                               for e in unique_eps])
            valid = np.ones(eps.shape, dtype=bool)
            bound = np.exp(-dist_sq / (4.0 * t)) * centre[inverse]
        slack = kernel - bound
        report.evaluated += int(np.count_nonzero(valid))
        if np.any(valid):
            report.min_slack = min(report.min_slack, float(slack[valid].min()))
        flat_valid = valid.ravel()
        bad = np.nonzero(flat_valid & (slack.ravel() < VIOLATION_THRESHOLD))[0]
        for pair in bad:
            i, j = divmod(int(pair), eps.shape[1])
            report.violations.append(
                Violation(
                    index=t_index * pair_count + int(pair),
                    x=tuple(grid_points[i]),
                    y=tuple(grid_points[j]),
                    t=t,
                    kernel=float(kernel.flat[pair]),
                    bound=float(bound.flat[pair]),
                    slack=float(slack.flat[pair]),
                )
            )
        if keep_rows:
            for pair in np.nonzero(flat_valid)[0]:
                i, j = divmod(int(pair), eps.shape[1])
                rows.append(
                    (tuple(grid_points[i]), tuple(grid_points[j]), t,
                     float(kernel.flat[pair]), float(bound.flat[pair]), float(slack.flat[pair]))
                )
        if progress_callback is not None:
            progress_callback(f"{kind.value}: t={t:.4g} ({t_index + 1}/{len(ts)})")

    report.rows = rows if keep_rows else None
    if report.violations:
        logger.warning("%s sweep found %d violations (min slack %.3g)", kind.value, report.violation_count, report.min_slack)
    return report


def _record(
    report: SweepReport,
    rows: List[Tuple[Tuple[float, ...], Tuple[float, ...], float, float, float, float]],
    index: int,
    x: Tuple[float, ...],
    y: Tuple[float, ...],
    t: float,
    kernel: float,
    bound: float,
) -> None:
    slack = kernel - bound
    report.nodes += 1
    report.evaluated += 1
    report.min_slack = min(report.min_slack, slack)
    rows.append((x, y, t, kernel, bound, slack))
    if slack < VIOLATION_THRESHOLD:
        report.violations.append(Violation(index, x, y, t, kernel, bound, slack))


def _finish(report: SweepReport, rows, row_limit: int) -> SweepReport:
    report.rows = rows if report.nodes <= row_limit else None
    if report.violations:
        logger.warning("%s sweep found %d violations", report.kind.value, report.violation_count)
    return report


# ---------------------------------------------------------------------------
# Image-sum profile on (0, 2a)


@dataclass
class ProfileCurves:
    """Kernel, bound and partial image sums along ``x`` in the ``(0, 2a)`` frame."""

    a: float
    y: float
    t: float
    x: np.ndarray
    kernel: np.ndarray
    bound: np.ndarray
    gaussian: np.ndarray
    one_subtraction: np.ndarray
    two_subtractions: np.ndarray
    refined_peak_x: float = math.nan

    @property
    def peak_x(self) -> float:
        """Grid node of the largest kernel value; off the true peak by up to one cell."""

        return float(self.x[int(np.argmax(self.kernel))])

    @property
    def cell(self) -> float:
        return float(self.x[1] - self.x[0]) if self.x.size > 1 else 0.0

    @property
    def dominates(self) -> bool:
        return bool(np.all(self.kernel - self.bound >= VIOLATION_THRESHOLD))


def bound_profile(
    a: float = 0.5,
    y: float = 0.2,
    t: float = 0.02,
    *,
    points: int = 21,
    b: Optional[SeriesBudget] = None,
) -> ProfileCurves:
    """Kernel on ``[0, 2a]`` from a source at ``y`` with its short-time bound.

    The bound is ``G_1 (1 - 2 exp(-eps^2/t))`` with ``eps`` the clearance of
    ``[x, y]``; it turns negative near the walls where ``eps`` shrinks.  A
    bounded scalar search between the neighbours of the best grid node refines
    the peak, which the near-wall image pushes away from ``y``.
    """

    dom = Interval(a)
    if not (0.0 < y < 2.0 * a):
        raise InvalidQueryError(f"Source y={y:g} must lie inside (0, {2 * a:g}).")
    if points < 2:
        raise InvalidQueryError("A profile needs at least two points.")
    xs = np.linspace(0.0, 2.0 * a, points)
    kernel = np.asarray(interval_kernel(dom, dom.unshift(xs), float(dom.unshift(y)), t, b))
    gauss = gaussian_values(1, (xs - y) ** 2, t)
    right_wall = gaussian_values(1, (xs - (4.0 * a - y)) ** 2, t)
    left_wall = gaussian_values(1, (xs + y) ** 2, t)
    k = int(np.argmax(kernel))
    lo, hi = xs[max(k - 1, 0)], xs[min(k + 1, points - 1)]
    peak = minimize_scalar(
        lambda x: -float(interval_kernel(dom, float(dom.unshift(x)), float(dom.unshift(y)), t, b)),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-10},
    )
    eps = np.minimum(np.minimum(xs, 2.0 * a - xs), min(y, 2.0 * a - y))
    factor = 1.0 - 2.0 * np.exp(-eps * eps / t)
    return ProfileCurves(
        a=a,
        y=y,
        t=t,
        x=xs,
        kernel=kernel,
        bound=gauss * factor,
        gaussian=gauss,
        one_subtraction=gauss - right_wall,
        two_subtractions=gauss - right_wall - left_wall,
        refined_peak_x=float(peak.x),
    )


__all__ = [
    "BETA",
    "VIOLATION_THRESHOLD",
    "BoundKind",
    "SegmentClearance",
    "Violation",
    "SweepReport",
    "ProfileCurves",
    "segment_clearance",
    "short_time_bound",
    "raw_short_time_bound_1d",
    "all_time_bound",
    "center_lower_bound",
    "semigroup_bound",
    "small_time_inequality",
    "small_time_samples",
    "sweep_verify",
    "bound_profile",
]
