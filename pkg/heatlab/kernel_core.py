"""Gaussian and Dirichlet heat kernels on intervals, boxes and balls.

The interval kernel has two independent series representations, the method of
images and the sine eigenfunction expansion.  Each lives in its own backend
module registered below; :func:`interval_kernel` picks one from the ratio
``t / a**2`` and :func:`box_kernel` multiplies interval kernels axis by axis.

All points use the centred convention: the interval is ``(-a, a)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from importlib import import_module
from types import ModuleType
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import InvalidQueryError, SeriesBudgetExceeded

logger = logging.getLogger(__name__)

T_MIN = 1e-12
DEFAULT_CROSSOVER = 1.0

ArrayLike = Union[float, Sequence[float], np.ndarray]


def _check_time(t: float) -> float:
    t = float(t)
    if not math.isfinite(t) or t < T_MIN:
        raise InvalidQueryError(f"Time t={t!r} is below the floor t_min={T_MIN:g}.")
    return t


@dataclass(frozen=True)
class GaussianParams:
    """Arguments of the whole-space kernel ``G_n(x, y; t)``."""

    n: int
    x: Tuple[float, ...]
    y: Tuple[float, ...]
    t: float

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidQueryError(f"Dimension n={self.n} must be at least 1.")
        if len(self.x) != self.n or len(self.y) != self.n:
            raise InvalidQueryError(f"Points must have {self.n} coordinates.")
        if not all(math.isfinite(v) for v in self.x + self.y):
            raise InvalidQueryError("Points must be finite.")
        _check_time(self.t)

    @classmethod
    def from_points(cls, x: ArrayLike, y: ArrayLike, t: float) -> "GaussianParams":
        """Build parameters from scalars (n = 1) or coordinate sequences."""

        xs = tuple(float(v) for v in np.atleast_1d(x))
        ys = tuple(float(v) for v in np.atleast_1d(y))
        return cls(n=len(xs), x=xs, y=ys, t=float(t))


@dataclass(frozen=True)
class Interval:
    """The centred interval ``(-a, a)``."""

    a: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.a) and self.a > 0):
            raise InvalidQueryError(f"Interval half-width a={self.a!r} must be positive.")

    @property
    def n(self) -> int:
        return 1

    @property
    def half_widths(self) -> Tuple[float, ...]:
        return (self.a,)

    def shift(self, x: ArrayLike) -> np.ndarray:
        """Map centred coordinates to the ``(0, 2a)`` frame."""

        return np.asarray(x, dtype=float) + self.a

    def unshift(self, x: ArrayLike) -> np.ndarray:
        """Map ``(0, 2a)`` coordinates back to the centred frame."""

        return np.asarray(x, dtype=float) - self.a


@dataclass(frozen=True)
class Box:
    """Axis-aligned box centred at the origin."""

    half_widths: Tuple[float, ...]

    def __post_init__(self) -> None:
        widths = tuple(float(h) for h in self.half_widths)
        if not widths:
            raise InvalidQueryError("A box needs at least one half-width.")
        if not all(math.isfinite(h) and h > 0 for h in widths):
            raise InvalidQueryError(f"Box half-widths {widths} must all be positive.")
        object.__setattr__(self, "half_widths", widths)

    @property
    def n(self) -> int:
        return len(self.half_widths)

    def axes(self) -> List[Interval]:
        return [Interval(h) for h in self.half_widths]


@dataclass(frozen=True)
class Ball:
    """Ball of the given radius in ``R^n``, used only for radial problems."""

    radius: float
    n: int = 1

    def __post_init__(self) -> None:
        if not (math.isfinite(self.radius) and self.radius > 0):
            raise InvalidQueryError(f"Ball radius {self.radius!r} must be positive.")
        if self.n < 1:
            raise InvalidQueryError(f"Dimension n={self.n} must be at least 1.")


Domain = Union[Interval, Box, Ball]


@dataclass(frozen=True)
class SeriesBudget:
    """Truncation controls shared by both interval series."""

    tol: float = 1e-12
    k_max_cap: int = 512

    def __post_init__(self) -> None:
        if not (0.0 < self.tol < 1.0):
            raise InvalidQueryError(f"Series tolerance {self.tol!r} must lie in (0, 1).")
        if self.k_max_cap < 1:
            raise InvalidQueryError(f"k_max_cap={self.k_max_cap} must be at least 1.")


@dataclass
class SeriesResult:
    """Values returned by a series backend together with truncation diagnostics."""

    values: np.ndarray
    method: str
    terms: int
    tail_bound: float
    converged: np.ndarray = field(default_factory=lambda: np.ones(0, dtype=bool))

    @property
    def all_converged(self) -> bool:
        return bool(np.all(self.converged))


def gaussian_kernel(p: GaussianParams) -> float:
    """Return ``(4 pi t)^(-n/2) exp(-|x - y|^2 / 4t)``."""

    dist_sq = sum((xi - yi) ** 2 for xi, yi in zip(p.x, p.y))
    return float((4.0 * math.pi * p.t) ** (-0.5 * p.n) * math.exp(-dist_sq / (4.0 * p.t)))


def gaussian_values(n: int, dist_sq: ArrayLike, t: ArrayLike) -> np.ndarray:
    """Vectorised ``G_n`` from squared distances; used by the sweep harnesses."""

    dist_sq = np.asarray(dist_sq, dtype=float)
    t = np.asarray(t, dtype=float)
    return (4.0 * np.pi * t) ** (-0.5 * n) * np.exp(-dist_sq / (4.0 * t))


# ---------------------------------------------------------------------------
# Series registry

_SERIES_REGISTRY: Dict[str, str] = {}
_DEFAULT_SERIES = "images"


def register_series(identifier: str, module_path: str) -> None:
    """Register a series backend import path under ``identifier``."""

    _SERIES_REGISTRY[identifier.lower()] = module_path


def available_series() -> List[str]:
    """Return the list of registered series identifiers."""

    return sorted(_SERIES_REGISTRY)


def _resolve_series_name(identifier: Optional[str]) -> str:
    key = (identifier or _DEFAULT_SERIES).lower()
    if key not in _SERIES_REGISTRY:
        available = ", ".join(available_series()) or "none"
        name = identifier if identifier is not None else _DEFAULT_SERIES
        raise InvalidQueryError(f"Unknown kernel series '{name}'. Available options: {available}.")
    return key


def get_series(identifier: Optional[str] = None) -> ModuleType:
    """Return the module implementing the requested series."""

    key = _resolve_series_name(identifier)
    return import_module(_SERIES_REGISTRY[key])


register_series("images", "heatlab.images_backend")
register_series("eigen", "heatlab.eigen_backend")


# ---------------------------------------------------------------------------
# Interval and box kernels


def _interval_points(dom: Interval, x: ArrayLike, y: ArrayLike) -> Tuple[np.ndarray, np.ndarray]:
    xb, yb = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if not (np.all(np.isfinite(xb)) and np.all(np.isfinite(yb))):
        raise InvalidQueryError("Kernel points must be finite.")
    if np.any(np.abs(xb) > dom.a) or np.any(np.abs(yb) > dom.a):
        raise InvalidQueryError(f"Kernel points must lie in the closed interval [-{dom.a:g}, {dom.a:g}].")
    return xb, yb


def evaluate_series(
    dom: Interval,
    x: ArrayLike,
    y: ArrayLike,
    t: float,
    b: Optional[SeriesBudget] = None,
    *,
    method: Optional[str] = None,
    strict: bool = True,
) -> SeriesResult:
    """Evaluate one series on broadcast ``(x, y)`` arrays.

    Boundary points are answered with 0 without consulting the series.  With
    ``strict`` a backend that runs out of budget raises
    :class:`SeriesBudgetExceeded`; otherwise unconverged entries are flagged in
    ``SeriesResult.converged``.
    """

    t = _check_time(t)
    budget = b or SeriesBudget()
    xb, yb = _interval_points(dom, x, y)
    on_edge = (np.abs(xb) >= dom.a) | (np.abs(yb) >= dom.a)
    backend = get_series(method)
    result = backend.evaluate(
        dom.a,
        np.where(on_edge, 0.0, xb),
        np.where(on_edge, 0.0, yb),
        t,
        budget,
        strict=strict,
    )
    result.values = np.where(on_edge, 0.0, result.values)
    result.converged = result.converged | on_edge
    return result


def _as_output(values: np.ndarray, x: ArrayLike, y: ArrayLike) -> Union[float, np.ndarray]:
    if np.ndim(x) == 0 and np.ndim(y) == 0:
        return float(values)
    return values


def interval_kernel_images(
    dom: Interval, x: ArrayLike, y: ArrayLike, t: float, b: Optional[SeriesBudget] = None
) -> Union[float, np.ndarray]:
    """Dirichlet kernel on ``(-a, a)`` by the method of images."""

    return _as_output(evaluate_series(dom, x, y, t, b, method="images").values, x, y)


def interval_kernel_eigen(
    dom: Interval, x: ArrayLike, y: ArrayLike, t: float, b: Optional[SeriesBudget] = None
) -> Union[float, np.ndarray]:
    """Dirichlet kernel on ``(-a, a)`` by the sine eigenfunction series."""

    return _as_output(evaluate_series(dom, x, y, t, b, method="eigen").values, x, y)


def select_series(dom: Interval, t: float, crossover: Optional[float] = None) -> str:
    """Return ``"images"`` when ``t <= a^2 * crossover`` and ``"eigen"`` otherwise."""

    c_cross = DEFAULT_CROSSOVER if crossover is None else float(crossover)
    if c_cross <= 0:
        raise InvalidQueryError(f"Crossover constant {c_cross!r} must be positive.")
    return "images" if t <= dom.a * dom.a * c_cross else "eigen"


def interval_kernel(
    dom: Interval,
    x: ArrayLike,
    y: ArrayLike,
    t: float,
    b: Optional[SeriesBudget] = None,
    *,
    crossover: Optional[float] = None,
    method: Optional[str] = None,
) -> Union[float, np.ndarray]:
    """Dirichlet kernel on ``(-a, a)``, dispatching on ``t / a^2``.

    Args:
        dom: The interval.
        x, y: Scalars or broadcastable arrays in ``[-a, a]``.
        t: Time, at least :data:`T_MIN`.
        b: Truncation budget; defaults to ``SeriesBudget()``.
        crossover: ``c_cross``; images are used when ``t <= a^2 * c_cross``.
        method: Force a registered series instead of dispatching.

    Returns:
        A float for scalar arguments, otherwise an array of kernel values.
    """

    t = _check_time(t)
    chosen = method or select_series(dom, t, crossover)
    logger.debug("interval kernel a=%g t=%g via %s", dom.a, t, chosen)
    return _as_output(evaluate_series(dom, x, y, t, b, method=chosen).values, x, y)


def box_kernel(
    dom: Box,
    x: ArrayLike,
    y: ArrayLike,
    t: float,
    b: Optional[SeriesBudget] = None,
    *,
    crossover: Optional[float] = None,
) -> Union[float, np.ndarray]:
    """Dirichlet kernel on a box as the product of per-axis interval kernels.

    ``x`` and ``y`` carry the coordinates on their last axis, so a single point
    is a length-``n`` sequence and a batch is an ``(..., n)`` array.
    """

    xs = np.asarray(x, dtype=float)
    ys = np.asarray(y, dtype=float)
    if xs.shape[-1:] != (dom.n,) or ys.shape[-1:] != (dom.n,):
        raise InvalidQueryError(f"Box points must have {dom.n} coordinates.")
    for axis, h in enumerate(dom.half_widths):
        if np.any(np.abs(xs[..., axis]) > h) or np.any(np.abs(ys[..., axis]) > h):
            raise InvalidQueryError(f"Point outside the box with half-widths {dom.half_widths}.")
    value: Union[float, np.ndarray] = 1.0
    for axis, interval in enumerate(dom.axes()):
        value = value * np.asarray(
            interval_kernel(interval, xs[..., axis], ys[..., axis], t, b, crossover=crossover)
        )
    if xs.ndim == 1 and ys.ndim == 1:
        return float(value)
    return np.asarray(value)


# ---------------------------------------------------------------------------
# Cross-validation of the two series


@dataclass
class CrossValidation:
    """Outcome of comparing image and eigen series on a grid."""

    compared: int = 0
    skipped: int = 0
    worst_ratio: float = 0.0
    failures: List[Tuple[float, float, float, float, float]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def series_agree(k_images: ArrayLike, k_eigen: ArrayLike, t: float, rel: float = 1e-10) -> np.ndarray:
    """Elementwise agreement test between the two series.

    The absolute floor is tied to the Gaussian scale ``(4 pi t)^(-1/2)`` so
    values that underflow relative to it are compared absolutely.
    """

    k_images = np.asarray(k_images, dtype=float)
    k_eigen = np.asarray(k_eigen, dtype=float)
    allowed = rel * np.maximum(np.abs(k_images), np.abs(k_eigen)) + 1e-11 / math.sqrt(4.0 * math.pi * t)
    return np.abs(k_images - k_eigen) <= allowed


def standard_offsets(points: int = 9) -> np.ndarray:
    """Interior fractions ``0.1, ..., 0.9`` of the full width used by sweeps."""

    return np.arange(1, points + 1, dtype=float) / (points + 1)


def standard_times(a_min: float, a_max: float, count: int = 25) -> np.ndarray:
    """Log-spaced times over ``[1e-4 a_min^2, 10 a_max^2]``."""

    return np.geomspace(1e-4 * a_min * a_min, 10.0 * a_max * a_max, count)


def cross_validate(
    half_widths: Iterable[float] = (0.25, 0.5, 1.0),
    *,
    points: int = 9,
    times: int = 25,
    b: Optional[SeriesBudget] = None,
) -> CrossValidation:
    """Compare both series on the standard grid wherever both converge."""

    budget = b or SeriesBudget()
    report = CrossValidation()
    for a in half_widths:
        dom = Interval(float(a))
        nodes = -dom.a + 2.0 * dom.a * standard_offsets(points)
        xx, yy = np.meshgrid(nodes, nodes, indexing="ij")
        for t in standard_times(dom.a, dom.a, times):
            images = evaluate_series(dom, xx, yy, t, budget, method="images", strict=False)
            eigen = evaluate_series(dom, xx, yy, t, budget, method="eigen", strict=False)
            both = images.converged & eigen.converged
            report.skipped += int(np.count_nonzero(~both))
            report.compared += int(np.count_nonzero(both))
            allowed = 1e-10 * np.maximum(images.values, eigen.values) + 1e-11 / math.sqrt(4.0 * math.pi * t)
            ratio = np.where(both, np.abs(images.values - eigen.values) / allowed, 0.0)
            report.worst_ratio = max(report.worst_ratio, float(ratio.max()))
            for i, j in zip(*np.nonzero(ratio > 1.0)):
                report.failures.append(
                    (dom.a, float(xx[i, j]), float(yy[i, j]), float(t), float(images.values[i, j] - eigen.values[i, j]))
                )
    if report.failures:
        logger.warning("Series cross-validation found %d disagreements", len(report.failures))
    return report


__all__ = [
    "T_MIN",
    "DEFAULT_CROSSOVER",
    "GaussianParams",
    "Interval",
    "Box",
    "Ball",
    "Domain",
    "SeriesBudget",
    "SeriesResult",
    "SeriesBudgetExceeded",
    "gaussian_kernel",
    "gaussian_values",
    "register_series",
    "available_series",
    "get_series",
    "evaluate_series",
    "interval_kernel_images",
    "interval_kernel_eigen",
    "select_series",
    "interval_kernel",
    "box_kernel",
    "CrossValidation",
    "series_agree",
    "standard_offsets",
    "standard_times",
    "cross_validate",
]
