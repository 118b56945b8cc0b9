"""Sine eigenfunction series for the Dirichlet kernel on ``(-a, a)``."""

from __future__ import annotations

import logging
import math

import numpy as np

from .errors import SeriesBudgetExceeded
from .kernel_core import SeriesBudget, SeriesResult

logger = logging.getLogger(__name__)

METHOD = "eigen"

# Absolute floor on the stopping rule, for points where the kernel is zero.
_TINY = 1e-300


def eigen_tail_bound(a: float, t: float, k: int) -> float:
    """Bound on ``sum_{j > k} (1/a) exp(-j^2 pi^2 t / 4a^2)``."""

    c = math.pi * math.pi * t / (4.0 * a * a)
    return math.exp(-((k + 1) ** 2) * c) / (a * -math.expm1(-(2 * k + 3) * c))


def evaluate(
    a: float,
    x: np.ndarray,
    y: np.ndarray,
    t: float,
    budget: SeriesBudget,
    *,
    strict: bool = True,
) -> SeriesResult:
    """Sum ``(1/a) sum_k exp(-k^2 pi^2 t / 4a^2) sin(k pi x~ / 2a) sin(k pi y~ / 2a)``.

    Summation stops once the remaining envelope is below ``tol`` times every
    partial sum, or at ``k_max_cap`` terms.
    """

    xb, yb = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    theta_x = (xb + a) * (math.pi / (2.0 * a))
    theta_y = (yb + a) * (math.pi / (2.0 * a))
    c = math.pi * math.pi * t / (4.0 * a * a)
    partial = np.zeros(xb.shape)
    converged = np.zeros(xb.shape, dtype=bool)
    tail = math.inf
    terms = 0
    for k in range(1, budget.k_max_cap + 1):
        partial += math.exp(-k * k * c) / a * np.sin(k * theta_x) * np.sin(k * theta_y)
        terms = k
        tail = eigen_tail_bound(a, t, k)
        converged = tail <= budget.tol * np.abs(partial) + _TINY
        if np.all(converged):
            break
    if not np.all(converged) and strict:
        raise SeriesBudgetExceeded(
            METHOD,
            terms,
            tail,
            f"Eigen series did not converge within {budget.k_max_cap} terms at a={a:g}, t={t:g}; "
            "use the image series for small t.",
        )
    logger.debug("eigen series a=%g t=%g terms=%d tail=%.3g", a, t, terms, tail)
    return SeriesResult(
        values=np.maximum(partial, 0.0),
        method=METHOD,
        terms=terms,
        tail_bound=tail,
        converged=np.asarray(converged, dtype=bool),
    )
