"""Method-of-images series for the Dirichlet kernel on ``(-a, a)``.

Positive sources sit at ``y + 4ka`` and negative ones at ``-y + 2a(2k - 1)``.
Shells are added symmetrically until the Gaussian tail of every omitted image
is below ``tol * (4 pi t)^(-1/2)``.
"""

from __future__ import annotations

import logging
import math
from typing import Tuple

import numpy as np

from .errors import SeriesBudgetExceeded
from .kernel_core import SeriesBudget, SeriesResult

logger = logging.getLogger(__name__)

METHOD = "images"


def image_tail_bound(a: float, t: float, shells: int) -> float:
    """Bound on the omitted images, relative to ``(4 pi t)^(-1/2)``.

    The nearest omitted image lies at least ``d = 4 (K + 1) a`` away from any
    pair of points in the interval and successive images are ``4a`` apart on
    each side, which gives a geometric tail on both sides and for both signs.
    """

    d = 4.0 * (shells + 1) * a
    ratio = -math.expm1(-2.0 * a * d / t)
    return 4.0 * math.exp(-d * d / (4.0 * t)) / ratio


def image_shells(a: float, t: float, budget: SeriesBudget) -> Tuple[int, float]:
    """Return the smallest shell count meeting the tolerance and its tail bound."""

    tail = math.inf
    for shells in range(budget.k_max_cap + 1):
        tail = image_tail_bound(a, t, shells)
        if tail < budget.tol:
            return shells, tail
    raise SeriesBudgetExceeded(
        METHOD,
        budget.k_max_cap,
        tail,
        f"Image series needs more than {budget.k_max_cap} shells at a={a:g}, t={t:g}; "
        "use the eigen series for large t.",
    )


def evaluate(
    a: float,
    x: np.ndarray,
    y: np.ndarray,
    t: float,
    budget: SeriesBudget,
    *,
    strict: bool = True,
) -> SeriesResult:
    """Evaluate the truncated image sum at broadcast points."""

    try:
        shells, tail = image_shells(a, t, budget)
    except SeriesBudgetExceeded:
        if strict:
            raise
        shape = np.broadcast(x, y).shape
        return SeriesResult(
            values=np.full(shape, np.nan),
            method=METHOD,
            terms=0,
            tail_bound=math.inf,
            converged=np.zeros(shape, dtype=bool),
        )

    positive = np.arange(-(shells + 1), shells + 2, dtype=float)
    negative = np.arange(-shells, shells + 2, dtype=float)
    diff = (x - y)[..., None] - 4.0 * a * positive
    total = (x + y)[..., None] - 2.0 * a * (2.0 * negative - 1.0)
    scale = 1.0 / math.sqrt(4.0 * math.pi * t)
    values = scale * (
        np.exp(-diff * diff / (4.0 * t)).sum(axis=-1) - np.exp(-total * total / (4.0 * t)).sum(axis=-1)
    )
    values = np.maximum(values, 0.0)
    logger.debug("image series a=%g t=%g shells=%d tail=%.3g", a, t, shells, tail)
    return SeriesResult(
        values=values,
        method=METHOD,
        terms=positive.size + negative.size,
        tail_bound=tail,
        converged=np.ones(values.shape, dtype=bool),
    )
