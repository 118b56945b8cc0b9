"""Linear evolution of the singular data ``|x|^-alpha`` cut off at radius ``R``.

The profile is computed by quadrature of a heat kernel against the data.  The
only singularity, at the origin, is removed by the substitution
``s = rho^(n - alpha)`` which turns ``rho^(n - 1 - alpha) d rho`` into a
constant multiple of ``ds``.  Composite Simpson on a fixed panel count gives
the value and the comparison with half the panels gives a Richardson error
estimate.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import simpson
from scipy.special import gammaln, ive

from .errors import InvalidQueryError, NumericalFailure
from .kernel_core import T_MIN, Ball, Interval, SeriesBudget, gaussian_values, interval_kernel

logger = logging.getLogger(__name__)

DEFAULT_PANELS = 2048
WINDOW_WIDTHS = 12.0
ERROR_TARGET = 1e-8
ERROR_LIMIT = 1e-3
ERROR_FLOOR = 1e-12

EvolutionDomain = Optional[Union[Interval, Ball]]


@dataclass(frozen=True)
class SingularData:
    """``min(cap, |x|^-alpha)`` on ``|x| <= R`` and zero outside."""

    alpha: float
    R: float
    cap: float = math.inf
    n: int = 1

    def __post_init__(self) -> None:
        if self.n < 1:
            raise InvalidQueryError(f"Dimension n={self.n} must be at least 1.")
        if not (0.0 < self.alpha < self.n):
            raise InvalidQueryError(f"alpha={self.alpha!r} must lie in (0, n={self.n}).")
        if not (self.R > 0 and math.isfinite(self.R)):
            raise InvalidQueryError(f"Support radius R={self.R!r} must be positive.")
        if not self.cap > self.R ** (-self.alpha):
            raise InvalidQueryError(f"cap={self.cap!r} must exceed R^-alpha={self.R ** -self.alpha:g}.")

    @property
    def cap_radius(self) -> float:
        """Radius inside which the cap is active (0 when uncapped)."""

        if math.isinf(self.cap):
            return 0.0
        return self.cap ** (-1.0 / self.alpha)

    def with_cap(self, cap: float) -> "SingularData":
        return SingularData(self.alpha, self.R, cap, self.n)


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in ``R^n`` (2 when ``n = 1``)."""

    return 2.0 * math.pi ** (n / 2.0) / math.gamma(n / 2.0)


def singular_profile(d: SingularData, r: Union[float, np.ndarray]) -> np.ndarray:
    """The data as a function of the radius ``|x|``."""

    r = np.abs(np.asarray(r, dtype=float))
    with np.errstate(divide="ignore"):
        raw = np.where(r > 0, r ** (-d.alpha), np.inf)
    return np.where(r <= d.R, np.minimum(d.cap, raw), 0.0)


def singular_data_eval(d: SingularData, x: Union[float, Sequence[float]]) -> float:
    """Evaluate the data at a point (a scalar in one dimension)."""

    coords = np.atleast_1d(np.asarray(x, dtype=float))
    if coords.size != d.n:
        raise InvalidQueryError(f"Point must have {d.n} coordinates.")
    return float(singular_profile(d, float(np.linalg.norm(coords))))


def singular_data_mass(d: SingularData) -> float:
    """``int w_0 dx`` in closed form."""

    rho_c = min(d.cap_radius, d.R)
    capped = d.cap * rho_c**d.n / d.n if rho_c > 0 else 0.0
    tail = (d.R ** (d.n - d.alpha) - rho_c ** (d.n - d.alpha)) / (d.n - d.alpha)
    return sphere_area(d.n) * (capped + tail)


# ---------------------------------------------------------------------------
# Kernels in the radial variable


def radial_whole_space_density(n: int, r: float, rho: np.ndarray, t: float) -> np.ndarray:
    """``q`` with ``rho^(n-1) q(r, rho; t) d rho`` the radial law of ``G_n``.

    ``q = (1/2t) (r rho)^-nu exp(-(r - rho)^2/4t) ive(nu, r rho / 2t)`` with
    ``nu = n/2 - 1``; the small-argument limit of ``ive`` is used when
    ``r rho`` vanishes.
    """

    nu = 0.5 * n - 1.0
    rho = np.asarray(rho, dtype=float)
    prod = r * rho
    z = prod / (2.0 * t)
    gauss = np.exp(-((r - rho) ** 2) / (4.0 * t))
    limit = math.exp(-nu * math.log(4.0 * t) - gammaln(nu + 1.0))
    small = z < 1e-12
    with np.errstate(divide="ignore", invalid="ignore"):
        bessel = np.where(small, limit, prod ** (-nu) * ive(nu, np.where(small, 1.0, z)))
    return gauss * bessel / (2.0 * t)


def ball_defect_envelope(n: int, clearance: float, t: float) -> float:
    """``max_{s <= t} (4 pi s)^(-n/2) exp(-clearance^2 / 4s)``."""

    s = min(t, clearance * clearance / (2.0 * n))
    return (4.0 * math.pi * s) ** (-0.5 * n) * math.exp(-clearance * clearance / (4.0 * s))


def _check_domain(dom: EvolutionDomain, d: SingularData) -> None:
    if dom is None:
        return
    if isinstance(dom, Interval):
        if d.n != 1:
            raise InvalidQueryError("Interval domains carry one-dimensional data only.")
        if not d.R < dom.a:
            raise InvalidQueryError(f"The support [-{d.R:g}, {d.R:g}] must sit inside (-{dom.a:g}, {dom.a:g}).")
        return
    if isinstance(dom, Ball):
        if dom.n != d.n:
            raise InvalidQueryError(f"Ball dimension {dom.n} differs from data dimension {d.n}.")
        if not d.R < dom.radius:
            raise InvalidQueryError(f"The support radius {d.R:g} must be below the ball radius {dom.radius:g}.")
        return
    raise InvalidQueryError(f"Singular data evolves on intervals, balls or the whole space, not {type(dom).__name__}.")


def _pieces(d: SingularData, centre: float, t: float) -> List[Tuple[float, float, bool]]:
    rho_c = d.cap_radius
    cuts = {0.0, d.R}
    if 0.0 < rho_c < d.R:
        cuts.add(rho_c)
    width = WINDOW_WIDTHS * math.sqrt(t)
    for c in (centre - width, centre + width):
        if 0.0 < c < d.R:
            cuts.add(c)
    ordered = sorted(cuts)
    return [(lo, hi, hi <= rho_c) for lo, hi in zip(ordered[:-1], ordered[1:])]


def evolve_point(
    dom: EvolutionDomain,
    d: SingularData,
    x: float,
    t: float,
    *,
    b: Optional[SeriesBudget] = None,
    panels: int = DEFAULT_PANELS,
) -> Tuple[float, float]:
    """Return ``(w(x, t), error estimate)`` for the evolved data.

    ``x`` is a signed coordinate in one dimension and a radius otherwise.  On a
    ball the value is the whole-space evolution minus the boundary defect,
    which is a lower estimate of the Dirichlet evolution.
    """

    _check_domain(dom, d)
    if t < T_MIN:
        raise InvalidQueryError(f"Time t={t!r} is below the floor t_min={T_MIN:g}.")
    if panels < 2 or panels % 2:
        raise InvalidQueryError("Panel count must be a positive even number.")
    n = d.n
    if isinstance(dom, Interval) and abs(x) > dom.a:
        raise InvalidQueryError(f"x={x:g} lies outside (-{dom.a:g}, {dom.a:g}).")
    if isinstance(dom, Ball) and abs(x) > dom.radius:
        raise InvalidQueryError(f"r={x:g} lies outside the ball of radius {dom.radius:g}.")

    if n == 1:
        if isinstance(dom, Interval):
            def density(rho: np.ndarray) -> np.ndarray:
                return np.asarray(interval_kernel(dom, x, rho, t, b)) + np.asarray(interval_kernel(dom, x, -rho, t, b))
        else:
            def density(rho: np.ndarray) -> np.ndarray:
                return gaussian_values(1, (x - rho) ** 2, t) + gaussian_values(1, (x + rho) ** 2, t)
        weight_power = 0
    else:
        r = abs(float(x))

        def density(rho: np.ndarray) -> np.ndarray:
            return radial_whole_space_density(n, r, rho, t)

        weight_power = n - 1

    power = n - d.alpha
    value = 0.0
    error = 0.0
    for lo, hi, capped in _pieces(d, abs(float(x)), t):
        if capped:
            nodes = np.linspace(lo, hi, panels + 1)
            f = d.cap * density(nodes) * nodes**weight_power
        else:
            nodes = np.linspace(lo**power, hi**power, panels + 1)
            f = density(nodes ** (1.0 / power)) / power
        fine = simpson(f, x=nodes)
        coarse = simpson(f[::2], x=nodes[::2])
        value += fine
        error += abs(fine - coarse) / 15.0

    # Values below the floor are zero to working precision: near a wall or far
    # from the support the relative error of a vanishing value means nothing.
    floor = ERROR_FLOOR * singular_data_mass(d) * (4.0 * math.pi * t) ** (-0.5 * n)
    scale = max(abs(value), floor)
    if isinstance(dom, Ball):
        defect = singular_data_mass(d) * ball_defect_envelope(n, dom.radius - d.R, t)
        value = max(value - defect, 0.0)

    if error > ERROR_LIMIT * scale:
        raise NumericalFailure(
            f"Quadrature did not converge at x={x:g}, t={t:g}: estimated error {error:.3g} for value {value:.6g}."
        )
    if error > ERROR_TARGET * scale:
        logger.warning("Quadrature error %.3g exceeds target at x=%g, t=%g (value %.6g)", error, x, t, value)
    return float(value), float(error)


@dataclass
class Profile:
    """Evolved profile on an evaluation grid at one time."""

    x: np.ndarray
    t: float
    w: np.ndarray
    error: np.ndarray

    def rows(self) -> List[Tuple[float, float, float]]:
        return [(float(xv), self.t, float(wv)) for xv, wv in zip(self.x, self.w)]


def evolve_singular(
    dom: EvolutionDomain,
    d: SingularData,
    t: float,
    xs: Optional[Sequence[float]] = None,
    *,
    b: Optional[SeriesBudget] = None,
    panels: int = DEFAULT_PANELS,
) -> Profile:
    """Evaluate the evolved data at ``xs`` (default: 41 points from the origin outwards)."""

    if xs is None:
        if isinstance(dom, Interval):
            extent = dom.a
        elif isinstance(dom, Ball):
            extent = dom.radius
        else:
            extent = 2.0 * d.R
        xs = np.linspace(0.0, extent, 41)
    xs = np.asarray(xs, dtype=float)
    values = np.empty(xs.shape)
    errors = np.empty(xs.shape)
    for i, xv in enumerate(xs):
        values[i], errors[i] = evolve_point(dom, d, float(xv), t, b=b, panels=panels)
    return Profile(x=xs, t=float(t), w=values, error=errors)


# ---------------------------------------------------------------------------
# Persistence of largeness


@dataclass
class InfimumM:
    """Grid minimum of the whole-space evolution on ``|x| = R`` for ``t <= T``."""

    M: float
    T: float
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    values: np.ndarray = field(default_factory=lambda: np.empty(0))


def domain_clearance(dom: Union[Interval, Ball], d: SingularData) -> float:
    """Distance from the support ball to the boundary."""

    _check_domain(dom, d)
    if isinstance(dom, Interval):
        return dom.a - d.R
    if isinstance(dom, Ball):
        return dom.radius - d.R
    raise InvalidQueryError("A bounded domain is required.")


def infimum_M(
    dom: Union[Interval, Ball],
    d: SingularData,
    *,
    times: int = 32,
    panels: int = DEFAULT_PANELS,
) -> InfimumM:
    """Minimum of the whole-space evolution at ``|x| = R`` over ``t`` in ``(0, T]``.

    ``T = eps^2 / n`` with ``eps`` the clearance of the support from the
    boundary of ``dom``.  The grid is geometric from ``1e-8 T`` to ``T``.
    """

    eps = domain_clearance(dom, d)
    T = eps * eps / d.n
    grid = np.geomspace(max(1e-8 * T, T_MIN), T, times)
    values = np.array([evolve_point(None, d, d.R, float(t), panels=panels)[0] for t in grid])
    M = float(values.min())
    if not M > 0:
        raise NumericalFailure(f"Non-positive infimum M={M!r}; the quadrature grid is inadequate.")
    return InfimumM(M=M, T=T, times=grid, values=values)


@dataclass(frozen=True)
class CertificateSample:
    phi: float
    r: float
    tau: float


@dataclass
class LargenessCertificate:
    """Measured constants for ``w >= phi`` on ``|x| <= sigma phi^(-1/alpha)``, ``t <= sigma phi^(-2/alpha)``."""

    alpha: float
    R: float
    n: int
    sigma: float
    phi_star: float
    M: float
    samples: List[CertificateSample] = field(default_factory=list)
    unattained: List[float] = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return bool(self.unattained) or not self.samples

    def to_dict(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "R": self.R,
            "n": self.n,
            "sigma": self.sigma,
            "phi_star": self.phi_star,
            "M": self.M,
            "samples": [[s.phi, s.r, s.tau] for s in self.samples],
            "unattained": list(self.unattained),
        }


def _bisect_log(predicate: Callable[[float], bool], lo: float, hi: float, iterations: int) -> float:
    """Largest value in ``[lo, hi]`` (log scale) where ``predicate`` holds; ``predicate(lo)`` is true."""

    for _ in range(iterations):
        mid = math.sqrt(lo * hi)
        if predicate(mid):
            lo = mid
        else:
            hi = mid
    return lo


def largeness_certificate(
    dom: Union[Interval, Ball],
    d: SingularData,
    phis: Sequence[float],
    *,
    time_levels: int = 8,
    iterations: int = 48,
    panels: int = DEFAULT_PANELS,
    infimum: Optional[InfimumM] = None,
    progress_callback: Optional[Callable[[str], None]] = None,
) -> LargenessCertificate:
    """Measure the radius and time over which the evolved data stays above each ``phi``.

    For each threshold the persistence time ``tau`` is where the value at the
    origin falls to ``phi``; the certified time is ``tau / 2`` and ``r`` is the
    largest radius at which the value stays ``>= phi`` at ``t = 0`` and at
    ``time_levels`` geometric times up to ``tau / 2``.
    """

    phis = [float(p) for p in phis]
    if not phis:
        raise InvalidQueryError("At least one threshold is required.")
    if any(b <= a for a, b in zip(phis, phis[1:])):
        raise InvalidQueryError("Thresholds must be strictly increasing.")
    eps = domain_clearance(dom, d)
    horizon = eps * eps / d.n
    info = infimum or infimum_M(dom, d, panels=panels)
    phi_star = min(info.M, d.R ** (-d.alpha))
    cert = LargenessCertificate(alpha=d.alpha, R=d.R, n=d.n, sigma=0.0, phi_star=phi_star, M=info.M)

    def w(x: float, t: float) -> float:
        return evolve_point(dom, d, x, t, panels=panels)[0]

    for phi in phis:
        if phi <= phi_star:
            logger.warning("Threshold %g does not exceed phi_star=%g", phi, phi_star)
        t_floor = 10.0 * T_MIN
        if w(0.0, t_floor) < phi:
            logger.warning("Threshold %g is not attained at the origin", phi)
            cert.unattained.append(phi)
            continue
        if w(0.0, horizon) >= phi:
            tau = horizon
        else:
            tau = _bisect_log(lambda t: w(0.0, t) >= phi, t_floor, horizon, iterations)
        held = 0.5 * tau
        levels = np.geomspace(max(1e-3 * held, T_MIN), held, time_levels)
        r_max = min(phi ** (-1.0 / d.alpha), d.R)

        def holds(r: float) -> bool:
            return all(w(r, float(t)) >= phi for t in levels)

        r_lo = 1e-6 * r_max
        if not holds(r_lo):
            logger.warning("Threshold %g fails even at r=%g", phi, r_lo)
            cert.unattained.append(phi)
            continue
        r = r_max if holds(r_max) else _bisect_log(holds, r_lo, r_max, iterations)
        cert.samples.append(CertificateSample(phi=phi, r=r, tau=held))
        message = f"phi={phi:g}: r={r:.6g} tau={held:.6g}"
        logger.debug(message)
        if progress_callback is not None:
            progress_callback(message)

    if cert.unattained:
        cert.samples = []
        return cert
    cert.sigma = min(min(s.r * s.phi ** (1.0 / d.alpha), s.tau * s.phi ** (2.0 / d.alpha)) for s in cert.samples)
    return cert


def fit_scaling_exponents(cert: LargenessCertificate) -> Tuple[float, float]:
    """Least-squares slopes of ``log r`` and ``log tau`` against ``log phi``."""

    if len(cert.samples) < 4:
        raise InvalidQueryError(f"Need at least 4 samples to fit exponents, got {len(cert.samples)}.")
    phis = np.array([s.phi for s in cert.samples])
    if np.ptp(np.log10(phis)) == 0:
        raise NumericalFailure("Degenerate regression: every threshold is equal.")
    if np.ptp(np.log10(phis)) < 1.0:
        raise InvalidQueryError("Thresholds must span at least one decade.")
    log_phi = np.log(phis)
    p_r = float(np.polyfit(log_phi, np.log([s.r for s in cert.samples]), 1)[0])
    p_t = float(np.polyfit(log_phi, np.log([s.tau for s in cert.samples]), 1)[0])
    return p_r, p_t


__all__ = [
    "SingularData",
    "Profile",
    "InfimumM",
    "CertificateSample",
    "LargenessCertificate",
    "sphere_area",
    "singular_profile",
    "singular_data_eval",
    "singular_data_mass",
    "radial_whole_space_density",
    "ball_defect_envelope",
    "evolve_point",
    "evolve_singular",
    "domain_clearance",
    "infimum_M",
    "largeness_certificate",
    "fit_scaling_exponents",
]
